"""Experiment lifecycle: build, provision, start, run, stop, analyze.

Output layout of one run::

    <out>/scenario.json          the scenario bytes as given
    <out>/effective_config.json  config after --quick / --seed overrides
    <out>/ping_results1000.csv   RTT rounds (name from the recorder config)
    <out>/cpu_results.csv        CPU scrapes
    <out>/decisions.csv          one row per gateway selection
    <out>/mutations.csv          one row per delay-mutator step
    <out>/streams/session-N.{json,csv}
    <out>/report/                summary.json, charts and chart data
"""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .analysis import ConfigStats, TradeoffReport, summarize, tradeoff_report
from .client import StreamReport, StreamSession, stream_activity
from .clock import make_clock
from .errors import EmptySeriesError, InsufficientConfigsError, InvalidConfigError, PhaseError
from .gateway import DECISION_LOG_HEADER, Gateway, decision_row
from .netsim import DelayMutator, Network, derive_rng
from .origin import OriginServer
from .plots import render_plots
from .recorder import cpu_log_activity, ping_rounds_activity
from .series import CsvSink, MetricSeries, read_series_csv
from .topology import ExperimentConfig, build_topology, load_scenario, mutator_target, \
    validate_config
from .transport import VirtualTransport, WallTransport, serve_node

logger = logging.getLogger(__name__)

MUTATION_LOG_HEADER = ["timestamp", "link_id", "delay_ms", "sleep_s"]
SHUTDOWN_DEADLINE_S = 5.0


@dataclass
class RunArtifacts:
    run_id: str
    config_snapshot: ExperimentConfig
    scenario_path: Path
    ping_csv: Path
    cpu_csv: Path
    stream_reports: list[Path]
    decision_log: Path
    mutation_log: Path
    report_dir: Path
    streams: list[StreamReport] = dataclasses.field(default_factory=list)


def coordination_overhead_ms(cfg: ExperimentConfig) -> float:
    """Per-probe gateway coordination cost; zero for a single server."""
    return cfg.overhead_ms_per_server * (cfg.server_count - 1)


class _Phase:
    def __init__(self):
        self.name = "validate"

    def __call__(self, name: str) -> None:
        logger.info("phase %s", name)
        self.name = name


def _resolve(out: Path, name: str) -> Path:
    p = Path(name)
    return p if p.is_absolute() else out / p


def run_experiment(scenario: str | Path | ExperimentConfig, out_dir: str | Path, *,
                   quick: bool = False, wall: bool | None = None,
                   seed: int | None = None) -> RunArtifacts:
    """Run one scenario end to end and return the artifact paths.

    ``scenario`` is a preset name, a JSON path, or a config object.  Invalid
    scenarios raise :class:`InvalidConfigError` / :class:`ScenarioError`
    directly; failures after validation raise :class:`PhaseError`.
    """
    if isinstance(scenario, ExperimentConfig):
        cfg, raw = scenario, scenario.to_json().encode("utf-8")
    else:
        cfg, raw = load_scenario(scenario)
    if quick:
        cfg = cfg.quick()
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed)
    if wall is not None:
        cfg = dataclasses.replace(cfg, clock_mode="wall" if wall else "virtual")
    violations = validate_config(cfg)
    if violations:
        raise InvalidConfigError(violations)

    phase = _Phase()
    out = Path(out_dir)
    sinks: list[CsvSink] = []
    listeners = []
    clock = None
    try:
        phase("build")
        out.mkdir(parents=True, exist_ok=True)
        (out / "scenario.json").write_bytes(raw)
        (out / "effective_config.json").write_text(cfg.to_json(), encoding="utf-8")
        ping_csv = _resolve(out, cfg.recorder.ping_output_path)
        cpu_csv = _resolve(out, cfg.recorder.cpu_output_path)
        decision_sink = CsvSink(out / "decisions.csv", DECISION_LOG_HEADER)
        mutation_sink = CsvSink(out / "mutations.csv", MUTATION_LOG_HEADER)
        sinks += [decision_sink, mutation_sink]
        for s in sinks:
            s.ensure_header()

        clock = make_clock(cfg.clock_mode)
        topo = build_topology(cfg)
        network = Network(clock)
        for server, base in zip(topo.servers, cfg.base_rtt_ms):
            network.add_link(topo.link_between(topo.gateway, server), base / 2.0)
            network.add_link(topo.link_between(topo.client, server), base / 2.0)

        phase("provision")
        origins = {}
        for server in topo.servers:
            origin = OriginServer(server, clock, base_load_pct=cfg.cpu_base_load_pct,
                                  throttle_bytes_per_s=cfg.server_rate_bytes_per_s)
            v = cfg.video
            origin.provision(v.video_id, v.segment_count, v.segment_size_bytes,
                             v.segment_duration_s, v.init_size_bytes)
            origins[server] = origin

        def log_decision(ts, filename, decision):
            decision_sink.write(decision_row(ts, filename, decision))

        if cfg.clock_mode == "wall":
            transport = WallTransport(clock, network, topo, timeout_s=cfg.probe_timeout_s)
        else:
            transport = VirtualTransport(clock, network, topo, timeout_s=cfg.probe_timeout_s)
        gateway = Gateway(topo.servers, transport, name=topo.gateway,
                          rng=derive_rng(cfg.seed, "gateway"),
                          coordination_ms=coordination_overhead_ms(cfg),
                          on_decision=log_decision)
        nodes = {**origins, topo.gateway: gateway}
        for node, handler in nodes.items():
            if cfg.clock_mode == "wall":
                listener = serve_node(handler)
                listeners.append(listener)
                transport.register(node, listener.address)
            else:
                transport.register(node, handler)
        for server in cfg.down_servers:
            transport.mark_down(server)

        phase("start")
        procs_daemon = []
        if cfg.delay_mutator.enabled:
            link = topo.link_between(topo.gateway, mutator_target(cfg))
            mutator = DelayMutator(
                network, cfg.delay_mutator, link, derive_rng(cfg.seed, "mutator"),
                on_step=lambda ts, lk, d, s: mutation_sink.write([ts, lk, d, repr(s)]))
            procs_daemon.append(clock.spawn(mutator.run(), "delay-mutator", daemon=True))

        def probe(server: str):
            return gateway.ping_rtt(server).rtt_ms

        def fetch(url: str):
            resp = transport.call(topo.gateway, url)
            return resp.text if resp is not None and resp.status == 200 else None

        endpoints = {s: transport.base_url(s) + "metrics" for s in topo.servers}
        recorders = [
            clock.spawn(ping_rounds_activity(list(topo.servers), cfg.recorder, probe, clock,
                                             derive_rng(cfg.seed, "ping"),
                                             cfg.rtt_noise_lambda_ms, ping_csv), "ping-recorder"),
            clock.spawn(cpu_log_activity(endpoints, cfg.recorder, fetch, clock,
                                         derive_rng(cfg.seed, "cpu"), cfg.cpu_noise_lambda_pct,
                                         cpu_csv), "cpu-logger"),
        ]
        gw = transport.base_url(topo.gateway)
        sessions = []
        session_procs = []
        for i in range(cfg.client_sessions):
            session = StreamSession(
                manifest_url=f"{gw}manifest/{cfg.video.video_id}",
                redirect_base=f"{gw}cdn/",
                client_throttle=cfg.client_rate_bytes_per_s,
                out_dir=out / "streams" / f"session-{i + 1}",
                loop=cfg.client_loop,
                node=topo.client,
            )
            sessions.append(session)
            session_procs.append(clock.spawn(stream_activity(session, transport),
                                             f"session-{i + 1}"))

        phase("run")
        clock.join(recorders)

        phase("stop")
        for session in sessions:
            session.stop()
        if cfg.clock_mode == "wall":
            clock.join(session_procs, timeout=SHUTDOWN_DEADLINE_S)
        else:
            clock.join(session_procs)
        for proc in procs_daemon:
            clock.cancel(proc)
        stream_paths = []
        reports = []
        for i, proc in enumerate(session_procs):
            report: StreamReport = proc.result
            reports.append(report)
            base = out / "streams" / f"session-{i + 1}"
            report.write(base.with_suffix(".json"), base.with_suffix(".csv"))
            stream_paths += [base.with_suffix(".json"), base.with_suffix(".csv")]
        for s in sinks:
            s.close()

        phase("analyze")
        report_dir = out / "report"
        analyze_run(cfg.name, read_series_csv(ping_csv, "rtt"), read_series_csv(cpu_csv, "cpu"),
                    report_dir)
    except (InvalidConfigError, PhaseError):
        raise
    except Exception as exc:
        logger.error("run %s failed in phase %s: %s", cfg.name, phase.name, exc)
        raise PhaseError(phase.name, exc) from exc
    finally:
        if clock is not None:
            clock.shutdown()
        for s in sinks:
            s.close()
        for listener in listeners:
            listener.stop()

    return RunArtifacts(
        run_id=f"{cfg.name}-seed{cfg.seed}",
        config_snapshot=cfg,
        scenario_path=out / "scenario.json",
        ping_csv=ping_csv,
        cpu_csv=cpu_csv,
        stream_reports=stream_paths,
        decision_log=out / "decisions.csv",
        mutation_log=out / "mutations.csv",
        report_dir=report_dir,
        streams=reports,
    )


def single_config_report(name: str, rtt: MetricSeries, cpu: MetricSeries | None) -> TradeoffReport:
    """Report over one configuration (no trend to speak of)."""
    cpu_stats = None
    if cpu is not None:
        try:
            cpu_stats = summarize(cpu.pooled())
        except EmptySeriesError:
            pass
    stats = ConfigStats(len(rtt.columns), summarize(rtt.pooled()), cpu_stats)
    r = stats.rtt
    lines = [f"{name} ({stats.server_count} servers): RTT median {r.median:.1f} ms, "
             f"mean {r.mean:.1f} ms, IQR {r.q1:.1f}-{r.q3:.1f} ms"]
    if cpu_stats is not None:
        lines.append(f"{name}: CPU median {cpu_stats.median:.1f}%, mean {cpu_stats.mean:.1f}%")
    return TradeoffReport({name: stats}, "flat", lines)


def write_report(report: TradeoffReport, datasets, report_dir: Path) -> None:
    report_dir.mkdir(parents=True, exist_ok=True)
    render_plots(report, datasets, report_dir)
    (report_dir / "summary.json").write_text(
        json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    (report_dir / "narrative.txt").write_text("\n".join(report.narrative) + "\n",
                                              encoding="utf-8")


def analyze_run(name: str, rtt: MetricSeries, cpu: MetricSeries | None,
                report_dir: Path) -> TradeoffReport:
    report = single_config_report(name, rtt, cpu)
    write_report(report, {name: (rtt, cpu)}, report_dir)
    return report


def run_suite(presets: Sequence[str | Path], out_dir: str | Path, *, quick: bool = False,
              wall: bool | None = None, seed: int | None = None) -> TradeoffReport:
    """Run several scenarios and compare them in ``<out>/report``."""
    if len(presets) < 2:
        raise InsufficientConfigsError(f"need at least 2 scenarios, got {len(presets)}")
    out = Path(out_dir)
    datasets: dict[str, tuple[MetricSeries, MetricSeries]] = {}
    for source in presets:
        cfg, _ = load_scenario(source)
        name = cfg.name
        k = 2
        while name in datasets:
            name = f"{cfg.name}-{k}"
            k += 1
        arts = run_experiment(source, out / name, quick=quick, wall=wall, seed=seed)
        datasets[name] = (read_series_csv(arts.ping_csv, "rtt"),
                          read_series_csv(arts.cpu_csv, "cpu"))
    report = tradeoff_report(datasets)
    write_report(report, datasets, out / "report")
    return report
