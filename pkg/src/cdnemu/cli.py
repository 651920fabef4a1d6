"""Command line front end.

Exit codes: 0 success, 2 invalid input, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from urllib.parse import urlsplit

from .analysis import tradeoff_report
from .client import StreamSession, stream
from .clock import WallClock
from .errors import (CdnEmuError, InsufficientConfigsError, InvalidConfigError, ParseError,
                     PhaseError, ScenarioError)
from .gateway import Gateway
from .netsim import derive_rng
from .orchestrator import (analyze_run, coordination_overhead_ms, run_experiment, run_suite,
                           write_report)
from .origin import OriginServer
from .series import read_series_csv
from .topology import GATEWAY, load_scenario
from .transport import WallTransport, serve_node

logger = logging.getLogger("cdnemu")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3
INVALID_INPUT = (InvalidConfigError, ScenarioError, ParseError, InsufficientConfigsError)


def _rate(text: str) -> float | None:
    if text.lower() in ("none", "unlimited", "0"):
        return None
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError("rate must be > 0")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cdnemu", description="CDN emulation harness")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario end to end")
    run.add_argument("--scenario", required=True, help="preset name or scenario JSON file")
    run.add_argument("--seed", type=int)
    run.add_argument("--out", required=True, type=Path)
    run.add_argument("--quick", action="store_true", help="100 ping rounds, 100 CPU scrapes")
    run.add_argument("--wall", action="store_true", help="real sockets and real time")

    suite = sub.add_parser("suite", help="run several scenarios and compare them")
    suite.add_argument("--presets", required=True, help="comma separated presets or files")
    suite.add_argument("--out", required=True, type=Path)
    suite.add_argument("--seed", type=int)
    suite.add_argument("--quick", action="store_true")
    suite.add_argument("--wall", action="store_true")

    an = sub.add_parser("analyze", help="summarize recorded CSVs")
    an.add_argument("--inputs", nargs="+", required=True, metavar="NAME=RTT.csv,CPU.csv")
    an.add_argument("--out", required=True, type=Path)

    st = sub.add_parser("stream", help="stream a manifest over real HTTP")
    st.add_argument("--manifest", required=True)
    st.add_argument("--rate", type=_rate, default=None, help="client bytes/s (default unlimited)")
    st.add_argument("--out", required=True, type=Path)
    st.add_argument("--redirect-base", help="default: <manifest host>/cdn/")

    sv = sub.add_parser("serve", help="serve a scenario's gateway and origins over HTTP")
    sv.add_argument("--scenario", required=True)
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--port", type=int, default=0, help="gateway port; origins use port+1..")
    sv.add_argument("--duration", type=float, default=None, help="seconds; default forever")
    return p


def _parse_inputs(items: list[str]) -> dict:
    datasets = {}
    for item in items:
        name, sep, paths = item.partition("=")
        files = paths.split(",")
        if not sep or not name or len(files) not in (1, 2):
            raise ScenarioError(f"bad --inputs entry {item!r}; expected NAME=RTT.csv[,CPU.csv]")
        rtt = read_series_csv(files[0], "rtt")
        cpu = read_series_csv(files[1], "cpu") if len(files) == 2 else None
        datasets[name] = (rtt, cpu)
    return datasets


def cmd_run(args) -> int:
    arts = run_experiment(args.scenario, args.out, quick=args.quick,
                          wall=True if args.wall else None, seed=args.seed)
    print(json.dumps({
        "run_id": arts.run_id,
        "ping_csv": str(arts.ping_csv),
        "cpu_csv": str(arts.cpu_csv),
        "decision_log": str(arts.decision_log),
        "mutation_log": str(arts.mutation_log),
        "stream_reports": [str(p) for p in arts.stream_reports],
        "report_dir": str(arts.report_dir),
    }, indent=2))
    return EXIT_OK


def cmd_suite(args) -> int:
    presets = [p.strip() for p in args.presets.split(",") if p.strip()]
    report = run_suite(presets, args.out, quick=args.quick, wall=True if args.wall else None,
                       seed=args.seed)
    print("\n".join(report.narrative))
    return EXIT_OK


def cmd_analyze(args) -> int:
    datasets = _parse_inputs(args.inputs)
    if len(datasets) == 1:
        (name, (rtt, cpu)), = datasets.items()
        report = analyze_run(name, rtt, cpu, args.out)
    else:
        report = tradeoff_report(datasets)
        write_report(report, datasets, args.out)
    print("\n".join(report.narrative))
    return EXIT_OK


def cmd_stream(args) -> int:
    parts = urlsplit(args.manifest)
    if parts.scheme not in ("http",) or not parts.netloc:
        raise ScenarioError(f"manifest must be an http:// URL: {args.manifest!r}")
    base = args.redirect_base or f"http://{parts.netloc}/cdn/"
    transport = WallTransport(WallClock())
    session = StreamSession(args.manifest, base, args.rate, args.out / "segments")
    report = stream(session, transport)
    args.out.mkdir(parents=True, exist_ok=True)
    report.write(args.out / "stream_report.json", args.out / "segments.csv")
    print(f"{report.segments_fetched}/{report.segment_count} segments, {report.bytes} bytes, "
          f"{report.duration_ms:.0f} ms")
    return EXIT_OK if report.segments_failed == 0 else EXIT_RUNTIME


def cmd_serve(args) -> int:
    cfg, _ = load_scenario(args.scenario)
    clock = WallClock()
    transport = WallTransport(clock, timeout_s=cfg.probe_timeout_s)
    listeners = []
    try:
        for i, server in enumerate(cfg.server_names):
            origin = OriginServer(server, clock, base_load_pct=cfg.cpu_base_load_pct,
                                  throttle_bytes_per_s=cfg.server_rate_bytes_per_s)
            v = cfg.video
            origin.provision(v.video_id, v.segment_count, v.segment_size_bytes,
                             v.segment_duration_s, v.init_size_bytes)
            port = args.port + 1 + i if args.port else 0
            listener = serve_node(origin, args.host, port)
            listeners.append(listener)
            transport.register(server, listener.address)
            print(f"{server} http://{listener.address}/")
        gateway = Gateway(cfg.server_names, transport, name=GATEWAY,
                          rng=derive_rng(cfg.seed, "gateway"),
                          coordination_ms=coordination_overhead_ms(cfg))
        listener = serve_node(gateway, args.host, args.port)
        listeners.append(listener)
        print(f"gateway http://{listener.address}/manifest/{cfg.video.video_id}", flush=True)
        deadline = None if args.duration is None else time.monotonic() + args.duration
        while deadline is None or time.monotonic() < deadline:
            time.sleep(0.2)
    except KeyboardInterrupt:
        pass
    finally:
        for listener in listeners:
            listener.stop()
    return EXIT_OK


COMMANDS = {"run": cmd_run, "suite": cmd_suite, "analyze": cmd_analyze, "stream": cmd_stream,
            "serve": cmd_serve}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except INVALID_INPUT as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except PhaseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (CdnEmuError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
