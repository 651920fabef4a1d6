"""Periodic RTT and CPU telemetry written as CSV.

Both recorders run on a fixed schedule anchored at their start time, so in
virtual mode consecutive rows are exactly one interval apart no matter how
long a probe round takes.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence
from urllib.parse import urlsplit

from .clock import VirtualClock
from .errors import ParseError
from .netsim import PoissonParams, poisson_sample
from .origin import CpuCounters, parse_cpu_metrics
from .series import MetricSeries, SeriesRecorder
from .topology import RecorderConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RttSample:
    timestamp: str
    server: str
    rtt_ms: float | None


@dataclass(frozen=True)
class CpuSample:
    timestamp: str
    instance: str
    utilization_pct: float | None


def modified_rtt(raw_rtt_ms: float, lambda_ms: float, rng: random.Random) -> float:
    """Raw RTT plus a Poisson(lambda) draw; expectation is raw + lambda."""
    if raw_rtt_ms < 0:
        raise ValueError("raw RTT must be >= 0")
    return float(raw_rtt_ms) + poisson_sample(PoissonParams(lambda_ms), rng)


def _periodic(clock, count: int, interval_s: float, body: Callable[[int], None]):
    start = clock.now_ms
    for i in range(count):
        body(i)
        if i + 1 < count:
            due = start + (i + 1) * interval_s * 1000.0
            yield max(0.0, (due - clock.now_ms) / 1000.0)


def ping_rounds_activity(servers: Sequence[str], cfg: RecorderConfig,
                         probe: Callable[[str], float | None], clock, rng: random.Random,
                         lambda_ms: float = 200.0, output_path: str | Path | None = None):
    if not servers:
        raise ValueError("servers must be nonempty")
    rec = SeriesRecorder("rtt", servers, output_path)

    def one_round(_: int) -> None:
        ts = clock.timestamp()
        row = []
        for server in servers:
            raw = probe(server)
            row.append(None if raw is None else modified_rtt(raw, lambda_ms, rng))
        rec.record(ts, row)

    try:
        yield from _periodic(clock, cfg.num_pings, cfg.ping_interval_s, one_round)
    finally:
        rec.close()
    return rec.series


def record_ping_rounds(servers: Sequence[str], cfg: RecorderConfig, *,
                       probe: Callable[[str], float | None], clock=None,
                       rng: random.Random | None = None, lambda_ms: float = 200.0,
                       output_path: str | Path | None = None) -> MetricSeries:
    """Run ``cfg.num_pings`` ping rounds; the returned series matches the CSV.

    ``probe`` returns a raw RTT in ms or ``None`` on failure, which is written
    as ``N/A``.  ``output_path`` defaults to ``cfg.ping_output_path``.
    """
    clock = clock if clock is not None else VirtualClock()
    rng = rng if rng is not None else random.Random(0)
    path = cfg.ping_output_path if output_path is None else output_path
    return clock.run_process(
        ping_rounds_activity(servers, cfg, probe, clock, rng, lambda_ms, path), "ping-recorder")


def fetch_cpu_utilization(endpoint: str, lambda_pct: float, rng: random.Random, *,
                          fetch: Callable[[str], str | None],
                          previous: dict[str, CpuCounters],
                          instances: Sequence[str] = ()) -> dict[str, float | None]:
    """Scrape one metrics endpoint and compute noisy utilization per instance.

    Utilization is ``100 * d_active / d_total`` over the interval since the
    previous scrape kept in ``previous`` (updated in place), plus a
    Poisson(lambda_pct) draw.  An instance seen for the first time, or with no
    elapsed total time, yields ``None``; so does every instance in
    ``instances`` when the scrape fails.
    """
    text = fetch(endpoint)
    counters: dict[str, CpuCounters] = {}
    if text is not None:
        try:
            counters = parse_cpu_metrics(text)
        except ParseError as exc:
            logger.warning("bad metrics from %s: %s", endpoint, exc)
    out: dict[str, float | None] = {inst: None for inst in instances}
    for inst, cur in counters.items():
        prev = previous.get(inst)
        previous[inst] = cur
        if prev is None:
            out[inst] = None
            continue
        d_total = cur.total_cpu_s - prev.total_cpu_s
        if d_total <= 0:
            out[inst] = None
            continue
        base = 100.0 * (cur.active_cpu_s - prev.active_cpu_s) / d_total
        out[inst] = base + poisson_sample(PoissonParams(lambda_pct), rng)
    return out


def _instance_map(endpoints: Mapping[str, str] | Sequence[str]) -> dict[str, str]:
    if isinstance(endpoints, Mapping):
        return dict(endpoints)
    return {urlsplit(url).netloc or url: url for url in endpoints}


def cpu_log_activity(endpoints: Mapping[str, str] | Sequence[str], cfg: RecorderConfig,
                     fetch: Callable[[str], str | None], clock, rng: random.Random,
                     lambda_pct: float = 30.0, output_path: str | Path | None = None):
    by_instance = _instance_map(endpoints)
    if not by_instance:
        raise ValueError("endpoints must be nonempty")
    columns = list(by_instance)
    rec = SeriesRecorder("cpu", columns, output_path)
    previous: dict[str, CpuCounters] = {}

    def one_round(_: int) -> None:
        ts = clock.timestamp()
        row = []
        for inst in columns:
            got = fetch_cpu_utilization(by_instance[inst], lambda_pct, rng, fetch=fetch,
                                        previous=previous, instances=[inst])
            row.append(got.get(inst))
        rec.record(ts, row)

    try:
        yield from _periodic(clock, cfg.cpu_iterations, cfg.cpu_interval_s, one_round)
    finally:
        rec.close()
    return rec.series


def log_cpu(endpoints: Mapping[str, str] | Sequence[str], cfg: RecorderConfig, *,
            fetch: Callable[[str], str | None], clock=None, rng: random.Random | None = None,
            lambda_pct: float = 30.0, output_path: str | Path | None = None) -> MetricSeries:
    """Scrape every endpoint ``cfg.cpu_iterations`` times, ``cfg.cpu_interval_s`` apart.

    ``endpoints`` maps column (instance) names to metrics URLs; a plain list
    of URLs uses each URL's host as the instance name.
    """
    clock = clock if clock is not None else VirtualClock()
    rng = rng if rng is not None else random.Random(0)
    path = cfg.cpu_output_path if output_path is None else output_path
    return clock.run_process(
        cpu_log_activity(endpoints, cfg, fetch, clock, rng, lambda_pct, path), "cpu-logger")
