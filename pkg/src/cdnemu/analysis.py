"""Box statistics, time series datasets and the cross-configuration report."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import EmptySeriesError, InsufficientConfigsError
from .series import MetricSeries, read_series_csv

logger = logging.getLogger(__name__)

TREND_TOLERANCE_MS = 1.0
TUKEY_K = 1.5


@dataclass(frozen=True)
class BoxStats:
    n: int
    median: float
    q1: float
    q3: float
    iqr: float
    whisker_low: float
    whisker_high: float
    outliers: list[float]
    mean: float
    missing_count: int = 0

    @property
    def lower_fence(self) -> float:
        return self.q1 - TUKEY_K * self.iqr

    @property
    def upper_fence(self) -> float:
        return self.q3 + TUKEY_K * self.iqr


def quantile_sorted(xs: Sequence[float], p: float) -> float:
    """Linear interpolation between order statistics at rank ``(n - 1) * p``."""
    if not xs:
        raise EmptySeriesError("no values")
    h = (len(xs) - 1) * p
    lo = math.floor(h)
    hi = min(lo + 1, len(xs) - 1)
    return xs[lo] + (h - lo) * (xs[hi] - xs[lo])


def _present(values: Iterable[float | None]) -> tuple[list[float], int]:
    present, missing = [], 0
    for v in values:
        if v is None or not math.isfinite(v):
            missing += 1
        else:
            present.append(float(v))
    return present, missing


def summarize(values: Iterable[float | None]) -> BoxStats:
    """Tukey box statistics over the present values; absences are counted."""
    present, missing = _present(values)
    if not present:
        raise EmptySeriesError("series has no present values")
    xs = sorted(present)
    q1 = quantile_sorted(xs, 0.25)
    median = quantile_sorted(xs, 0.5)
    q3 = quantile_sorted(xs, 0.75)
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - TUKEY_K * iqr, q3 + TUKEY_K * iqr
    inside = [x for x in xs if lo_fence <= x <= hi_fence]
    outliers = [x for x in xs if x < lo_fence or x > hi_fence]
    return BoxStats(
        n=len(xs), median=median, q1=q1, q3=q3, iqr=iqr,
        whisker_low=inside[0], whisker_high=inside[-1],
        outliers=outliers, mean=math.fsum(xs) / len(xs), missing_count=missing,
    )


@dataclass(frozen=True)
class TraceDataset:
    """Points of one column over time; ``None`` values are gaps."""
    column: str
    points: list[tuple[str, float | None]]
    mean: float

    @property
    def gaps(self) -> int:
        return sum(1 for _, v in self.points if v is None)


def timeseries_with_mean(series: MetricSeries, column: str) -> TraceDataset:
    values = series.column(column)
    present, _ = _present(values)
    if not present:
        raise EmptySeriesError(f"column {column!r} has no present values")
    points = [(ts, v if v is not None and math.isfinite(v) else None)
              for ts, v in zip(series.timestamps, values)]
    return TraceDataset(column, points, math.fsum(present) / len(present))


@dataclass
class ConfigStats:
    server_count: int
    rtt: BoxStats
    cpu: BoxStats | None
    per_server: dict[str, BoxStats] | None = None

    @property
    def rtt_mean_ms(self) -> float:
        return self.rtt.mean

    @property
    def cpu_mean_pct(self) -> float | None:
        return None if self.cpu is None else self.cpu.mean


@dataclass
class TradeoffReport:
    per_config: dict[str, ConfigStats]
    rtt_trend: str
    narrative: list[str] = field(default_factory=list)

    @property
    def order(self) -> list[str]:
        return list(self.per_config)

    def to_dict(self) -> dict:
        out = {}
        for name, st in self.per_config.items():
            out[name] = {
                "server_count": st.server_count,
                "rtt_mean_ms": st.rtt_mean_ms,
                "rtt_median_ms": st.rtt.median,
                "rtt_iqr": [st.rtt.q1, st.rtt.q3],
                "rtt_whiskers": [st.rtt.whisker_low, st.rtt.whisker_high],
                "cpu_mean_pct": st.cpu_mean_pct,
                "cpu_median_pct": None if st.cpu is None else st.cpu.median,
            }
        return {"per_config": out, "rtt_trend": self.rtt_trend, "narrative": self.narrative}


def classify_trend(means: Sequence[float], tol: float = TREND_TOLERANCE_MS) -> str:
    """``flat`` when every mean is within ``tol`` of every other; otherwise
    ``increasing``/``decreasing`` when each step respects the tolerance, and
    the sign of last minus first when the steps disagree."""
    if max(means) - min(means) <= tol:
        return "flat"
    pairs = list(zip(means, means[1:]))
    if all(b >= a - tol for a, b in pairs):
        return "increasing"
    if all(b <= a + tol for a, b in pairs):
        return "decreasing"
    return "increasing" if means[-1] > means[0] else "decreasing"


def _fmt(x: float | None, unit: str) -> str:
    return "n/a" if x is None else f"{x:.1f}{unit}"


def tradeoff_report(datasets: Mapping[str, tuple[MetricSeries, MetricSeries | None]],
                    per_server: bool = False) -> TradeoffReport:
    """Pooled RTT/CPU statistics per configuration, ordered by server count."""
    if len(datasets) < 2:
        raise InsufficientConfigsError(f"need at least 2 configurations, got {len(datasets)}")
    order = sorted(datasets, key=lambda k: (len(datasets[k][0].columns), k))
    per_config: dict[str, ConfigStats] = {}
    for name in order:
        rtt, cpu = datasets[name]
        cpu_stats = None
        if cpu is not None:
            try:
                cpu_stats = summarize(cpu.pooled())
            except EmptySeriesError:
                logger.warning("%s: no CPU samples", name)
        breakdown = None
        if per_server:
            breakdown = {}
            for col in rtt.columns:
                try:
                    breakdown[col] = summarize(rtt.column(col))
                except EmptySeriesError:
                    pass  # unresponsive server
        per_config[name] = ConfigStats(len(rtt.columns), summarize(rtt.pooled()), cpu_stats,
                                       breakdown)
    trend = classify_trend([per_config[n].rtt_mean_ms for n in order])
    report = TradeoffReport(per_config, trend)
    report.narrative = _narrative(report)
    return report


def _narrative(report: TradeoffReport) -> list[str]:
    lines = []
    for name, st in report.per_config.items():
        r = st.rtt
        lines.append(
            f"{name} ({st.server_count} servers): RTT median {_fmt(r.median, ' ms')}, "
            f"mean {_fmt(r.mean, ' ms')}, IQR {r.q1:.1f}-{r.q3:.1f} ms, "
            f"whiskers {r.whisker_low:.1f}-{r.whisker_high:.1f} ms, "
            f"{len(r.outliers)} outliers, {r.missing_count} missing")
        if st.cpu is not None:
            c = st.cpu
            lines.append(
                f"{name}: CPU median {_fmt(c.median, '%')}, mean {_fmt(c.mean, '%')}, "
                f"IQR {c.q1:.1f}-{c.q3:.1f}%")
    names = list(report.per_config)
    first, last = report.per_config[names[0]], report.per_config[names[-1]]
    lines.append(
        f"RTT trend over server count: {report.rtt_trend} "
        f"({first.rtt_mean_ms:.1f} ms at {first.server_count} servers, "
        f"{last.rtt_mean_ms:.1f} ms at {last.server_count} servers)")
    cpu_means = [s.cpu_mean_pct for s in report.per_config.values() if s.cpu is not None]
    if cpu_means:
        spread = max(cpu_means) - min(cpu_means)
        lines.append(
            f"CPU means span {min(cpu_means):.1f}-{max(cpu_means):.1f}% "
            f"(spread {spread:.1f} points) while mean RTT changes by "
            f"{last.rtt_mean_ms - first.rtt_mean_ms:+.1f} ms")
    return lines


def load_series_csv(path: str | Path, metric: str = "rtt") -> MetricSeries:
    """Read a recorder CSV; ``N/A`` cells become absences."""
    return read_series_csv(path, metric)
