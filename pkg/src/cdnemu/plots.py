"""Standalone SVG charts plus their data as CSV.

Layout is fixed (800x600) and every number is printed with a fixed format,
so the same input always yields the same bytes.
"""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

from .analysis import BoxStats, TraceDataset, TradeoffReport
from .series import MetricSeries, format_value

WIDTH, HEIGHT = 800, 600
LEFT, RIGHT, TOP, BOTTOM = 80, 30, 50, 70
COLORS = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2",
          "#7f7f7f")

PLOT_FILES = ("rtt_boxplot", "cpu_boxplot", "rtt_timeseries", "cpu_timeseries")


def _n(x: float) -> str:
    s = f"{x:.2f}"
    return "0.00" if s == "-0.00" else s


class _Canvas:
    def __init__(self, title: str, y_label: str, x_label: str):
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" '
            f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
            f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{WIDTH // 2}" y="28" text-anchor="middle" font-family="sans-serif" '
            f'font-size="18">{escape(title)}</text>',
            f'<text x="{WIDTH // 2}" y="{HEIGHT - 15}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="13">{escape(x_label)}</text>',
            f'<text x="20" y="{HEIGHT // 2}" text-anchor="middle" font-family="sans-serif" '
            f'font-size="13" transform="rotate(-90 20 {HEIGHT // 2})">{escape(y_label)}</text>',
        ]
        self.y0 = 0.0
        self.y1 = 1.0

    def set_range(self, lo: float, hi: float) -> None:
        if hi - lo < 1e-9:
            lo, hi = lo - 1.0, hi + 1.0
        pad = (hi - lo) * 0.05
        self.y0, self.y1 = lo - pad, hi + pad

    def y(self, v: float) -> float:
        span = HEIGHT - TOP - BOTTOM
        return HEIGHT - BOTTOM - (v - self.y0) / (self.y1 - self.y0) * span

    def add(self, element: str) -> None:
        self.parts.append(element)

    def axes(self, ticks: int = 5) -> None:
        x0, x1 = LEFT, WIDTH - RIGHT
        yb, yt = HEIGHT - BOTTOM, TOP
        self.add(f'<line x1="{x0}" y1="{yb}" x2="{x1}" y2="{yb}" stroke="black"/>')
        self.add(f'<line x1="{x0}" y1="{yb}" x2="{x0}" y2="{yt}" stroke="black"/>')
        for i in range(ticks + 1):
            v = self.y0 + (self.y1 - self.y0) * i / ticks
            py = _n(self.y(v))
            self.add(f'<line x1="{x0 - 5}" y1="{py}" x2="{x0}" y2="{py}" stroke="black"/>')
            self.add(f'<text x="{x0 - 8}" y="{py}" text-anchor="end" font-family="sans-serif" '
                     f'font-size="11" dominant-baseline="middle">{_n(v)}</text>')

    def text(self, x: float, y: float, label: str, anchor: str = "middle", size: int = 12,
             fill: str = "black") -> None:
        self.add(f'<text x="{_n(x)}" y="{_n(y)}" text-anchor="{anchor}" font-family="sans-serif" '
                 f'font-size="{size}" fill="{fill}">{escape(label)}</text>')

    def render(self) -> str:
        return "\n".join([*self.parts, "</svg>"]) + "\n"


def _box_svg(title: str, y_label: str, boxes: Sequence[tuple[str, BoxStats | None]]) -> str:
    c = _Canvas(title, y_label, "configuration")
    values = []
    for _, b in boxes:
        if b is not None:
            values += [b.whisker_low, b.whisker_high, *b.outliers]
    c.set_range(min(values, default=0.0), max(values, default=1.0))
    c.axes()
    slot = (WIDTH - LEFT - RIGHT) / max(len(boxes), 1)
    for i, (name, b) in enumerate(boxes):
        cx = LEFT + slot * (i + 0.5)
        half = min(40.0, slot * 0.3)
        color = COLORS[i % len(COLORS)]
        c.text(cx, HEIGHT - BOTTOM + 20, name)
        if b is None:
            c.text(cx, (TOP + HEIGHT - BOTTOM) / 2, "unresponsive", fill="#d62728")
            continue
        c.add(f'<line x1="{_n(cx)}" y1="{_n(c.y(b.whisker_low))}" x2="{_n(cx)}" '
              f'y2="{_n(c.y(b.q1))}" stroke="black"/>')
        c.add(f'<line x1="{_n(cx)}" y1="{_n(c.y(b.q3))}" x2="{_n(cx)}" '
              f'y2="{_n(c.y(b.whisker_high))}" stroke="black"/>')
        for w in (b.whisker_low, b.whisker_high):
            c.add(f'<line x1="{_n(cx - half / 2)}" y1="{_n(c.y(w))}" x2="{_n(cx + half / 2)}" '
                  f'y2="{_n(c.y(w))}" stroke="black"/>')
        top = c.y(b.q3)
        c.add(f'<rect x="{_n(cx - half)}" y="{_n(top)}" width="{_n(2 * half)}" '
              f'height="{_n(c.y(b.q1) - top)}" fill="{color}" fill-opacity="0.5" stroke="black"/>')
        c.add(f'<line x1="{_n(cx - half)}" y1="{_n(c.y(b.median))}" x2="{_n(cx + half)}" '
              f'y2="{_n(c.y(b.median))}" stroke="black" stroke-width="2"/>')
        for o in b.outliers:
            c.add(f'<circle cx="{_n(cx)}" cy="{_n(c.y(o))}" r="2" fill="none" stroke="black"/>')
        if b.missing_count:
            c.text(cx, TOP + 12, f"{b.missing_count} unresponsive", size=11, fill="#d62728")
    return c.render()


def _trace_svg(title: str, y_label: str, traces: Sequence[tuple[str, TraceDataset | None]]) -> str:
    c = _Canvas(title, y_label, "sample")
    values = [v for _, t in traces if t is not None for _, v in t.points if v is not None]
    values += [t.mean for _, t in traces if t is not None]
    c.set_range(min(values, default=0.0), max(values, default=1.0))
    c.axes()
    longest = max((len(t.points) for _, t in traces if t is not None), default=1)
    span_x = WIDTH - LEFT - RIGHT

    def px(i: int) -> float:
        return LEFT + (span_x * i / (longest - 1) if longest > 1 else span_x / 2)

    for k, (name, t) in enumerate(traces):
        color = COLORS[k % len(COLORS)]
        ly = TOP + 15 + 16 * k
        c.add(f'<line x1="{WIDTH - RIGHT - 170}" y1="{ly}" x2="{WIDTH - RIGHT - 150}" y2="{ly}" '
              f'stroke="{color}" stroke-width="2"/>')
        if t is None:
            c.text(WIDTH - RIGHT - 145, ly + 4, f"{name} unresponsive", anchor="start", size=11,
                   fill="#d62728")
            continue
        c.text(WIDTH - RIGHT - 145, ly + 4, f"{name} (mean {t.mean:.1f})", anchor="start",
               size=11)
        run: list[str] = []
        runs = []
        for i, (_, v) in enumerate(t.points):
            if v is None:
                if run:
                    runs.append(run)
                run = []
                c.add(f'<text x="{_n(px(i))}" y="{TOP + 4}" text-anchor="middle" '
                      f'font-family="sans-serif" font-size="9" fill="#d62728">x</text>')
            else:
                run.append(f"{_n(px(i))},{_n(c.y(v))}")
        if run:
            runs.append(run)
        for r in runs:
            c.add(f'<polyline points="{" ".join(r)}" fill="none" stroke="{color}" '
                  f'stroke-width="1"/>')
        my = _n(c.y(t.mean))
        c.add(f'<line x1="{LEFT}" y1="{my}" x2="{WIDTH - RIGHT}" y2="{my}" stroke="{color}" '
              f'stroke-dasharray="6,4"/>')
    if any(v is None for _, t in traces if t is not None for _, v in t.points):
        c.text(LEFT + 5, TOP + 4, "x = unresponsive", anchor="start", size=10, fill="#d62728")
    return c.render()


def row_mean_trace(series: MetricSeries, name: str) -> TraceDataset | None:
    """Per-round mean over the present columns; ``None`` if nothing is present."""
    points = []
    present = []
    for ts, vals in series.rows:
        got = [v for v in vals if v is not None and math.isfinite(v)]
        v = math.fsum(got) / len(got) if got else None
        points.append((ts, v))
        if v is not None:
            present.append(v)
    if not present:
        return None
    return TraceDataset(name, points, math.fsum(present) / len(present))


def _box_csv(boxes: Sequence[tuple[str, BoxStats | None]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["config", "stat", "value"])
    for name, b in boxes:
        if b is None:
            w.writerow([name, "n", 0])
            continue
        for stat in ("n", "median", "q1", "q3", "iqr", "whisker_low", "whisker_high", "mean",
                     "missing_count"):
            v = getattr(b, stat)
            w.writerow([name, stat, v if isinstance(v, int) else format_value(v)])
        w.writerow([name, "outliers", len(b.outliers)])
    return buf.getvalue()


def _trace_csv(traces: Sequence[tuple[str, TraceDataset | None]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["config", "timestamp", "value"])
    for name, t in traces:
        if t is None:
            continue
        for ts, v in t.points:
            w.writerow([name, ts, format_value(v)])
        w.writerow([name, "mean", format_value(t.mean)])
    return buf.getvalue()


def render_plots(report: TradeoffReport,
                 datasets: Mapping[str, tuple[MetricSeries, MetricSeries | None]],
                 out_dir: str | Path) -> list[Path]:
    """Write the four charts and their CSVs into ``out_dir``; return the paths."""
    if not str(out_dir):
        raise FileNotFoundError("empty output directory path")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = report.order
    rtt_boxes = [(n, report.per_config[n].rtt) for n in names]
    cpu_boxes = [(n, report.per_config[n].cpu) for n in names]
    rtt_traces = [(n, row_mean_trace(datasets[n][0], n)) for n in names]
    cpu_traces = [(n, row_mean_trace(datasets[n][1], n) if datasets[n][1] is not None else None)
                  for n in names]
    docs = {
        "rtt_boxplot.svg": _box_svg("RTT distribution per configuration", "RTT (ms)", rtt_boxes),
        "rtt_boxplot.csv": _box_csv(rtt_boxes),
        "cpu_boxplot.svg": _box_svg("CPU utilization per configuration", "CPU (%)", cpu_boxes),
        "cpu_boxplot.csv": _box_csv(cpu_boxes),
        "rtt_timeseries.svg": _trace_svg("RTT over time with mean", "RTT (ms)", rtt_traces),
        "rtt_timeseries.csv": _trace_csv(rtt_traces),
        "cpu_timeseries.svg": _trace_svg("CPU utilization over time with mean", "CPU (%)",
                                         cpu_traces),
        "cpu_timeseries.csv": _trace_csv(cpu_traces),
    }
    paths = []
    for fname, text in docs.items():
        p = out / fname
        with open(p, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        paths.append(p)
    return paths
