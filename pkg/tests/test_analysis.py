from __future__ import annotations

import math
import random
import statistics

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cdnemu.analysis import (classify_trend, load_series_csv, summarize, timeseries_with_mean,
                             tradeoff_report)
from cdnemu.errors import EmptySeriesError, InsufficientConfigsError, UnknownColumnError
from cdnemu.clock import VirtualClock
from cdnemu.series import MetricSeries

_CLOCK = VirtualClock()


def oracle_quantile(values, p):
    # brute force: scan the sorted list for the two order statistics around rank (n-1)p
    xs = sorted(values)
    rank = (len(xs) - 1) * p
    below = max(i for i in range(len(xs)) if i <= rank)
    above = min(below + 1, len(xs) - 1)
    return xs[below] + (rank - below) * (xs[above] - xs[below])


def test_small_example():
    b = summarize([1, 2, 3, 4, 5])
    assert (b.median, b.q1, b.q3, b.iqr, b.outliers) == (3, 2, 4, 2, [])
    assert (b.whisker_low, b.whisker_high, b.mean) == (1, 5, 3)


def test_constant_series():
    b = summarize([7, 7, 7, 7])
    assert (b.median, b.iqr, b.outliers) == (7, 0, [])


def test_absences_counted():
    b = summarize([None, 1.0, None, 3.0, float("inf")])
    assert b.n == 2 and b.missing_count == 3 and b.median == 2.0


def test_empty():
    with pytest.raises(EmptySeriesError):
        summarize([None, None])
    with pytest.raises(EmptySeriesError):
        summarize([])


def test_quantile_oracle_random_series():
    rng = random.Random(11)
    for _ in range(1000):
        n = rng.randint(1, 500)
        data = [rng.choice([rng.uniform(0, 500), float(rng.randint(0, 50))]) for _ in range(n)]
        b = summarize(data)
        assert b.q1 == oracle_quantile(data, 0.25)
        assert b.median == oracle_quantile(data, 0.5)
        assert b.q3 == oracle_quantile(data, 0.75)


@settings(max_examples=100)
@given(st.lists(st.floats(-1e4, 1e4, allow_nan=False), min_size=1, max_size=200))
def test_quantiles_agree_with_numpy_and_fences(data):
    b = summarize(data)
    q1, med, q3 = np.quantile(data, [0.25, 0.5, 0.75], method="linear")
    assert b.q1 == pytest.approx(q1, abs=1e-6)
    assert b.median == pytest.approx(med, abs=1e-6)
    assert b.q3 == pytest.approx(q3, abs=1e-6)
    assert b.q1 <= b.median <= b.q3
    lo, hi = b.q1 - 1.5 * b.iqr, b.q3 + 1.5 * b.iqr
    assert all(o < lo or o > hi for o in b.outliers)
    inside = [x for x in data if lo <= x <= hi]
    assert len(inside) + len(b.outliers) == len(data)
    assert b.whisker_low == min(inside) and b.whisker_high == max(inside)


def test_outlier_detected():
    b = summarize([10, 11, 12, 13, 14, 100])
    assert b.outliers == [100] and b.whisker_high == 14


def series(cols, rows, metric="rtt"):
    s = MetricSeries(metric, list(cols))
    for i, r in enumerate(rows):
        s.append(_CLOCK.timestamp(i * 1000.0), r)
    return s


def test_timeseries_with_mean():
    t = timeseries_with_mean(series(["a"], [[10], [None], [30]]), "a")
    assert t.mean == 20 and t.gaps == 1
    assert [v for _, v in t.points] == [10, None, 30]
    with pytest.raises(EmptySeriesError):
        timeseries_with_mean(series(["a"], [[None]]), "a")
    with pytest.raises(UnknownColumnError):
        timeseries_with_mean(series(["a"], [[1]]), "b")


def make_dataset(n_servers, mean, seed, rows=200):
    rng = random.Random(seed)
    cols = [f"server-{i + 1}" for i in range(n_servers)]
    rtt = series(cols, [[rng.gauss(mean, 10) for _ in cols] for _ in range(rows)])
    cpu = series(cols, [[rng.gauss(30, 4) for _ in cols] for _ in range(rows)], "cpu")
    return rtt, cpu


def test_tradeoff_report_orders_by_server_count():
    data = {"big": make_dataset(12, 270, 1), "small": make_dataset(4, 230, 2),
            "mid": make_dataset(8, 240, 3)}
    report = tradeoff_report(data)
    assert report.order == ["small", "mid", "big"]
    assert report.rtt_trend == "increasing"
    assert report.per_config["big"].rtt_mean_ms == pytest.approx(270, abs=2)
    assert any("270" in line or "269" in line for line in report.narrative)
    shuffled = dict(reversed(list(data.items())))
    assert tradeoff_report(shuffled).rtt_trend == "increasing"


def test_tradeoff_identical_is_flat():
    d = make_dataset(4, 230, 5)
    assert tradeoff_report({"a": d, "b": d}).rtt_trend == "flat"


def test_tradeoff_needs_two():
    with pytest.raises(InsufficientConfigsError):
        tradeoff_report({"a": make_dataset(4, 230, 5)})


def test_per_server_breakdown_skips_dead_server():
    rtt = series(["a", "b"], [[1.0, None], [2.0, None]])
    report = tradeoff_report({"x": (rtt, None), "y": (rtt, None)}, per_server=True)
    assert set(report.per_config["x"].per_server) == {"a"}
    assert report.per_config["x"].rtt.missing_count == 2


@pytest.mark.parametrize("means,trend", [
    ([230, 240, 270], "increasing"),
    ([230, 229.5, 270], "increasing"),
    ([270, 240, 230], "decreasing"),
    ([230, 230.5, 230.2], "flat"),
    ([230, 280, 250], "increasing"),
])
def test_classify_trend(means, trend):
    assert classify_trend(means) == trend


def test_load_series_csv(tmp_path):
    s = series(["a", "b"], [[1.0, None]])
    path = tmp_path / "x.csv"
    s.write_csv(path)
    assert load_series_csv(path) == s
    assert math.isclose(statistics.fmean([1.0]), summarize(load_series_csv(path).pooled()).mean)
