from __future__ import annotations

import math
import random
import statistics

import pytest
from hypothesis import given, settings, strategies as st

from cdnemu.clock import VirtualClock
from cdnemu.errors import UnknownLinkError
from cdnemu.netsim import (DelayMutator, Network, PoissonParams, TrafficControlAdapter,
                           delay_mutator_step, derive_rng, poisson_sample)
from cdnemu.topology import DelayMutatorConfig


def test_derive_rng_streams_independent_and_reproducible():
    a1, a2, b = derive_rng(7, "a"), derive_rng(7, "a"), derive_rng(7, "b")
    xs = [a1.random() for _ in range(5)]
    assert xs == [a2.random() for _ in range(5)]
    assert xs != [b.random() for _ in range(5)]


def test_poisson_zero_lambda():
    assert poisson_sample(0, random.Random(1)) == 0


def test_poisson_negative_lambda():
    with pytest.raises(ValueError):
        PoissonParams(-1)


@pytest.mark.parametrize("lam", [0.5, 5.0, 30.0])
def test_poisson_small_lambda_pmf(lam):
    # compare empirical frequencies with the exact pmf
    rng = random.Random(3)
    n = 40_000
    draws = [poisson_sample(lam, rng) for _ in range(n)]
    for k in range(int(lam) - 2, int(lam) + 3):
        if k < 0:
            continue
        pmf = math.exp(-lam) * lam ** k / math.factorial(k)
        freq = draws.count(k) / n
        assert abs(freq - pmf) < 4 * math.sqrt(pmf * (1 - pmf) / n) + 1e-3


def test_poisson_large_lambda_nonnegative_integers():
    rng = random.Random(5)
    draws = [poisson_sample(200, rng) for _ in range(5000)]
    assert all(isinstance(d, int) and d >= 0 for d in draws)
    assert abs(statistics.fmean(draws) - 200) < 1.5


def test_link_defaults_and_replacement():
    net = Network(VirtualClock())
    net.add_link("l", 10)
    s0 = net.state("l")
    assert (s0.one_way_delay_ms, s0.rate_limit_bytes_per_s, s0.epoch) == (10, None, 0)
    net.apply_delay("l", 300)
    net.apply_delay("l", 250)
    s = net.state("l")
    assert s.one_way_delay_ms == 250 and s.epoch == 2


def test_unknown_link():
    net = Network(VirtualClock())
    with pytest.raises(UnknownLinkError):
        net.apply_delay("nope", 1)
    with pytest.raises(UnknownLinkError):
        net.state("nope")


def test_transmit_formula():
    net = Network(VirtualClock())
    net.add_link("l", 10, 1000.0)
    assert net.transmit("l", 500, 100.0) == 100.0 + 10 + 500.0
    net.set_rate("l", None)
    assert net.transmit("l", 10**9, 0.0) == 10.0


def test_transmit_uses_state_at_send_time():
    clock = VirtualClock()
    net = Network(clock)
    net.add_link("l", 10)
    clock.advance(1)
    net.apply_delay("l", 500)
    assert net.transmit("l", 0, 500.0) == 510.0
    assert net.transmit("l", 0, 1000.0) == 1500.0


def test_mutator_step_bounds_and_logging():
    clock = VirtualClock()
    net = Network(clock)
    net.add_link("l", 0)
    seen = []
    m = DelayMutator(net, DelayMutatorConfig(), "l", random.Random(2),
                     on_step=lambda ts, link, d, s: seen.append((ts, link, d, s)))
    proc = clock.spawn(m.run(), daemon=True)
    clock.advance(60)
    clock.cancel(proc)
    assert m.steps == len(seen) > 3
    assert all(200 <= d <= 800 for _, _, d, _ in seen)
    assert net.state("l").one_way_delay_ms == seen[-1][2]
    times = [ts for ts, *_ in seen]
    assert times == sorted(times)


def test_mutator_equal_bounds():
    net = Network(VirtualClock())
    net.add_link("l", 0)
    cfg = DelayMutatorConfig(min_delay_ms=300, max_delay_ms=300)
    assert delay_mutator_step(net, cfg, "l", random.Random(1))[0] == 300


def test_mutator_unknown_link():
    with pytest.raises(UnknownLinkError):
        delay_mutator_step(Network(VirtualClock()), DelayMutatorConfig(), "x", random.Random())


def test_tc_adapter_dry_run():
    tc = TrafficControlAdapter("eth0", dry_run=True)
    assert tc.clear() and tc.apply(345)
    assert tc.commands == ["tc qdisc del dev eth0 root",
                           "tc qdisc add dev eth0 root netem delay 345ms"]


def test_tc_adapter_reports_failure():
    tc = TrafficControlAdapter("eth0", runner=lambda argv: 2)
    assert tc.apply(300) is False


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 1000), st.integers(0, 1000), st.integers(0, 2**32))
def test_mutator_always_within_bounds(a, b, seed):
    lo, hi = min(a, b), max(a, b)
    net = Network(VirtualClock())
    net.add_link("l", 0)
    cfg = DelayMutatorConfig(min_delay_ms=lo, max_delay_ms=hi)
    rng = random.Random(seed)
    for _ in range(20):
        d, s = delay_mutator_step(net, cfg, "l", rng)
        assert lo <= d <= hi and s >= 0
