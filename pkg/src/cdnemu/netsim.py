"""Virtual link layer: delay and rate-limit semantics plus the delay mutator.

Each link keeps a time-indexed history of its state so that a transmission
always uses the snapshot in force at its send time, even if a mutation lands
while it is in flight.
"""

from __future__ import annotations

import bisect
import hashlib
import logging
import math
import random
import shlex
import subprocess
import threading
from dataclasses import dataclass
from typing import Callable, Sequence

from .clock import VirtualClock, WallClock
from .errors import UnknownLinkError
from .topology import DelayMutatorConfig

logger = logging.getLogger(__name__)

# Knuth's product method is exact but O(lambda); above this we approximate
KNUTH_MAX_LAMBDA = 30.0


def derive_rng(seed: int, stream: str) -> random.Random:
    """Independent, reproducible RNG stream for ``stream`` under ``seed``."""
    digest = hashlib.sha256(f"{seed}/{stream}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


@dataclass(frozen=True)
class PoissonParams:
    lam: float

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError(f"Poisson lambda must be >= 0, got {self.lam}")


def poisson_sample(params: PoissonParams | float, rng: random.Random) -> int:
    """Draw from Poisson(lambda).

    Knuth's multiplicative method for lambda <= 30, otherwise a normal
    approximation rounded to the nearest integer and clamped at zero.
    """
    lam = params.lam if isinstance(params, PoissonParams) else PoissonParams(float(params)).lam
    if lam == 0:
        return 0
    if lam <= KNUTH_MAX_LAMBDA:
        limit = math.exp(-lam)
        k = 0
        p = rng.random()
        while p > limit:
            k += 1
            p *= rng.random()
        return k
    return max(0, round(lam + math.sqrt(lam) * rng.gauss(0.0, 1.0)))


@dataclass(frozen=True)
class LinkState:
    link_id: str
    one_way_delay_ms: float
    rate_limit_bytes_per_s: float | None  # None = unlimited
    epoch: int


class Network:
    """Registry of links; thread-safe so wall-mode activities can share it."""

    def __init__(self, clock: VirtualClock | WallClock | None = None):
        self.clock = clock if clock is not None else VirtualClock()
        self._lock = threading.Lock()
        # link -> parallel lists of change times and states
        self._times: dict[str, list[float]] = {}
        self._states: dict[str, list[LinkState]] = {}

    def add_link(self, link_id: str, delay_ms: float = 0.0,
                 rate_bytes_per_s: float | None = None) -> LinkState:
        if delay_ms < 0:
            raise ValueError("delay must be >= 0")
        if rate_bytes_per_s is not None and not rate_bytes_per_s > 0:
            raise ValueError("rate must be > 0 or None")
        state = LinkState(link_id, float(delay_ms), rate_bytes_per_s, 0)
        with self._lock:
            self._times[link_id] = [self.clock.now_ms]
            self._states[link_id] = [state]
        return state

    @property
    def links(self) -> list[str]:
        return list(self._states)

    def state(self, link_id: str, at_ms: float | None = None) -> LinkState:
        """Snapshot of ``link_id`` at ``at_ms`` (latest if omitted)."""
        with self._lock:
            if link_id not in self._states:
                raise UnknownLinkError(link_id)
            states = self._states[link_id]
            if at_ms is None:
                return states[-1]
            i = bisect.bisect_right(self._times[link_id], at_ms) - 1
            return states[max(i, 0)]

    def _mutate(self, link_id: str, **changes) -> LinkState:
        with self._lock:
            if link_id not in self._states:
                raise UnknownLinkError(link_id)
            cur = self._states[link_id][-1]
            new = LinkState(
                link_id,
                changes.get("delay", cur.one_way_delay_ms),
                changes.get("rate", cur.rate_limit_bytes_per_s),
                cur.epoch + 1,
            )
            now = self.clock.now_ms
            times = self._times[link_id]
            if now < times[-1]:
                now = times[-1]
            times.append(now)
            self._states[link_id].append(new)
            return new

    def apply_delay(self, link_id: str, delay_ms: float) -> LinkState:
        """Replace (never add to) the link's one-way delay."""
        if delay_ms < 0:
            raise ValueError("delay must be >= 0")
        return self._mutate(link_id, delay=float(delay_ms))

    def set_rate(self, link_id: str, rate_bytes_per_s: float | None) -> LinkState:
        if rate_bytes_per_s is not None and not rate_bytes_per_s > 0:
            raise ValueError("rate must be > 0 or None")
        return self._mutate(link_id, rate=rate_bytes_per_s)

    def transmit(self, link_id: str, payload_bytes: int, send_time_ms: float) -> float:
        """Arrival time of ``payload_bytes`` sent at ``send_time_ms``.

        arrival = send + one-way delay + payload / rate (no serialization term
        when the link is unlimited).
        """
        if payload_bytes < 0:
            raise ValueError("payload_bytes must be >= 0")
        st = self.state(link_id, send_time_ms)
        serialization = 0.0
        if st.rate_limit_bytes_per_s is not None:
            serialization = payload_bytes / st.rate_limit_bytes_per_s * 1000.0
        return send_time_ms + st.one_way_delay_ms + serialization


# -- delay mutator -------------------------------------------------------------

def delay_mutator_step(network: Network, cfg: DelayMutatorConfig, link: str,
                       rng: random.Random) -> tuple[int, float]:
    """One iteration of the delay loop: draw, replace, pick the next sleep.

    Returns ``(applied_delay_ms, sleep_s)``.
    """
    if link not in network.links:
        raise UnknownLinkError(link)
    delay = rng.randint(cfg.min_delay_ms, cfg.max_delay_ms)
    before = network.state(link)
    after = network.apply_delay(link, delay)
    # a virtual link has no failure mode; the epoch bump is the success check
    ok = after.epoch == before.epoch + 1 and after.one_way_delay_ms == delay
    sleep_s = float(poisson_sample(PoissonParams(cfg.sleep_lambda_s), rng))
    logger.info("link %s: delay %d ms applied (%s), sleeping %.0f s",
                link, delay, "ok" if ok else "FAILED", sleep_s)
    return delay, sleep_s


class DelayMutator:
    """Endless delay-mutation loop as a clock activity.

    ``on_step`` receives ``(timestamp, link, delay_ms, sleep_s)`` for logging.
    An optional ``adapter`` mirrors each change onto a real interface.
    """

    def __init__(self, network: Network, cfg: DelayMutatorConfig, link: str,
                 rng: random.Random,
                 on_step: Callable[[str, str, int, float], None] | None = None,
                 adapter: TrafficControlAdapter | None = None):
        self.network = network
        self.cfg = cfg
        self.link = link
        self.rng = rng
        self.on_step = on_step
        self.adapter = adapter
        self.steps = 0

    def step(self) -> tuple[int, float]:
        delay, sleep_s = delay_mutator_step(self.network, self.cfg, self.link, self.rng)
        if self.adapter is not None:
            self.adapter.clear()
            self.adapter.apply(delay)
        self.steps += 1
        if self.on_step is not None:
            self.on_step(self.network.clock.timestamp(), self.link, delay, sleep_s)
        return delay, sleep_s

    def run(self):
        while True:
            _, sleep_s = self.step()
            yield sleep_s


class TrafficControlAdapter:
    """Mirror delays onto a Linux interface with ``tc qdisc``/netem.

    Needs root; with ``dry_run`` the commands are only recorded in
    :attr:`commands`.
    """

    def __init__(self, interface: str, dry_run: bool = False,
                 runner: Callable[[Sequence[str]], int] | None = None):
        self.interface = interface
        self.dry_run = dry_run
        self.commands: list[str] = []
        self._runner = runner or (lambda argv: subprocess.run(argv, check=False).returncode)

    def _tc(self, args: str) -> bool:
        cmd = f"tc qdisc {args}"
        self.commands.append(cmd)
        if self.dry_run:
            return True
        return self._runner(shlex.split(cmd)) == 0

    def apply(self, delay_ms: int) -> bool:
        return self._tc(f"add dev {self.interface} root netem delay {int(delay_ms)}ms")

    def clear(self) -> bool:
        return self._tc(f"del dev {self.interface} root")
