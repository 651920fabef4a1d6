"""Virtual and wall clocks with a shared process API.

Activities are written as generators that ``yield`` a sleep duration in
seconds (``None`` means zero).  :class:`VirtualClock` runs them on a
discrete-event scheduler; :class:`WallClock` runs each one on a thread and
maps the yields onto real sleeps.  Code written against one runs unchanged on
the other.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import threading
import time
from datetime import datetime, timedelta, timezone
from typing import Any, Callable, Generator

logger = logging.getLogger(__name__)

Activity = Generator[Any, Any, Any]

# virtual runs are stamped from a fixed origin so output bytes depend only on the seed
VIRTUAL_EPOCH = datetime(2025, 1, 1, tzinfo=timezone.utc)


def iso_timestamp(moment: datetime) -> str:
    """UTC ISO-8601 with millisecond precision, e.g. ``2025-01-01T00:00:01.000Z``."""
    moment = moment.astimezone(timezone.utc)
    return moment.strftime("%Y-%m-%dT%H:%M:%S.") + f"{moment.microsecond // 1000:03d}Z"


def parse_timestamp(text: str) -> datetime:
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    moment = datetime.fromisoformat(text)
    if moment.tzinfo is None:
        moment = moment.replace(tzinfo=timezone.utc)
    return moment


class Process:
    """Handle on a spawned activity."""

    def __init__(self, gen: Activity, name: str, daemon: bool):
        self.gen = gen
        self.name = name
        self.daemon = daemon
        self.done = False
        self.result: Any = None
        self.error: BaseException | None = None
        self.cancelled = False

    def __repr__(self) -> str:
        state = "done" if self.done else "running"
        return f"<Process {self.name} {state}>"


class VirtualClock:
    """Deterministic discrete-event scheduler; time only moves via events."""

    mode = "virtual"

    def __init__(self, epoch: datetime = VIRTUAL_EPOCH):
        self.epoch = epoch
        self._now_ms = 0.0
        self._queue: list[tuple[float, int, Callable[[], None]]] = []
        self._seq = itertools.count()
        self._procs: list[Process] = []

    @property
    def now_ms(self) -> float:
        return self._now_ms

    def timestamp(self, at_ms: float | None = None) -> str:
        ms = self._now_ms if at_ms is None else at_ms
        return iso_timestamp(self.epoch + timedelta(milliseconds=ms))

    def call_at(self, at_ms: float, action: Callable[[], None]) -> None:
        if at_ms < self._now_ms:
            raise ValueError(f"cannot schedule in the past ({at_ms} < {self._now_ms})")
        heapq.heappush(self._queue, (at_ms, next(self._seq), action))

    def call_later(self, delay_s: float, action: Callable[[], None]) -> None:
        self.call_at(self._now_ms + delay_s * 1000.0, action)

    def _run_next(self) -> None:
        at_ms, _, action = heapq.heappop(self._queue)
        self._now_ms = at_ms
        action()

    def advance(self, seconds: float) -> None:
        """Run every event due within ``seconds`` and move time forward."""
        if seconds < 0:
            raise ValueError("cannot advance backwards")
        target = self._now_ms + seconds * 1000.0
        while self._queue and self._queue[0][0] <= target:
            self._run_next()
        self._now_ms = target

    def run(self, until: Callable[[], bool] | None = None, until_ms: float | None = None) -> None:
        """Execute events until the queue drains, ``until()`` holds, or ``until_ms``."""
        while self._queue:
            if until is not None and until():
                return
            if until_ms is not None and self._queue[0][0] > until_ms:
                self._now_ms = max(self._now_ms, until_ms)
                return
            self._run_next()

    # -- processes -------------------------------------------------------

    def spawn(self, gen: Activity, name: str = "process", daemon: bool = False) -> Process:
        proc = Process(gen, name, daemon)
        self._procs.append(proc)
        self.call_at(self._now_ms, lambda: self._step(proc, None))
        return proc

    def _step(self, proc: Process, value: Any) -> None:
        if proc.done:
            return
        try:
            delay = proc.gen.send(value)
        except StopIteration as stop:
            proc.done = True
            proc.result = stop.value
            return
        except Exception as exc:  # surfaced through run_process / join
            proc.done = True
            proc.error = exc
            logger.debug("process %s failed: %r", proc.name, exc)
            return
        delay = 0.0 if delay is None else float(delay)
        if delay < 0:
            delay = 0.0
        self.call_later(delay, lambda: self._step(proc, None))

    def cancel(self, proc: Process) -> None:
        if not proc.done:
            proc.gen.close()
            proc.done = True
            proc.cancelled = True

    def join(self, procs: list[Process]) -> None:
        """Run the scheduler until every process in ``procs`` is done."""
        self.run(until=lambda: all(p.done for p in procs))
        pending = [p for p in procs if not p.done]
        if pending:
            raise RuntimeError(f"scheduler drained with processes still pending: {pending}")
        for p in procs:
            if p.error is not None:
                raise p.error

    def run_process(self, gen: Activity, name: str = "main") -> Any:
        """Spawn ``gen`` and run the scheduler until it finishes; return its value."""
        proc = self.spawn(gen, name)
        self.join([proc])
        return proc.result

    def shutdown(self) -> None:
        for proc in self._procs:
            self.cancel(proc)


class WallClock:
    """Real-time clock; spawned processes run on daemon threads."""

    mode = "wall"

    def __init__(self):
        self._t0 = time.monotonic()
        self.epoch = datetime.now(timezone.utc)
        self._procs: list[tuple[Process, threading.Thread, threading.Event]] = []

    @property
    def now_ms(self) -> float:
        return (time.monotonic() - self._t0) * 1000.0

    def timestamp(self, at_ms: float | None = None) -> str:
        ms = self.now_ms if at_ms is None else at_ms
        return iso_timestamp(self.epoch + timedelta(milliseconds=ms))

    @staticmethod
    def _drive(proc: Process, stop: threading.Event | None) -> None:
        try:
            delay = next(proc.gen)
            while True:
                delay = 0.0 if delay is None else float(delay)
                if delay > 0:
                    if stop is not None:
                        if stop.wait(delay):
                            proc.gen.close()
                            proc.cancelled = True
                            return
                    else:
                        time.sleep(delay)
                delay = proc.gen.send(None)
        except StopIteration as stop_it:
            proc.result = stop_it.value
        except Exception as exc:
            proc.error = exc
            logger.debug("process %s failed: %r", proc.name, exc)
        finally:
            proc.done = True

    def spawn(self, gen: Activity, name: str = "process", daemon: bool = False) -> Process:
        proc = Process(gen, name, daemon)
        stop = threading.Event()
        thread = threading.Thread(target=self._drive, args=(proc, stop), name=name, daemon=True)
        self._procs.append((proc, thread, stop))
        thread.start()
        return proc

    def cancel(self, proc: Process) -> None:
        for p, _, stop in self._procs:
            if p is proc:
                stop.set()

    def join(self, procs: list[Process], timeout: float | None = None) -> None:
        deadline = None if timeout is None else time.monotonic() + timeout
        for p, thread, _ in self._procs:
            if p in procs:
                remaining = None if deadline is None else max(0.0, deadline - time.monotonic())
                thread.join(remaining)
        for p in procs:
            if not p.done:
                raise TimeoutError(f"process {p.name} did not finish in time")
            if p.error is not None:
                raise p.error

    def run_process(self, gen: Activity, name: str = "main") -> Any:
        proc = Process(gen, name, daemon=False)
        self._drive(proc, None)
        if proc.error is not None:
            raise proc.error
        return proc.result

    def advance(self, seconds: float) -> None:
        time.sleep(seconds)

    def shutdown(self, deadline_s: float = 5.0) -> None:
        for _, _, stop in self._procs:
            stop.set()
        end = time.monotonic() + deadline_s
        for _, thread, _ in self._procs:
            thread.join(max(0.0, end - time.monotonic()))


Clock = VirtualClock | WallClock


def make_clock(mode: str) -> VirtualClock | WallClock:
    if mode == "virtual":
        return VirtualClock()
    if mode == "wall":
        return WallClock()
    raise ValueError(f"unknown clock mode {mode!r}")
