"""Headless DASH client.

Streams a manifest's segments one after another.  Each media request is
rewritten to the redirect base (normally the gateway's ``/cdn/`` endpoint)
before it is sent. The client then follows the gateway's 302 to the chosen
server and paces the body through a client-side token bucket.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterable
from urllib.parse import urljoin, urlsplit

from .clock import VirtualClock
from .errors import (EmptyFilenameError, InvalidBaseError, InvalidRateError,
                     ManifestUnreachableError, TransportError)
from .origin import Manifest, parse_mpd

logger = logging.getLogger(__name__)

DEFAULT_REDIRECT_BASE = "http://cdn.example.com/"
BUCKET_CAPACITY = 8 * 1024
PACING_QUANTUM_S = 0.010
MAX_REDIRECTS = 3
REDIRECT_STATUSES = (301, 302, 303, 307, 308)
SEGMENT_LOG_HEADER = ["name", "request_url", "final_url", "status", "bytes", "duration_ms"]


def _strip_query(url: str) -> str:
    return url.split("?", 1)[0].split("#", 1)[0]


def is_media_segment(url: str) -> bool:
    return _strip_query(url).endswith(".mp4")


def extract_file_name(url: str) -> str:
    name = _strip_query(url).split("/")[-1]
    if not name:
        raise EmptyFilenameError(f"no file name in {url!r}")
    return name


def construct_redirect_url(file_name: str, base: str = DEFAULT_REDIRECT_BASE) -> str:
    if not base.endswith("/"):
        raise InvalidBaseError(f"redirect base must end with '/': {base!r}")
    if not file_name:
        raise EmptyFilenameError("empty file name")
    return base + file_name


class TokenBucket:
    """Token bucket that starts empty; tokens are bytes."""

    def __init__(self, rate: float, capacity: float = BUCKET_CAPACITY):
        self.rate = rate
        self.capacity = capacity
        self.tokens = 0.0

    def refill(self, seconds: float) -> None:
        self.tokens = min(self.capacity, self.tokens + self.rate * seconds)

    def take(self, wanted: int) -> int:
        # epsilon absorbs float drift from repeated fractional refills
        n = min(wanted, int(self.tokens + 1e-6))
        self.tokens = max(0.0, self.tokens - n)
        return n


def _as_bytes(source: bytes | bytearray | memoryview | BinaryIO | Iterable[bytes]) -> bytes:
    if isinstance(source, (bytes, bytearray, memoryview)):
        return bytes(source)
    if hasattr(source, "read"):
        return source.read()
    return b"".join(source)


def throttled_write(data: bytes, sink: BinaryIO | None, rate: float | None, clock):
    """Clock activity writing ``data`` to ``sink`` at most ``rate`` bytes/s.

    Returns the elapsed seconds.  Writes happen once per pacing tick, where a
    tick is 10 ms or less so one tick never overfills the bucket.
    """
    start = clock.now_ms
    if rate is None:
        if sink is not None:
            sink.write(data)
        return 0.0
    bucket = TokenBucket(rate)
    tick = min(PACING_QUANTUM_S, bucket.capacity / rate)
    view = memoryview(data)
    pos = 0
    last = start
    while pos < len(data):
        yield tick
        now = clock.now_ms
        bucket.refill((now - last) / 1000.0)
        last = now
        n = bucket.take(len(data) - pos)
        if n and sink is not None:
            sink.write(view[pos:pos + n])
        pos += n
    return (clock.now_ms - start) / 1000.0


def _check_rate(rate: float | None) -> None:
    if rate is not None and not rate > 0:
        raise InvalidRateError(f"rate must be > 0 or unlimited, got {rate}")


def save_and_throttle_download(byte_source, destination: str | Path | None,
                               rate: float | None, clock=None) -> float:
    """Write ``byte_source`` to ``destination`` paced at ``rate``; return seconds taken."""
    _check_rate(rate)
    clock = clock if clock is not None else VirtualClock()
    data = _as_bytes(byte_source)
    if destination is None:
        return clock.run_process(throttled_write(data, None, rate, clock), "download")
    with open(destination, "wb") as fh:
        return clock.run_process(throttled_write(data, fh, rate, clock), "download")


@dataclass
class SegmentLog:
    name: str
    request_url: str
    final_url: str
    status: int
    bytes: int
    duration_ms: float
    redirects: int = 0
    sha256: str = ""
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.status == 200 and not self.error


@dataclass
class StreamSession:
    manifest_url: str
    redirect_base: str = DEFAULT_REDIRECT_BASE
    client_throttle: float | None = None
    out_dir: Path | None = None
    loop: bool = False
    node: str = "client"
    max_redirects: int = MAX_REDIRECTS
    per_segment_log: list[SegmentLog] = field(default_factory=list)
    stop_requested: bool = False

    def stop(self) -> None:
        """Finish the segment in flight, then end the session."""
        self.stop_requested = True


@dataclass
class StreamReport:
    manifest_url: str
    video_id: str
    segment_count: int
    segments_fetched: int
    segments_failed: int
    init_fetched: bool
    bytes: int
    duration_ms: float
    passes: int
    per_segment: list[SegmentLog]

    def to_dict(self) -> dict:
        return asdict(self)

    def write(self, json_path: Path, csv_path: Path) -> None:
        json_path.write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SEGMENT_LOG_HEADER)
        for e in self.per_segment:
            w.writerow([e.name, e.request_url, e.final_url, e.status, e.bytes, repr(e.duration_ms)])
        csv_path.write_text(buf.getvalue(), encoding="utf-8")


def _fetch_manifest(transport, node: str, url: str):
    try:
        resp = yield from transport.request(node, url)
    except TransportError as exc:
        raise ManifestUnreachableError(f"{url}: {exc}") from exc
    if resp.status != 200:
        raise ManifestUnreachableError(f"{url}: HTTP {resp.status}")
    return parse_mpd(resp.body)


def _fetch_segment(transport, node: str, name: str, url: str, rate: float | None,
                   destination: Path | None, max_redirects: int):
    clock = transport.clock
    start = clock.now_ms
    current = url
    hops = 0

    def failed(status: int, error: str) -> SegmentLog:
        logger.warning("segment %s failed: %s", name, error)
        return SegmentLog(name, url, current, status, 0, clock.now_ms - start, hops, "", error)

    while True:
        try:
            resp = yield from transport.request(node, current)
        except TransportError as exc:
            return failed(0, f"unreachable: {exc}")
        if resp.status in REDIRECT_STATUSES and resp.location:
            hops += 1
            if hops > max_redirects:
                return failed(resp.status, "too many redirects")
            current = urljoin(current, resp.location)
            continue
        if resp.status != 200:
            return failed(resp.status, f"HTTP {resp.status}")
        if destination is not None:
            with open(destination, "wb") as fh:
                yield from throttled_write(resp.body, fh, rate, clock)
        else:
            yield from throttled_write(resp.body, None, rate, clock)
        entry = SegmentLog(name, url, current, 200, len(resp.body), clock.now_ms - start, hops,
                           hashlib.sha256(resp.body).hexdigest())
        logger.debug("fetched %s via %s (%d B, %.1f ms)", name, current, entry.bytes,
                     entry.duration_ms)
        return entry


def stream_activity(session: StreamSession, transport):
    """Clock activity behind :func:`stream`."""
    _check_rate(session.client_throttle)
    clock = transport.clock
    start = clock.now_ms
    manifest: Manifest = yield from _fetch_manifest(transport, session.node, session.manifest_url)
    if session.out_dir is not None:
        Path(session.out_dir).mkdir(parents=True, exist_ok=True)
    refs = [manifest.init_segment, *manifest.segments]
    passes = 0
    while not session.stop_requested:
        for ref in refs:
            if session.stop_requested:
                break
            # the URL a player would have requested for this segment
            original = urljoin(session.manifest_url, ref.name)
            if is_media_segment(original):
                url = construct_redirect_url(extract_file_name(original), session.redirect_base)
            else:
                url = original
            dest = None
            if session.out_dir is not None and passes == 0:
                dest = Path(session.out_dir) / ref.name
            entry = yield from _fetch_segment(transport, session.node, ref.name, url,
                                              session.client_throttle, dest,
                                              session.max_redirects)
            session.per_segment_log.append(entry)
        else:
            passes += 1
        if not session.loop:
            break
    media = {s.name for s in manifest.segments}
    log = session.per_segment_log
    return StreamReport(
        manifest_url=session.manifest_url,
        video_id=manifest.video_id,
        segment_count=manifest.segment_count,
        segments_fetched=sum(1 for e in log if e.ok and e.name in media),
        segments_failed=sum(1 for e in log if not e.ok),
        init_fetched=any(e.ok and e.name == manifest.init_segment.name for e in log),
        bytes=sum(e.bytes for e in log),
        duration_ms=clock.now_ms - start,
        passes=passes,
        per_segment=list(log),
    )


def stream(session: StreamSession, transport) -> StreamReport:
    """Fetch the manifest, then every segment in playback order via redirects."""
    return transport.clock.run_process(stream_activity(session, transport), "stream")


def download_activity(manifest_url: str, throttle: float | None, transport,
                      out_dir: Path | None = None, node: str = "client",
                      segment_base: str | None = None):
    _check_rate(throttle)
    manifest = yield from _fetch_manifest(transport, node, manifest_url)
    if segment_base is None:
        parts = urlsplit(manifest_url)
        segment_base = f"{parts.scheme}://{parts.netloc}/segment/"
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
    downloaded = 0
    for ref in [manifest.init_segment, *manifest.segments]:
        dest = Path(out_dir) / ref.name if out_dir is not None else None
        entry = yield from _fetch_segment(transport, node, ref.name, segment_base + ref.name,
                                          throttle, dest, MAX_REDIRECTS)
        if entry.ok and ref.index >= 0:
            downloaded += 1
    return downloaded


def download_mpd_and_segments(manifest_url: str, throttle: float | None, transport,
                              out_dir: Path | None = None, node: str = "client",
                              segment_base: str | None = None) -> int:
    """Parse the MPD, fetch the init segment and each media segment in order.

    Returns the number of media segments downloaded.
    """
    return transport.clock.run_process(
        download_activity(manifest_url, throttle, transport, out_dir, node, segment_base),
        "download")
