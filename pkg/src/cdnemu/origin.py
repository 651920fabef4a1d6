"""Origin (content) servers: manifests, segments and CPU metrics.

Served endpoints::

    GET /manifest/<video_id>   MPD-subset XML, 200 or 404
    GET /segment/<name>        segment bytes, 200 or 404
    GET /metrics               Prometheus text exposition
    GET /echo                  empty 200, used as an application-level ping
"""

from __future__ import annotations

import bisect
import functools
import random
import threading
import xml.etree.ElementTree as ET
from dataclasses import dataclass

from prometheus_client.parser import text_string_to_metric_families

from .clock import VirtualClock, WallClock
from .errors import InvalidRateError, NotFoundError, ParseError
from .http import Response, strip_query

CPU_METRIC = "cdn_cpu_seconds_total"
# active CPU charged per media segment served
SEGMENT_WORK_S = 0.005


@dataclass(frozen=True)
class SegmentRef:
    name: str
    size_bytes: int
    index: int  # 0-based playback position; the init segment uses -1


@dataclass(frozen=True)
class Manifest:
    video_id: str
    segment_count: int
    segment_duration_s: float
    init_segment: SegmentRef
    segments: tuple[SegmentRef, ...]

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.segments]


@dataclass(frozen=True)
class CpuCounters:
    instance: str
    total_cpu_s: float
    active_cpu_s: float


@dataclass(frozen=True)
class SegmentDelivery:
    name: str
    data: bytes
    duration_s: float  # serving-side time; network time is added by the transport


def segment_name(video_id: str, index: int) -> str:
    return f"{video_id}_seg_{index:04d}.mp4"


def init_name(video_id: str) -> str:
    return f"{video_id}_init.mp4"


@functools.lru_cache(maxsize=64)
def segment_payload(video_id: str, index: int, size: int) -> bytes:
    """Deterministic pseudo-random content for segment ``index`` (-1 = init)."""
    return random.Random(f"{video_id}:{index}").randbytes(size)


def make_manifest(video_id: str, segment_count: int = 10,
                  segment_size_bytes: int = 256 * 1024,
                  segment_duration_s: float = 4.0,
                  init_size_bytes: int = 4096) -> Manifest:
    segments = tuple(
        SegmentRef(segment_name(video_id, i), segment_size_bytes, i) for i in range(segment_count)
    )
    return Manifest(video_id, segment_count, segment_duration_s,
                    SegmentRef(init_name(video_id), init_size_bytes, -1), segments)


# -- MPD subset ----------------------------------------------------------------

def render_mpd(manifest: Manifest) -> str:
    root = ET.Element("MPD", {
        "videoId": manifest.video_id,
        "segmentCount": str(manifest.segment_count),
        "segmentDurationS": repr(float(manifest.segment_duration_s)),
    })
    ET.SubElement(root, "Init", {"name": manifest.init_segment.name,
                                 "sizeBytes": str(manifest.init_segment.size_bytes)})
    for seg in manifest.segments:
        ET.SubElement(root, "Segment", {"name": seg.name, "sizeBytes": str(seg.size_bytes)})
    ET.indent(root)
    return ET.tostring(root, encoding="unicode") + "\n"


def _int_attr(el: ET.Element, name: str) -> int:
    raw = el.get(name)
    if raw is None:
        raise ParseError(f"<{el.tag}> missing attribute {name}")
    try:
        return int(raw)
    except ValueError:
        raise ParseError(f"<{el.tag}> attribute {name}={raw!r} is not an integer") from None


def parse_mpd(text: str | bytes) -> Manifest:
    """Parse the MPD subset; raise :class:`ParseError` on anything malformed."""
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise ParseError(f"malformed MPD XML: {exc}") from None
    if root.tag != "MPD":
        raise ParseError(f"root element is <{root.tag}>, expected <MPD>")
    video_id = root.get("videoId")
    if not video_id:
        raise ParseError("<MPD> missing videoId")
    count = _int_attr(root, "segmentCount")
    try:
        duration = float(root.get("segmentDurationS", "0"))
    except ValueError:
        raise ParseError("segmentDurationS is not a number") from None
    inits = root.findall("Init")
    if len(inits) != 1 or not inits[0].get("name"):
        raise ParseError("expected exactly one <Init name=...>")
    init = inits[0]
    init_size = _int_attr(init, "sizeBytes") if init.get("sizeBytes") is not None else 0
    segments = []
    for i, el in enumerate(root.findall("Segment")):
        name = el.get("name")
        if not name:
            raise ParseError(f"<Segment> #{i} has no name")
        segments.append(SegmentRef(name, _int_attr(el, "sizeBytes"), i))
    if len(segments) != count:
        raise ParseError(f"segmentCount={count} but {len(segments)} <Segment> elements")
    if len({s.name for s in segments}) != len(segments):
        raise ParseError("duplicate segment names")
    return Manifest(video_id, count, duration, SegmentRef(init.get("name"), init_size, -1),
                    tuple(segments))


# -- Prometheus text -----------------------------------------------------------

def render_cpu_metrics(counters: list[CpuCounters]) -> str:
    lines = [
        f"# HELP {CPU_METRIC} Cumulative CPU seconds by mode.",
        f"# TYPE {CPU_METRIC} counter",
    ]
    for c in counters:
        lines.append(f'{CPU_METRIC}{{instance="{c.instance}",mode="total"}} {float(c.total_cpu_s)!r}')
        lines.append(f'{CPU_METRIC}{{instance="{c.instance}",mode="active"}} {float(c.active_cpu_s)!r}')
    return "\n".join(lines) + "\n"


def parse_cpu_metrics(text: str) -> dict[str, CpuCounters]:
    """Extract per-instance (total, active) counters from an exposition document."""
    found: dict[str, dict[str, float]] = {}
    try:
        for family in text_string_to_metric_families(text):
            for sample in family.samples:
                if sample.name != CPU_METRIC:
                    continue
                inst = sample.labels.get("instance", "")
                mode = sample.labels.get("mode")
                if mode in ("total", "active"):
                    found.setdefault(inst, {})[mode] = float(sample.value)
    except ValueError as exc:
        raise ParseError(f"invalid exposition format: {exc}") from None
    return {
        inst: CpuCounters(inst, modes["total"], modes["active"])
        for inst, modes in found.items()
        if "total" in modes and "active" in modes
    }


class OriginServer:
    """One content server.

    CPU counters are synthetic: ``total`` advances at one second per second
    per core, ``active`` at ``base_load_pct`` of that plus
    :data:`SEGMENT_WORK_S` for each media segment served.
    """

    def __init__(self, name: str, clock: VirtualClock | WallClock | None = None, *,
                 cores: int = 1, base_load_pct: float = 0.0,
                 throttle_bytes_per_s: float | None = None):
        if throttle_bytes_per_s is not None and not throttle_bytes_per_s > 0:
            raise InvalidRateError(f"throttle must be > 0, got {throttle_bytes_per_s}")
        self.name = name
        self.clock = clock if clock is not None else VirtualClock()
        self.cores = cores
        self.base_load_pct = base_load_pct
        self.throttle = throttle_bytes_per_s
        self._videos: dict[str, Manifest] = {}
        self._segments: dict[str, tuple[str, SegmentRef]] = {}
        self._t0 = self.clock.now_ms
        self._lock = threading.Lock()
        self._work_times: list[float] = []
        self._work_cum: list[float] = []
        self.segments_served = 0

    def provision(self, video_id: str, segment_count: int = 10,
                  segment_size_bytes: int = 256 * 1024, segment_duration_s: float = 4.0,
                  init_size_bytes: int = 4096) -> Manifest:
        manifest = make_manifest(video_id, segment_count, segment_size_bytes,
                                 segment_duration_s, init_size_bytes)
        self._videos[video_id] = manifest
        self._segments[manifest.init_segment.name] = (video_id, manifest.init_segment)
        for seg in manifest.segments:
            self._segments[seg.name] = (video_id, seg)
        return manifest

    def manifest(self, video_id: str) -> Manifest:
        try:
            return self._videos[video_id]
        except KeyError:
            raise NotFoundError(f"video {video_id!r} not provisioned on {self.name}") from None

    def serve_manifest(self, video_id: str) -> str:
        return render_mpd(self.manifest(video_id))

    def serve_segment(self, name: str, throttle: float | None = None) -> SegmentDelivery:
        """Return the segment bytes and serving duration (size/throttle, or 0)."""
        if throttle is not None and not throttle > 0:
            raise InvalidRateError(f"throttle must be > 0, got {throttle}")
        try:
            video_id, ref = self._segments[name]
        except KeyError:
            raise NotFoundError(f"segment {name!r} not found on {self.name}") from None
        data = segment_payload(video_id, ref.index, ref.size_bytes)
        duration = 0.0 if throttle is None else ref.size_bytes / throttle
        if ref.index >= 0:
            self._charge(SEGMENT_WORK_S)
            self.segments_served += 1
        return SegmentDelivery(name, data, duration)

    def _charge(self, seconds: float) -> None:
        with self._lock:
            now = self.clock.now_ms
            i = bisect.bisect_right(self._work_times, now)
            self._work_times.insert(i, now)
            prev = self._work_cum[i - 1] if i else 0.0
            self._work_cum.insert(i, prev)
            for j in range(i, len(self._work_cum)):
                self._work_cum[j] += seconds

    def counters(self, at_ms: float | None = None) -> CpuCounters:
        at = self.clock.now_ms if at_ms is None else at_ms
        total = self.cores * max(0.0, at - self._t0) / 1000.0
        with self._lock:
            i = bisect.bisect_right(self._work_times, at)
            work = self._work_cum[i - 1] if i else 0.0
        active = min(total, total * self.base_load_pct / 100.0 + work)
        return CpuCounters(self.name, total, active)

    def cpu_metrics_endpoint(self) -> str:
        return render_cpu_metrics([self.counters()])

    def handle(self, path: str):
        """Route one GET request; a clock activity returning a :class:`Response`."""
        path = strip_query(path)
        if path.startswith("/manifest/"):
            try:
                body = self.serve_manifest(path[len("/manifest/"):])
            except NotFoundError:
                return Response(404, b"not found")
            return Response(200, body.encode("utf-8"), {"Content-Type": "application/dash+xml"})
        if path.startswith("/segment/"):
            try:
                delivery = self.serve_segment(path[len("/segment/"):], self.throttle)
            except NotFoundError:
                return Response(404, b"not found")
            if delivery.duration_s > 0:
                yield delivery.duration_s
            return Response(200, delivery.data, {"Content-Type": "video/mp4"})
        if path == "/metrics":
            return Response(200, self.cpu_metrics_endpoint().encode("utf-8"),
                            {"Content-Type": "text/plain; version=0.0.4"})
        if path == "/echo":
            return Response(200, b"")
        return Response(404, b"not found")
