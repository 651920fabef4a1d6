"""Experiment scenarios, node inventory and link wiring.

A scenario is a single JSON document mirroring :class:`ExperimentConfig`.
Four presets ship with the package.  Their base RTTs are calibration choices:
with Poisson(200) noise on top, a 20 ms base puts the 4-server median RTT
near 220-230 ms.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import InvalidConfigError, ScenarioError

PROFILES = ("testbed", "edge")
CLOCK_MODES = ("virtual", "wall")
PRESET_NAMES = ("testbed-4", "testbed-8", "testbed-12", "edge-2")

GATEWAY = "gateway"
CLIENT = "client"

_SEED_MIN = -(2**63)
_SEED_MAX = 2**64 - 1


def server_name(index: int) -> str:
    """Node id of the server at 0-based ``index``."""
    return f"server-{index + 1}"


def link_name(a: str, b: str) -> str:
    return f"{a}--{b}"


@dataclass(frozen=True)
class DelayMutatorConfig:
    min_delay_ms: int = 200
    max_delay_ms: int = 800
    sleep_lambda_s: float = 5.0
    enabled: bool = False
    # server whose gateway link is mutated; None means the last server
    target_server: str | None = None


@dataclass(frozen=True)
class RecorderConfig:
    num_pings: int = 1000
    ping_interval_s: float = 1.0
    cpu_iterations: int = 1500
    cpu_interval_s: float = 2.0
    ping_output_path: str = "ping_results1000.csv"
    cpu_output_path: str = "cpu_results.csv"


@dataclass(frozen=True)
class VideoConfig:
    video_id: str = "v1"
    segment_count: int = 10
    segment_size_bytes: int = 256 * 1024
    segment_duration_s: float = 4.0
    init_size_bytes: int = 4096


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "custom"
    profile: str = "testbed"
    server_count: int = 4
    base_rtt_ms: tuple[float, ...] = (20.0, 20.0, 20.0, 20.0)
    rtt_noise_lambda_ms: float = 200.0
    cpu_noise_lambda_pct: float = 30.0
    delay_mutator: DelayMutatorConfig = field(default_factory=DelayMutatorConfig)
    recorder: RecorderConfig = field(default_factory=RecorderConfig)
    seed: int = 7
    clock_mode: str = "virtual"
    overhead_ms_per_server: float = 3.0
    down_servers: tuple[str, ...] = ()
    cpu_base_load_pct: float = 0.0
    video: VideoConfig = field(default_factory=VideoConfig)
    client_rate_bytes_per_s: float | None = 1024.0 * 1024.0
    server_rate_bytes_per_s: float | None = None
    client_sessions: int = 1
    client_loop: bool = True
    probe_timeout_s: float = 2.0

    @property
    def server_names(self) -> list[str]:
        return [server_name(i) for i in range(max(self.server_count, 0))]

    def quick(self) -> ExperimentConfig:
        """Desk-scale variant: 100 ping rounds and 100 CPU scrapes."""
        rec = dataclasses.replace(self.recorder, num_pings=100, cpu_iterations=100)
        return dataclasses.replace(self, recorder=rec)

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["base_rtt_ms"] = list(self.base_rtt_ms)
        d["down_servers"] = list(self.down_servers)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


@dataclass(frozen=True)
class Violation:
    code: str
    field: str
    message: str


@dataclass(frozen=True)
class Topology:
    gateway: str
    servers: tuple[str, ...]
    client: str
    # (node, node) -> link id; keys are (gateway|client, server)
    links: dict[tuple[str, str], str]

    @property
    def nodes(self) -> list[str]:
        return [self.gateway, *self.servers, self.client]

    def link_between(self, a: str, b: str) -> str | None:
        return self.links.get((a, b)) or self.links.get((b, a))

    def server_index(self, server: str) -> int:
        return self.servers.index(server)


def _is_int(x: Any) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _is_num(x: Any) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def validate_config(config: ExperimentConfig) -> list[Violation]:
    """Return every invariant violation of ``config``; empty means valid."""
    out: list[Violation] = []

    def bad(code: str, fld: str, msg: str) -> None:
        out.append(Violation(code, fld, msg))

    if config.profile not in PROFILES:
        bad("profile_unknown", "profile", f"profile must be one of {PROFILES}")
    if config.clock_mode not in CLOCK_MODES:
        bad("clock_mode_unknown", "clock_mode", f"clock_mode must be one of {CLOCK_MODES}")
    if not _is_int(config.server_count) or config.server_count < 1:
        bad("server_count_min", "server_count", "server_count must be >= 1")
    elif len(config.base_rtt_ms) != config.server_count:
        bad("base_rtt_length", "base_rtt_ms",
            f"expected {config.server_count} base RTTs, got {len(config.base_rtt_ms)}")
    if any(not _is_num(v) or v < 0 for v in config.base_rtt_ms):
        bad("base_rtt_negative", "base_rtt_ms", "base RTTs must be >= 0")
    if not _is_num(config.rtt_noise_lambda_ms) or config.rtt_noise_lambda_ms < 0:
        bad("rtt_noise_negative", "rtt_noise_lambda_ms", "noise lambda must be >= 0")
    if not _is_num(config.cpu_noise_lambda_pct) or config.cpu_noise_lambda_pct < 0:
        bad("cpu_noise_negative", "cpu_noise_lambda_pct", "noise lambda must be >= 0")
    if not _is_int(config.seed) or not _SEED_MIN <= config.seed <= _SEED_MAX:
        bad("seed_range", "seed", "seed must be a 64-bit integer")

    dm = config.delay_mutator
    if dm.min_delay_ms < 0:
        bad("delay_min_negative", "delay_mutator.min_delay_ms", "min_delay_ms must be >= 0")
    if dm.min_delay_ms > dm.max_delay_ms:
        bad("delay_bounds_order", "delay_mutator",
            "min_delay_ms must not exceed max_delay_ms")
    if not dm.sleep_lambda_s > 0:
        bad("sleep_lambda_positive", "delay_mutator.sleep_lambda_s", "sleep_lambda_s must be > 0")
    if dm.target_server is not None and dm.target_server not in config.server_names:
        bad("mutator_target_unknown", "delay_mutator.target_server",
            f"unknown server {dm.target_server!r}")

    rec = config.recorder
    if rec.num_pings < 1 or rec.cpu_iterations < 1:
        bad("recorder_counts", "recorder", "num_pings and cpu_iterations must be >= 1")
    if not (rec.ping_interval_s > 0 and rec.cpu_interval_s > 0):
        bad("recorder_intervals", "recorder", "recorder intervals must be > 0")

    if config.overhead_ms_per_server < 0:
        bad("overhead_negative", "overhead_ms_per_server", "overhead must be >= 0")
    unknown = [s for s in config.down_servers if s not in config.server_names]
    if unknown:
        bad("down_servers_unknown", "down_servers", f"unknown servers {unknown}")
    if not 0 <= config.cpu_base_load_pct <= 100:
        bad("cpu_base_load_range", "cpu_base_load_pct", "base load must be within [0, 100]")

    v = config.video
    if not v.video_id or "/" in v.video_id:
        bad("video_id_invalid", "video.video_id", "video_id must be nonempty without '/'")
    if v.segment_count < 0 or v.segment_size_bytes < 1 or v.init_size_bytes < 1:
        bad("video_sizes", "video", "segment_count >= 0 and sizes >= 1 required")
    if not v.segment_duration_s > 0:
        bad("video_duration", "video.segment_duration_s", "segment duration must be > 0")
    for fld in ("client_rate_bytes_per_s", "server_rate_bytes_per_s"):
        rate = getattr(config, fld)
        if rate is not None and not rate > 0:
            bad("rate_positive", fld, "rates must be > 0 or null for unlimited")
    if config.client_sessions < 1:
        bad("client_sessions_min", "client_sessions", "client_sessions must be >= 1")
    if not config.probe_timeout_s > 0:
        bad("probe_timeout_positive", "probe_timeout_s", "probe timeout must be > 0")
    return out


def build_topology(config: ExperimentConfig) -> Topology:
    """Wire one gateway, one client and ``server_count`` servers.

    Every server gets a gateway link and a client link, so a topology always
    has ``server_count + 2`` nodes and ``2 * server_count`` links.
    """
    violations = validate_config(config)
    if violations:
        raise InvalidConfigError(violations)
    servers = tuple(config.server_names)
    links: dict[tuple[str, str], str] = {}
    for s in servers:
        links[(GATEWAY, s)] = link_name(GATEWAY, s)
    for s in servers:
        links[(CLIENT, s)] = link_name(CLIENT, s)
    return Topology(gateway=GATEWAY, servers=servers, client=CLIENT, links=links)


def mutator_target(config: ExperimentConfig) -> str:
    return config.delay_mutator.target_server or config.server_names[-1]


# -- presets -----------------------------------------------------------------

def _testbed(n: int) -> ExperimentConfig:
    return ExperimentConfig(
        name=f"testbed-{n}",
        profile="testbed",
        server_count=n,
        base_rtt_ms=(20.0,) * n,
    )


def preset(name: str) -> ExperimentConfig:
    """Return a named paper scenario (``testbed-4/8/12`` or ``edge-2``)."""
    if name.startswith("testbed-") and name in PRESET_NAMES:
        return _testbed(int(name.split("-")[1]))
    if name == "edge-2":
        return ExperimentConfig(
            name="edge-2",
            profile="edge",
            server_count=2,
            base_rtt_ms=(15.0, 60.0),
            delay_mutator=DelayMutatorConfig(enabled=True, target_server="server-2"),
        )
    raise ScenarioError(f"unknown preset {name!r}; expected one of {PRESET_NAMES}")


# -- scenario files ----------------------------------------------------------

_NESTED = {
    "delay_mutator": DelayMutatorConfig,
    "recorder": RecorderConfig,
    "video": VideoConfig,
}


def _strict(cls: type, data: Any, where: str) -> dict[str, Any]:
    if not isinstance(data, dict):
        raise ScenarioError(f"{where}: expected a JSON object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ScenarioError(f"{where}: unknown fields {unknown}")
    return dict(data)


def config_from_dict(data: Any) -> ExperimentConfig:
    """Build a config from parsed JSON, rejecting unknown fields."""
    d = _strict(ExperimentConfig, data, "scenario")
    for key, cls in _NESTED.items():
        if key in d:
            d[key] = cls(**_strict(cls, d[key], key))
    for key in ("base_rtt_ms", "down_servers"):
        if key in d:
            if not isinstance(d[key], list):
                raise ScenarioError(f"scenario: {key} must be a list")
            d[key] = tuple(d[key])
    if "server_count" in d and "base_rtt_ms" not in d and _is_int(d["server_count"]):
        d["base_rtt_ms"] = (20.0,) * max(d["server_count"], 0)
    return ExperimentConfig(**d)


def load_scenario(source: str | Path) -> tuple[ExperimentConfig, bytes]:
    """Resolve a preset name or JSON file; also return the raw scenario bytes."""
    text = str(source)
    if text in PRESET_NAMES and not Path(text).exists():
        cfg = preset(text)
        return cfg, cfg.to_json().encode("utf-8")
    path = Path(source)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
    try:
        data = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ScenarioError(f"{path}: not valid JSON ({exc})") from exc
    try:
        cfg = config_from_dict(data)
    except TypeError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    if cfg.name == "custom":
        cfg = dataclasses.replace(cfg, name=path.stem)
    return cfg, raw
