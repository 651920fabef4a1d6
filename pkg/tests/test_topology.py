from __future__ import annotations

import dataclasses
import json

import pytest

from cdnemu.errors import InvalidConfigError, ScenarioError
from cdnemu.topology import (DelayMutatorConfig, ExperimentConfig, PRESET_NAMES, build_topology,
                             config_from_dict, load_scenario, mutator_target, preset,
                             validate_config)


def codes(cfg):
    return {v.code for v in validate_config(cfg)}


def test_defaults_are_valid():
    assert validate_config(ExperimentConfig()) == []


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_presets_valid(name):
    cfg = preset(name)
    assert validate_config(cfg) == []
    assert len(cfg.base_rtt_ms) == cfg.server_count


def test_topology_shape():
    topo = build_topology(preset("testbed-8"))
    assert len(topo.nodes) == 10
    assert len(topo.links) == 16
    assert topo.servers == tuple(f"server-{i}" for i in range(1, 9))
    for s in topo.servers:
        assert topo.link_between("gateway", s) == f"gateway--{s}"
        assert topo.link_between(s, "client") == f"client--{s}"
    assert topo.link_between("gateway", "client") is None


def test_topology_deterministic():
    assert build_topology(preset("testbed-4")) == build_topology(preset("testbed-4"))


@pytest.mark.parametrize("changes,code", [
    ({"server_count": 0, "base_rtt_ms": ()}, "server_count_min"),
    ({"base_rtt_ms": (20.0,)}, "base_rtt_length"),
    ({"base_rtt_ms": (20.0, -1.0, 20.0, 20.0)}, "base_rtt_negative"),
    ({"rtt_noise_lambda_ms": -1}, "rtt_noise_negative"),
    ({"cpu_noise_lambda_pct": -0.5}, "cpu_noise_negative"),
    ({"seed": 2**64}, "seed_range"),
    ({"delay_mutator": DelayMutatorConfig(min_delay_ms=900)}, "delay_bounds_order"),
    ({"delay_mutator": DelayMutatorConfig(min_delay_ms=-1)}, "delay_min_negative"),
    ({"delay_mutator": DelayMutatorConfig(sleep_lambda_s=0)}, "sleep_lambda_positive"),
    ({"delay_mutator": DelayMutatorConfig(target_server="server-9")}, "mutator_target_unknown"),
    ({"down_servers": ("server-7",)}, "down_servers_unknown"),
    ({"profile": "cloud"}, "profile_unknown"),
    ({"clock_mode": "sundial"}, "clock_mode_unknown"),
    ({"client_rate_bytes_per_s": 0}, "rate_positive"),
])
def test_violations(changes, code):
    cfg = dataclasses.replace(ExperimentConfig(), **changes)
    assert code in codes(cfg)
    with pytest.raises(InvalidConfigError):
        build_topology(cfg)


def test_every_violation_reported():
    cfg = dataclasses.replace(ExperimentConfig(), base_rtt_ms=(1.0,), rtt_noise_lambda_ms=-1,
                              delay_mutator=DelayMutatorConfig(min_delay_ms=900))
    assert {"base_rtt_length", "rtt_noise_negative", "delay_bounds_order"} <= codes(cfg)


def test_equal_delay_bounds_ok():
    cfg = dataclasses.replace(ExperimentConfig(),
                              delay_mutator=DelayMutatorConfig(min_delay_ms=300, max_delay_ms=300))
    assert validate_config(cfg) == []


def test_scenario_json_roundtrip(tmp_path):
    cfg = preset("edge-2")
    path = tmp_path / "s.json"
    path.write_text(cfg.to_json())
    loaded, raw = load_scenario(path)
    assert loaded == cfg
    assert raw == path.read_bytes()


def test_scenario_unknown_field(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(json.dumps({"server_count": 2, "bogus": 1}))
    with pytest.raises(ScenarioError):
        load_scenario(path)


def test_scenario_bad_json(tmp_path):
    path = tmp_path / "s.json"
    path.write_text("{")
    with pytest.raises(ScenarioError):
        load_scenario(path)


def test_unknown_preset():
    with pytest.raises(ScenarioError):
        load_scenario("testbed-5")


def test_server_count_fills_base_rtts():
    cfg = config_from_dict({"server_count": 3})
    assert cfg.base_rtt_ms == (20.0, 20.0, 20.0)


def test_mutator_target_defaults_to_last():
    assert mutator_target(preset("testbed-4")) == "server-4"
    assert mutator_target(preset("edge-2")) == "server-2"


def test_quick():
    q = preset("testbed-4").quick()
    assert (q.recorder.num_pings, q.recorder.cpu_iterations) == (100, 100)
