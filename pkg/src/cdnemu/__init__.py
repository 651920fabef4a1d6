"""CDN emulation harness: RTT-based server selection, redirect-driven DASH
streaming, delay injection and RTT/CPU telemetry analysis."""

from .analysis import BoxStats, TradeoffReport, load_series_csv, summarize, tradeoff_report
from .orchestrator import RunArtifacts, run_experiment, run_suite
from .topology import ExperimentConfig, build_topology, preset, validate_config

__all__ = [
    "BoxStats", "ExperimentConfig", "RunArtifacts", "TradeoffReport", "build_topology",
    "load_series_csv", "preset", "run_experiment", "run_suite", "summarize",
    "tradeoff_report", "validate_config",
]
__version__ = "0.1.0"
