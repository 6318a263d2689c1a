"""Benchmark harness for multi-agent coordination over partitioned inputs."""

from .core import Answer, Level, Protocol, RunConfig, RunLog, TaskId, TaskInstance
from .metrics import MetricsReport, compute_metrics
from .analysis import FailureReport, classify
from .runtime import run_episode
from .taskgen import GenSpec, generate

__all__ = [
    "Answer",
    "FailureReport",
    "GenSpec",
    "Level",
    "MetricsReport",
    "Protocol",
    "RunConfig",
    "RunLog",
    "TaskId",
    "TaskInstance",
    "classify",
    "compute_metrics",
    "generate",
    "run_episode",
]
