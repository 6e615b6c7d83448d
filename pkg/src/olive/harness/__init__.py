"""Deterministic replay, scenario traces and metrics."""

from .metrics import measure, nearest_rank
from .replay import MODES, REALTIME, VIRTUAL, RunReport, replay
from .trace import Trace, TraceEvent, bundled_trace_path, load_trace, parse_trace

__all__ = [
    "MODES",
    "REALTIME",
    "VIRTUAL",
    "RunReport",
    "Trace",
    "TraceEvent",
    "bundled_trace_path",
    "load_trace",
    "measure",
    "nearest_rank",
    "parse_trace",
    "replay",
]
