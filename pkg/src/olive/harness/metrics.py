"""Aggregate metrics over a replay report.

Percentiles use the nearest-rank method: for n sorted values the p-th
percentile is the ceil(p/100 * n)-th smallest. An empty report yields
empty metrics, not an error.
"""

from __future__ import annotations

import math


def nearest_rank(values, p: float):
    if not values:
        return None
    ordered = sorted(values)
    rank = max(1, math.ceil(p / 100.0 * len(ordered)))
    return ordered[min(rank, len(ordered)) - 1]


def _summary(values) -> dict:
    return {
        "count": len(values),
        "p50": nearest_rank(values, 50),
        "p95": nearest_rank(values, 95),
        "max": max(values),
    }


def measure(report) -> dict:
    """Compute p50/p95 latency summaries and mean precision@k."""
    if hasattr(report, "to_dict"):
        report = report.to_dict()
    out: dict = {}
    first_audio = [
        u["first_audio_latency_ms"]
        for u in report.get("utterances", [])
        if u.get("first_audio_latency_ms") is not None
    ]
    if first_audio:
        out["first_audio_latency_ms"] = _summary(first_audio)
    gate = [u["gate_ms"] for u in report.get("utterances", []) if u.get("answered")]
    if gate:
        out["gate_ms"] = _summary(gate)
    retrieve = [
        u["retrieve_ms"] for u in report.get("utterances", []) if u.get("answered")
    ]
    if retrieve:
        out["retrieve_ms"] = _summary(retrieve)
    generate = [
        u["generate_ms"] for u in report.get("utterances", []) if u.get("answered")
    ]
    if generate:
        out["generate_ms"] = _summary(generate)
    interrupts = [
        i["latency_ms"] for i in report.get("interrupts", []) if i.get("latency_ms") is not None
    ]
    if interrupts:
        out["interrupt_latency_ms"] = _summary(interrupts)
    precisions = [p["precision"] for p in report.get("precision_at_k", [])]
    if precisions:
        out["precision_at_k"] = {
            "count": len(precisions),
            "mean": sum(precisions) / len(precisions),
        }
    return out
