"""Deterministic trace replay.

Virtual-clock mode advances time only between trace events and only when
the pipeline is quiescent, so a given (trace, config) pair produces a
byte-identical report on every run. Real-time mode paces the same events
by the wall clock and reports genuine orchestration latencies.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from itertools import groupby
from typing import Optional, Union

from ..backends import build_backends
from ..backends.config import RuntimeConfig, apply_override, dump_config, load_config
from ..clock import RealClock, VirtualClock
from ..errors import OliveError
from ..ingest import CHUNK_MS
from ..pipeline import MetricsRecorder, RecordingTransport, SessionPipeline
from .trace import Trace, load_trace

VIRTUAL = "virtual"
REALTIME = "realtime"
MODES = (VIRTUAL, REALTIME)

DRAIN_HORIZON_MS = 600_000  # bound on post-trace drain (paced playback)


@dataclass
class RunReport:
    trace: str
    mode: str
    config_toml: str
    utterances: list = field(default_factory=list)
    interrupts: list = field(default_factory=list)
    clips: list = field(default_factory=list)
    environment_events: list = field(default_factory=list)
    precision_at_k: list = field(default_factory=list)
    expects: list = field(default_factory=list)
    queues: dict = field(default_factory=dict)
    transport_counts: dict = field(default_factory=dict)
    dropped_audio_chunks: int = 0

    # live objects for in-process assertions; not part of the serialized report
    _transport: Optional[RecordingTransport] = None
    _pipeline: Optional[SessionPipeline] = None

    def to_dict(self) -> dict:
        return {
            "trace": self.trace,
            "mode": self.mode,
            "config_toml": self.config_toml,
            "utterances": self.utterances,
            "interrupts": self.interrupts,
            "clips": self.clips,
            "environment_events": self.environment_events,
            "precision_at_k": self.precision_at_k,
            "expects": self.expects,
            "queues": self.queues,
            "transport_counts": self.transport_counts,
            "dropped_audio_chunks": self.dropped_audio_chunks,
        }

    def json_bytes(self) -> bytes:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()

    @property
    def all_expects_pass(self) -> bool:
        return all(e["pass"] for e in self.expects)


def _effective_config(trace: Trace, config: Optional[RuntimeConfig]) -> RuntimeConfig:
    if config is None:
        cfg = load_config(path=None)
    else:
        cfg = copy.deepcopy(config)
    for dotted, value in trace.config_overrides.items():
        apply_override(cfg, dotted, value)
    cfg.validate()
    return cfg


def replay(
    trace: Union[str, Trace],
    mode: str = VIRTUAL,
    config: Optional[RuntimeConfig] = None,
    playback_buffer_chunks: Optional[int] = None,
) -> RunReport:
    if isinstance(trace, (str, bytes)) or hasattr(trace, "read_text"):
        trace = load_trace(trace)
    if mode not in MODES:
        raise OliveError(f"unknown replay mode {mode!r}; expected one of {MODES}")
    cfg = _effective_config(trace, config)
    backends = build_backends(cfg, annotations=trace.annotations)
    clock = VirtualClock() if mode == VIRTUAL else RealClock()
    buffer_chunks = (
        playback_buffer_chunks
        if playback_buffer_chunks is not None
        else trace.playback_buffer_chunks
    )
    transport = RecordingTransport(clock, playback_buffer_chunks=buffer_chunks)
    metrics = MetricsRecorder()
    pipeline = SessionPipeline(
        session_id="replay", config=cfg, backends=backends, clock=clock,
        transport=transport, metrics=metrics,
    )

    media = [e for e in trace.events if e.kind in ("audio", "frame")]
    for t_ms, group in groupby(media, key=lambda e: e.t_ms):
        if mode == VIRTUAL:
            clock.set_ms(t_ms)
            pipeline.cycle()
        else:
            # cycle in <=16 ms slices while waiting so paced output drains
            while clock.now_ms() < t_ms:
                step = min(t_ms, clock.now_ms() + CHUNK_MS)
                clock.sleep_until_ms(step)
                pipeline.cycle()
        for event in group:
            if event.kind == "audio":
                pipeline.submit_audio(event.audio)
            else:
                pipeline.submit_frame(
                    event.t_ms, event.frame_payload, event.frame_is_features
                )
        pipeline.cycle()
    pipeline.submit_end()
    pipeline.cycle()

    # drain: paced playback needs time to advance before the writer can finish
    limit = clock.now_ms() + DRAIN_HORIZON_MS
    while pipeline.pending_work() and clock.now_ms() < limit and not pipeline.faulted:
        if mode == VIRTUAL:
            clock.advance_ms(CHUNK_MS)
        else:
            clock.sleep_until_ms(clock.now_ms() + CHUNK_MS)
        pipeline.cycle()

    return _build_report(trace, mode, cfg, pipeline, transport, metrics)


def _build_report(trace, mode, cfg, pipeline, transport, metrics) -> RunReport:
    report = RunReport(
        trace=trace.name,
        mode=mode,
        config_toml=dump_config(cfg),
        _transport=transport,
        _pipeline=pipeline,
    )
    for um in metrics.utterances:
        first_audio_latency = None
        if um.first_audio_wall_ms is not None and um.wall_end_ms is not None:
            first_audio_latency = um.first_audio_wall_ms - um.wall_end_ms
        report.utterances.append(
            {
                "utterance_id": um.utterance_id,
                "t_start_ms": um.t_start_ms,
                "t_end_ms": um.t_end_ms,
                "sound_class": um.sound_class,
                "transcript": um.transcript,
                "gate_verdict": um.gate_verdict,
                "gate_reason": um.gate_reason,
                "answered": um.answered,
                "answer": um.answer,
                "grounded_clips": list(um.grounded_clips),
                "gate_ms": um.gate_ms,
                "retrieve_ms": um.retrieve_ms,
                "generate_ms": um.generate_ms,
                "first_audio_latency_ms": first_audio_latency,
                "tts_chunks": um.tts_chunks,
            }
        )
    for im in metrics.interrupts:
        latency = None
        if im.written_wall_ms is not None:
            latency = im.written_wall_ms - im.detect_wall_ms
        report.interrupts.append(
            {
                "generation": im.generation,
                "t_ms": im.t_ms,
                "latency_ms": latency,
            }
        )
    report.clips = [
        {
            "index": r.clip_index,
            "t_start_ms": r.t_start_ms,
            "t_end_ms": r.t_end_ms,
            "flags": list(r.flags),
        }
        for r in pipeline.bank.records
    ]
    report.environment_events = [
        {"utterance_id": u, "sound_class": c} for u, c in metrics.environment_events
    ]
    top_k = cfg.memory.top_k
    for question, truth in trace.annotations.query_truth.items():
        um = _find_utterance(report.utterances, question)
        grounded = um["grounded_clips"] if um else []
        hits = len(set(grounded) & set(truth))
        report.precision_at_k.append(
            {
                "question": question,
                "k": top_k,
                "truth": sorted(truth),
                "grounded": grounded,
                "hits": hits,
                "precision": hits / top_k,
            }
        )
    report.queues = pipeline.queue_stats()
    report.transport_counts = {
        "audio_frames": len(transport.audio_entries()),
        "json_messages": len(transport.json_entries()),
        "interrupts": len(transport.json_entries("interrupt")),
    }
    report.dropped_audio_chunks = metrics.dropped_audio_chunks
    for event in trace.events:
        if event.kind == "expect":
            report.expects.append(
                _evaluate_expect(event.payload, report, transport, mode)
            )
    return report


def _find_utterance(utterances, question):
    for u in utterances:
        if u["transcript"] == question:
            return u
    return None


def _evaluate_expect(payload: dict, report: RunReport, transport, mode: str) -> dict:
    etype = payload["expect_type"]
    out = {"expect_type": etype, "params": {k: v for k, v in payload.items() if k != "expect_type"}}

    def verdict(ok: bool, detail: str = ""):
        out["pass"] = bool(ok)
        out["detail"] = detail
        return out

    if etype == "interrupt_by_ms":
        t_ms = int(payload["t_ms"])
        hit = [i for i in report.interrupts if i["t_ms"] == t_ms]
        if not hit:
            return verdict(False, f"no interrupt at t={t_ms}")
        if "deadline_ms" in payload and mode == REALTIME:
            lat = hit[0]["latency_ms"]
            if lat is None or lat > float(payload["deadline_ms"]):
                return verdict(False, f"interrupt latency {lat} ms")
        return verdict(True)

    if etype == "no_stale_audio_after_interrupt":
        log = transport.log
        latest_gen = 0
        for entry in log:
            if entry["kind"] == "json" and entry["message"]["type"] == "interrupt":
                latest_gen = entry["message"]["payload"]["generation"]
            elif entry["kind"] == "audio" and entry["generation"] < latest_gen:
                return verdict(
                    False,
                    f"stale gen-{entry['generation']} audio after interrupt gen {latest_gen}",
                )
        return verdict(True)

    if etype == "retrieved_contains":
        question = payload["question"]
        um = _find_utterance(report.utterances, question)
        if um is None or not um["answered"]:
            return verdict(False, f"question {question!r} was not answered")
        clip = int(payload["clip_index"])
        grounded = um["grounded_clips"]
        if clip not in grounded:
            return verdict(False, f"clip {clip} not in grounded {grounded}")
        if "rank" in payload:
            rank = int(payload["rank"])
            if len(grounded) < rank or grounded[rank - 1] != clip:
                return verdict(False, f"clip {clip} not at rank {rank} in {grounded}")
        return verdict(True)

    if etype == "retrieved_only_before":
        question = payload["question"]
        cutoff = int(payload["t_ms"])
        um = _find_utterance(report.utterances, question)
        if um is None or not um["answered"]:
            return verdict(False, f"question {question!r} was not answered")
        ends = {c["index"]: c["t_end_ms"] for c in report.clips}
        late = [i for i in um["grounded_clips"] if ends.get(i, cutoff + 1) > cutoff]
        if late:
            return verdict(False, f"grounded clips {late} end after {cutoff} ms")
        return verdict(True)

    if etype == "answer_equals":
        question = payload["question"]
        um = _find_utterance(report.utterances, question)
        if um is None:
            return verdict(False, f"question {question!r} never transcribed")
        if um["answer"] != payload["answer"]:
            return verdict(False, f"answer {um['answer']!r} != {payload['answer']!r}")
        return verdict(True)

    if etype == "answer_count":
        question = payload["question"]
        count = sum(
            1 for u in report.utterances if u["transcript"] == question and u["answered"]
        )
        want = int(payload["count"])
        return verdict(count == want, f"answered {count} times, expected {want}")

    if etype == "no_tts_audio":
        n = len(transport.audio_entries())
        return verdict(n == 0, f"{n} audio frames on the transport")

    if etype == "tts_chunk_count":
        question = payload["question"]
        um = _find_utterance(report.utterances, question)
        if um is None:
            return verdict(False, f"question {question!r} never transcribed")
        want = int(payload["count"])
        return verdict(
            um["tts_chunks"] == want, f"{um['tts_chunks']} chunks, expected {want}"
        )

    raise OliveError(f"unknown expect kind {etype!r}")
