"""Replay trace format.

A trace is JSONL, one event per line, sorted by t_ms:

    {"t_ms": 0, "kind": "audio", "payload": {...}}
    {"t_ms": 0, "kind": "frame", "payload": {...}}
    {"t_ms": 0, "kind": "annotation", "payload": {"annotation_type": ...}}
    {"t_ms": 0, "kind": "expect", "payload": {"expect_type": ...}}

Audio payloads carry raw PCM as base64 ({"pcm_b64"}) or a deterministic
synthesis recipe the loader expands ({"silence_ms"} or {"tone_ms",
"amplitude", "hz"}), keeping bundled traces small and their construction
explicit. The session audio timeline must be contiguous: each audio
event's t_ms must equal the running total of audio already supplied.

Frame payloads carry a JPEG ({"image_b64"}), a float32 feature matrix
({"features_b64", "rows", "cols"}), or a recipe: {"features_from_key":
{"key", "rows", "cols"}} tiles the hashed embedding of a key;
{"features_from_question": {"question", "rows", "cols"}} tiles the
reference question encoding, which makes retrieval of that clip by that
question analytically certain (cosine exactly 1).

Annotations carry wizard ground truth (annotation_type segment/answer/
query_truth) or trace metadata (annotation_type meta: a human note,
config overrides and transport pacing).
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from ..backends.hashing import hashed_vector, token_key
from ..backends.reference import ReferenceCompressor
from ..backends.wizard import SegmentTruth, TraceAnnotations
from ..errors import TraceFormatError
from ..ingest import SAMPLE_RATE

KINDS = ("audio", "frame", "annotation", "expect")
ANNOTATION_TYPES = ("segment", "answer", "query_truth", "meta")


@dataclass(frozen=True)
class TraceEvent:
    t_ms: int
    kind: str
    payload: dict
    line_no: int
    # expanded media payloads
    audio: Optional[bytes] = None
    frame_payload: Optional[Union[bytes, np.ndarray]] = None
    frame_is_features: bool = False


@dataclass
class Trace:
    events: list[TraceEvent]
    annotations: TraceAnnotations
    config_overrides: dict = field(default_factory=dict)
    playback_buffer_chunks: Optional[int] = None
    name: str = ""


def synth_silence(ms: int) -> bytes:
    return b"\x00\x00" * (ms * SAMPLE_RATE // 1000)


def synth_tone(ms: int, amplitude: int = 20000, hz: float = 440.0) -> bytes:
    n = ms * SAMPLE_RATE // 1000
    t = np.arange(n, dtype=np.float64)
    wave = amplitude * np.sin(2.0 * np.pi * hz * t / SAMPLE_RATE)
    return wave.astype("<i2").tobytes()


def question_vector(question: str, cols: int) -> np.ndarray:
    """The reference question encoding, exposed for trace construction."""
    return ReferenceCompressor().encode_question(np.zeros((0, cols)), question)


def _expand_audio(payload: dict, line_no: int) -> bytes:
    if "pcm_b64" in payload:
        return base64.b64decode(payload["pcm_b64"])
    if "silence_ms" in payload:
        return synth_silence(int(payload["silence_ms"]))
    if "tone_ms" in payload:
        return synth_tone(
            int(payload["tone_ms"]),
            int(payload.get("amplitude", 20000)),
            float(payload.get("hz", 440.0)),
        )
    raise TraceFormatError("audio payload needs pcm_b64, silence_ms or tone_ms", line_no)


def _expand_frame(payload: dict, line_no: int):
    if "image_b64" in payload:
        return base64.b64decode(payload["image_b64"]), False
    if "features_b64" in payload:
        rows, cols = int(payload["rows"]), int(payload["cols"])
        data = np.frombuffer(base64.b64decode(payload["features_b64"]), dtype="<f4")
        if data.size != rows * cols:
            raise TraceFormatError(
                f"features_b64 carries {data.size} values, expected {rows * cols}", line_no
            )
        return data.astype(np.float64).reshape(rows, cols), True
    if "features_from_key" in payload:
        spec = payload["features_from_key"]
        vec = hashed_vector(token_key(str(spec["key"])), int(spec["cols"]))
        return np.tile(vec, (int(spec["rows"]), 1)), True
    if "features_from_question" in payload:
        spec = payload["features_from_question"]
        vec = question_vector(str(spec["question"]), int(spec["cols"]))
        return np.tile(vec, (int(spec["rows"]), 1)), True
    raise TraceFormatError(
        "frame payload needs image_b64, features_b64, features_from_key or "
        "features_from_question",
        line_no,
    )


def parse_trace(text: str, name: str = "") -> Trace:
    events: list[TraceEvent] = []
    annotations = TraceAnnotations()
    overrides: dict = {}
    playback_buffer = None
    last_t = -1
    audio_cursor_ms = 0
    for line_no, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TraceFormatError(f"invalid JSON: {exc.msg}", line_no) from exc
        if not isinstance(obj, dict):
            raise TraceFormatError("event must be a JSON object", line_no)
        kind = obj.get("kind")
        if kind not in KINDS:
            raise TraceFormatError(f"unknown event kind {kind!r}", line_no)
        t_ms = obj.get("t_ms")
        if not isinstance(t_ms, int) or t_ms < 0:
            raise TraceFormatError("t_ms must be a non-negative integer", line_no)
        if t_ms < last_t:
            raise TraceFormatError(
                f"events out of order: t_ms {t_ms} after {last_t}", line_no
            )
        last_t = t_ms
        payload = obj.get("payload")
        if not isinstance(payload, dict):
            raise TraceFormatError("payload must be an object", line_no)

        audio = None
        frame_payload = None
        frame_is_features = False
        if kind == "audio":
            if t_ms != audio_cursor_ms:
                raise TraceFormatError(
                    f"audio timeline gap: event at {t_ms} ms but stream is at "
                    f"{audio_cursor_ms} ms",
                    line_no,
                )
            audio = _expand_audio(payload, line_no)
            if len(audio) % 2 != 0:
                raise TraceFormatError("audio payload splits a 16-bit sample", line_no)
            audio_cursor_ms += len(audio) // 2 * 1000 // SAMPLE_RATE
        elif kind == "frame":
            frame_payload, frame_is_features = _expand_frame(payload, line_no)
        elif kind == "annotation":
            atype = payload.get("annotation_type")
            if atype not in ANNOTATION_TYPES:
                raise TraceFormatError(f"unknown annotation_type {atype!r}", line_no)
            if atype == "segment":
                annotations.segments.append(
                    SegmentTruth(
                        t_start_ms=int(payload["t_start_ms"]),
                        t_end_ms=int(payload["t_end_ms"]),
                        sound_class=str(payload["class"]),
                        transcript=str(payload.get("transcript", "")),
                    )
                )
            elif atype == "answer":
                annotations.answers[str(payload["question"])] = str(payload["answer"])
            elif atype == "query_truth":
                annotations.query_truth[str(payload["question"])] = [
                    int(i) for i in payload["clip_indices"]
                ]
            elif atype == "meta":
                if "note" in payload:
                    annotations.notes.append(str(payload["note"]))
                for key, value in (payload.get("config") or {}).items():
                    overrides[str(key)] = value
                transport = payload.get("transport") or {}
                if "playback_buffer_chunks" in transport:
                    playback_buffer = int(transport["playback_buffer_chunks"])
        elif kind == "expect":
            if "expect_type" not in payload:
                raise TraceFormatError("expect payload needs expect_type", line_no)
        events.append(
            TraceEvent(
                t_ms=t_ms,
                kind=kind,
                payload=payload,
                line_no=line_no,
                audio=audio,
                frame_payload=frame_payload,
                frame_is_features=frame_is_features,
            )
        )
    return Trace(
        events=events,
        annotations=annotations,
        config_overrides=overrides,
        playback_buffer_chunks=playback_buffer,
        name=name,
    )


def load_trace(path) -> Trace:
    path = Path(path)
    return parse_trace(path.read_text(encoding="utf-8"), name=path.stem)


def bundled_trace_path(name: str) -> Path:
    """Resolve a bundled scenario trace by bare name ("weather" or
    "weather.jsonl")."""
    if not name.endswith(".jsonl"):
        name += ".jsonl"
    return Path(__file__).parent / "traces" / name
