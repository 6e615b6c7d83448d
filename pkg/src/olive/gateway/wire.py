"""Wire protocol: JSON control frames and binary media frames.

JSON text frames are {"type", "session", "payload"} with type in
{hello, ready, interrupt, transcript, answer, status, bye}. Binary
frames are a 1-byte kind tag (0x01 audio-in, 0x02 frame-in, 0x11
audio-out), a 4-byte big-endian seq, an 8-byte big-endian timestamp in
ms, then the body. Binary framing keeps per-chunk overhead under 2% at
16 ms audio granularity, which base64-in-JSON would not.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

PROTOCOL_VERSION = "ol/1"

KIND_AUDIO_IN = 0x01
KIND_FRAME_IN = 0x02
KIND_AUDIO_OUT = 0x11
BINARY_KINDS = (KIND_AUDIO_IN, KIND_FRAME_IN, KIND_AUDIO_OUT)

_HEADER = struct.Struct(">BIQ")


class WireFormatError(ValueError):
    pass


@dataclass(frozen=True)
class BinaryFrame:
    kind: int
    seq: int
    t_ms: int
    body: bytes


def encode_binary(frame: BinaryFrame) -> bytes:
    if frame.kind not in BINARY_KINDS:
        raise WireFormatError(f"unknown binary kind 0x{frame.kind:02x}")
    if not (0 <= frame.seq < 2**32):
        raise WireFormatError(f"seq {frame.seq} out of range")
    if not (0 <= frame.t_ms < 2**64):
        raise WireFormatError(f"t_ms {frame.t_ms} out of range")
    return _HEADER.pack(frame.kind, frame.seq, frame.t_ms) + frame.body


def decode_binary(data: bytes) -> BinaryFrame:
    if len(data) < _HEADER.size:
        raise WireFormatError(f"binary frame too short: {len(data)} bytes")
    kind, seq, t_ms = _HEADER.unpack_from(data)
    if kind not in BINARY_KINDS:
        raise WireFormatError(f"unknown binary kind 0x{kind:02x}")
    return BinaryFrame(kind=kind, seq=seq, t_ms=t_ms, body=data[_HEADER.size :])


class Profile(BaseModel):
    model_config = ConfigDict(extra="forbid")
    t: int = 16
    n: int = 16
    p: int = 4
    c: int = 64
    sample_rate: int = 16000


class HelloPayload(BaseModel):
    model_config = ConfigDict(extra="forbid")
    version: str
    profile: Optional[Profile] = None


class HelloMessage(BaseModel):
    model_config = ConfigDict(extra="forbid")
    type: Literal["hello"]
    session: str
    payload: HelloPayload


class ReadyPayload(BaseModel):
    model_config = ConfigDict(extra="forbid")
    version: str = PROTOCOL_VERSION
    profile: Profile


class ReadyMessage(BaseModel):
    model_config = ConfigDict(extra="forbid")
    type: Literal["ready"] = "ready"
    session: str
    payload: ReadyPayload


class InterruptPayload(BaseModel):
    model_config = ConfigDict(extra="forbid")
    t_ms: int
    generation: int


class InterruptMessage(BaseModel):
    model_config = ConfigDict(extra="forbid")
    type: Literal["interrupt"] = "interrupt"
    session: str
    payload: InterruptPayload


class TranscriptPayload(BaseModel):
    model_config = ConfigDict(extra="forbid")
    utterance_id: int
    t_start_ms: int
    t_end_ms: int
    sound_class: str
    text: str


class TranscriptMessage(BaseModel):
    model_config = ConfigDict(extra="forbid")
    type: Literal["transcript"] = "transcript"
    session: str
    payload: TranscriptPayload


class AnswerPayload(BaseModel):
    model_config = ConfigDict(extra="forbid")
    utterance_id: int
    question: str
    answer: str
    grounded_clips: list[int]
    gate_ms: float = 0.0
    retrieve_ms: float = 0.0
    generate_ms: float = 0.0


class AnswerMessage(BaseModel):
    model_config = ConfigDict(extra="forbid")
    type: Literal["answer"] = "answer"
    session: str
    payload: AnswerPayload


class StatusPayload(BaseModel):
    model_config = ConfigDict(extra="forbid")
    status: str
    detail: str = ""
    utterance_id: Optional[int] = None


class StatusMessage(BaseModel):
    model_config = ConfigDict(extra="forbid")
    type: Literal["status"] = "status"
    session: str
    payload: StatusPayload


class ByePayload(BaseModel):
    model_config = ConfigDict(extra="forbid")
    reason: str = ""


class ByeMessage(BaseModel):
    model_config = ConfigDict(extra="forbid")
    type: Literal["bye"] = "bye"
    session: str
    payload: ByePayload


JsonMessage = Union[
    HelloMessage,
    ReadyMessage,
    InterruptMessage,
    TranscriptMessage,
    AnswerMessage,
    StatusMessage,
    ByeMessage,
]

_MESSAGE_TYPES = {
    "hello": HelloMessage,
    "ready": ReadyMessage,
    "interrupt": InterruptMessage,
    "transcript": TranscriptMessage,
    "answer": AnswerMessage,
    "status": StatusMessage,
    "bye": ByeMessage,
}


def parse_json_message(data: dict) -> JsonMessage:
    """Validate an inbound JSON frame. Unknown or malformed types raise
    WireFormatError; the connection-level policy (error status, keep the
    socket) lives in the app layer."""
    if not isinstance(data, dict):
        raise WireFormatError("JSON frame must be an object")
    mtype = data.get("type")
    model = _MESSAGE_TYPES.get(mtype)
    if model is None:
        raise WireFormatError(f"unknown message type {mtype!r}")
    try:
        return model.model_validate(data)
    except ValidationError as exc:
        raise WireFormatError(f"invalid {mtype} message: {exc.errors()[0]['msg']}") from exc
