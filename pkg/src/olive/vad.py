"""Energy-threshold voice activity detection.

A deterministic RMS state machine with onset/hangover debouncing replaces
a model-based detector so segmentation is a testable contract; VadBackend
is the seam for substituting a model later. Phases:

    Silence -> Candidate -> Speech -> Trailing -> (Speech | Silence)

A Candidate that loses energy before maturing falls back to Silence
without emitting anything. The emitted segment always includes the
Candidate prefix (onsets must not clip the first phoneme) and the
Trailing hangover audio.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Protocol, Union

from .errors import SequencingError, SessionFaultedError
from .ingest import CHUNK_MS, SAMPLE_RATE, AudioChunk


@dataclass(frozen=True)
class VadConfig:
    energy_threshold: float = 700.0   # RMS in int16 PCM units
    onset_min_ms: int = 64
    hangover_ms: int = 256
    max_segment_ms: int = 30000

    def validate(self) -> None:
        problems = []
        if self.energy_threshold <= 0:
            problems.append("energy_threshold must be > 0")
        for name in ("onset_min_ms", "hangover_ms", "max_segment_ms"):
            v = getattr(self, name)
            if v <= 0 or v % CHUNK_MS != 0:
                problems.append(f"{name} must be a positive multiple of {CHUNK_MS} ms")
        if problems:
            raise ValueError("; ".join(problems))


class Phase(enum.Enum):
    SILENCE = "silence"
    CANDIDATE = "candidate"
    SPEECH = "speech"
    TRAILING = "trailing"


@dataclass(frozen=True)
class VoiceSegment:
    session_id: str
    t_start_ms: int
    t_end_ms: int
    samples: bytes

    @property
    def duration_ms(self) -> int:
        return self.t_end_ms - self.t_start_ms


@dataclass(frozen=True)
class VoiceStart:
    t_ms: int


@dataclass(frozen=True)
class VoiceEnd:
    segment: VoiceSegment


VadEvent = Union[VoiceStart, VoiceEnd]


class VadBackend(Protocol):
    """Voicing decision seam; the default is the RMS threshold."""

    def is_voiced(self, chunk: AudioChunk, cfg: VadConfig) -> bool: ...


class RmsVadBackend:
    def is_voiced(self, chunk: AudioChunk, cfg: VadConfig) -> bool:
        return chunk.rms() >= cfg.energy_threshold


@dataclass
class VadState:
    phase: Phase = Phase.SILENCE
    segment_chunks: list = field(default_factory=list)
    t_segment_start: int = 0
    candidate_ms: int = 0
    trailing_ms: int = 0
    last_seq: int = -1
    faulted: bool = False


class VoiceDetector:
    """Per-session VAD. Chunks must arrive in seq order; a gap faults the
    session and all further input is rejected."""

    def __init__(self, cfg: VadConfig, backend: Optional[VadBackend] = None):
        cfg.validate()
        self.cfg = cfg
        self.backend = backend or RmsVadBackend()
        self.state = VadState()

    def process_chunk(self, chunk: AudioChunk) -> list[VadEvent]:
        st = self.state
        if st.faulted:
            raise SessionFaultedError("vad is faulted; chunk rejected")
        if chunk.seq != st.last_seq + 1:
            st.faulted = True
            raise SequencingError(
                f"chunk seq {chunk.seq} after {st.last_seq}; expected {st.last_seq + 1}"
            )
        st.last_seq = chunk.seq

        voiced = self.backend.is_voiced(chunk, self.cfg)
        events: list[VadEvent] = []

        if st.phase is Phase.SILENCE:
            if voiced:
                st.phase = Phase.CANDIDATE
                st.segment_chunks = [chunk]
                st.t_segment_start = chunk.t_start_ms
                st.candidate_ms = CHUNK_MS
                if st.candidate_ms >= self.cfg.onset_min_ms:
                    st.phase = Phase.SPEECH
                    events.append(VoiceStart(t_ms=st.t_segment_start))
        elif st.phase is Phase.CANDIDATE:
            if voiced:
                st.segment_chunks.append(chunk)
                st.candidate_ms += CHUNK_MS
                if st.candidate_ms >= self.cfg.onset_min_ms:
                    st.phase = Phase.SPEECH
                    events.append(VoiceStart(t_ms=st.t_segment_start))
            else:
                st.phase = Phase.SILENCE
                st.segment_chunks = []
                st.candidate_ms = 0
        elif st.phase is Phase.SPEECH:
            st.segment_chunks.append(chunk)
            if not voiced:
                st.phase = Phase.TRAILING
                st.trailing_ms = CHUNK_MS
                events.extend(self._maybe_close_trailing(chunk))
        elif st.phase is Phase.TRAILING:
            st.segment_chunks.append(chunk)
            if voiced:
                st.phase = Phase.SPEECH
                st.trailing_ms = 0
            else:
                st.trailing_ms += CHUNK_MS
                events.extend(self._maybe_close_trailing(chunk))

        if st.phase in (Phase.SPEECH, Phase.TRAILING):
            elapsed = chunk.t_start_ms + CHUNK_MS - st.t_segment_start
            if elapsed >= self.cfg.max_segment_ms:
                # Forced closure; candidacy restarts at the next chunk so
                # segments never overlap.
                events.append(VoiceEnd(segment=self._close(chunk)))
        return events

    def _maybe_close_trailing(self, chunk: AudioChunk) -> list[VadEvent]:
        st = self.state
        if st.trailing_ms >= self.cfg.hangover_ms:
            return [VoiceEnd(segment=self._close(chunk))]
        return []

    def _close(self, last_chunk: AudioChunk) -> VoiceSegment:
        st = self.state
        samples = b"".join(c.samples for c in st.segment_chunks)
        segment = VoiceSegment(
            session_id=last_chunk.session_id,
            t_start_ms=st.t_segment_start,
            t_end_ms=last_chunk.t_start_ms + CHUNK_MS,
            samples=samples,
        )
        st.phase = Phase.SILENCE
        st.segment_chunks = []
        st.candidate_ms = 0
        st.trailing_ms = 0
        return segment

    def flush(self, session_end: bool = True) -> list[VadEvent]:
        """Close an open episode at stream end (Speech/Trailing only;
        an immature Candidate is discarded)."""
        st = self.state
        if st.phase in (Phase.SPEECH, Phase.TRAILING) and st.segment_chunks:
            last = st.segment_chunks[-1]
            return [VoiceEnd(segment=self._close(last))]
        st.phase = Phase.SILENCE
        st.segment_chunks = []
        return []
