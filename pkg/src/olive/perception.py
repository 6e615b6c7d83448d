"""Streaming perception: the audio path (sound class + transcript) and the
video path (per-frame semantic tokens assembled into fixed-length clips).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import ProfileMismatchError
from .ingest import RawFrame
from .vad import VoiceSegment

logger = logging.getLogger(__name__)

SOUND_SPEECH = "speech"
SOUND_ERROR = "error"


@dataclass(frozen=True)
class AudioResult:
    segment: VoiceSegment
    sound_class: str  # open label set: speech, silence, laughing, clapping, raining, ...
    transcript: str
    backend_latency_ms: float = 0.0

    def __post_init__(self):
        if self.transcript and self.sound_class != SOUND_SPEECH:
            raise ValueError(
                f"non-empty transcript requires class {SOUND_SPEECH!r}, got {self.sound_class!r}"
            )


@dataclass(frozen=True)
class FrameFeatures:
    frame: RawFrame
    tokens: np.ndarray  # N x C


@dataclass(frozen=True)
class ClipFeatures:
    clip_index: int
    t_start_ms: int
    t_end_ms: int
    features: np.ndarray  # (T*N) x C, frames stacked in time order
    frame_times: tuple[int, ...]
    tokens_per_frame: int


def classify_and_transcribe(segment: VoiceSegment, backend, clock=None) -> AudioResult:
    """Run the audio backend on a closed voice segment.

    Backend failures surface as a class="error" result instead of raising:
    real-time semantics mean the segment is not retried.
    """
    t0 = clock.now_ms() if clock else 0.0
    try:
        sound_class, transcript = backend.classify_and_transcribe(segment)
    except Exception:
        logger.warning("asr backend failed for segment at %d ms", segment.t_start_ms,
                       exc_info=True)
        return AudioResult(segment, SOUND_ERROR, "", 0.0)
    latency = (clock.now_ms() - t0) if clock else 0.0
    return AudioResult(segment, sound_class, transcript, latency)


def extract_frame_features(frame: RawFrame, backend) -> Optional[FrameFeatures]:
    """Encode one frame. Replay-mode feature matrices pass through
    unchanged; an undecodable image drops the frame and the pipeline
    continues."""
    if frame.is_features:
        tokens = np.asarray(frame.payload, dtype=np.float64)
        return FrameFeatures(frame, tokens)
    try:
        tokens = backend.encode_frame(frame.payload)
    except Exception:
        logger.warning("frame %d at %d ms could not be decoded; dropped",
                       frame.seq, frame.t_ms, exc_info=True)
        return None
    return FrameFeatures(frame, tokens)


class NotReady:
    """Sentinel: the clip buffer has not reached T frames yet."""

    def __repr__(self):
        return "NotReady"


NOT_READY = NotReady()


class ClipAssembler:
    """Groups consecutive frame features into clips of T frames.

    Clip k covers frames [k*T, (k+1)*T); a partial buffer is flushed as a
    short final clip on session end. All frames in a session must share
    one (N, C) profile.
    """

    def __init__(self, frames_per_clip: int):
        if frames_per_clip < 1:
            raise ValueError("frames_per_clip must be >= 1")
        self.frames_per_clip = frames_per_clip
        self._buffer: list[FrameFeatures] = []
        self._clip_index = 0
        self._profile: Optional[tuple[int, int]] = None

    @property
    def has_partial(self) -> bool:
        return bool(self._buffer)

    def add(self, ff: FrameFeatures) -> Union[ClipFeatures, NotReady]:
        shape = ff.tokens.shape
        if len(shape) != 2:
            raise ProfileMismatchError(f"frame tokens must be 2-D, got shape {shape}")
        if self._profile is None:
            self._profile = (shape[0], shape[1])
        elif self._profile != (shape[0], shape[1]):
            raise ProfileMismatchError(
                f"frame at {ff.frame.t_ms} ms has token shape {shape}, "
                f"session profile is {self._profile}"
            )
        if not np.all(np.isfinite(ff.tokens)):
            raise ProfileMismatchError(
                f"frame at {ff.frame.t_ms} ms carries non-finite features"
            )
        self._buffer.append(ff)
        if len(self._buffer) == self.frames_per_clip:
            return self._emit()
        return NOT_READY

    def flush(self) -> Optional[ClipFeatures]:
        if not self._buffer:
            return None
        return self._emit()

    def _emit(self) -> ClipFeatures:
        frames = self._buffer
        self._buffer = []
        clip = ClipFeatures(
            clip_index=self._clip_index,
            t_start_ms=frames[0].frame.t_ms,
            t_end_ms=frames[-1].frame.t_ms,
            features=np.concatenate([f.tokens for f in frames], axis=0),
            frame_times=tuple(f.frame.t_ms for f in frames),
            tokens_per_frame=frames[0].tokens.shape[0],
        )
        self._clip_index += 1
        return clip
