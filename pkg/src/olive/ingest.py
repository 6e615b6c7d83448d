"""Media ingestion: audio chunking, frame sampling, bounded queues.

Audio is 16-bit mono 16 kHz PCM throughout. A chunk carries 256 samples
(512 bytes = 4096 bits = 16 ms), which is also the granule every VAD
duration is expressed in.
"""

from __future__ import annotations

import enum
import threading
from dataclasses import dataclass, field
from typing import Generic, Iterable, Iterator, Optional, TypeVar, Union

import numpy as np

from .errors import MalformedStreamError, QueueClosedError

SAMPLE_RATE = 16000
BYTES_PER_SAMPLE = 2
CHUNK_BITS = 4096
CHUNK_BYTES = CHUNK_BITS // 8          # 512
CHUNK_SAMPLES = CHUNK_BYTES // BYTES_PER_SAMPLE  # 256
CHUNK_MS = CHUNK_SAMPLES * 1000 // SAMPLE_RATE   # 16


@dataclass(frozen=True)
class AudioChunk:
    session_id: str
    seq: int
    t_start_ms: int
    samples: bytes  # raw little-endian int16 PCM

    @property
    def is_full(self) -> bool:
        return len(self.samples) == CHUNK_BYTES

    def rms(self) -> float:
        data = np.frombuffer(self.samples, dtype="<i2")
        if data.size == 0:
            return 0.0
        return float(np.sqrt(np.mean(np.square(data.astype(np.float64)))))


@dataclass(frozen=True)
class RawFrame:
    session_id: str
    seq: int
    t_ms: int
    payload: Union[bytes, np.ndarray]  # encoded JPEG or precomputed features
    is_features: bool = False


@dataclass(frozen=True)
class StreamStalled:
    """Control event: the frame source went quiet past the stall threshold."""

    session_id: str
    gap_ms: int
    t_ms: int


def chunk_audio(byte_stream: bytes, session_id: str) -> list[AudioChunk]:
    """Split a PCM byte stream into 4096-bit chunks.

    Concatenating the chunk payloads in seq order reproduces the input
    byte-for-byte; only the final chunk may be short. Timestamps are
    seq * 16 ms (pure function of stream position).
    """
    if len(byte_stream) % BYTES_PER_SAMPLE != 0:
        offset = len(byte_stream) - 1
        raise MalformedStreamError(
            f"odd byte count {len(byte_stream)} splits a 16-bit sample at offset {offset}",
            offset=offset,
        )
    chunks = []
    for seq, start in enumerate(range(0, len(byte_stream), CHUNK_BYTES)):
        chunks.append(
            AudioChunk(
                session_id=session_id,
                seq=seq,
                t_start_ms=seq * CHUNK_MS,
                samples=byte_stream[start : start + CHUNK_BYTES],
            )
        )
    return chunks


class StreamChunker:
    """Incremental chunker for live ingestion.

    Bytes may arrive in arbitrary-sized pieces; full chunks are emitted as
    soon as they complete. ``finish()`` flushes the final partial chunk and
    rejects a dangling half-sample byte.
    """

    def __init__(self, session_id: str):
        self.session_id = session_id
        self._buf = bytearray()
        self._seq = 0
        self._consumed = 0

    def feed(self, data: bytes) -> list[AudioChunk]:
        self._buf.extend(data)
        out = []
        while len(self._buf) >= CHUNK_BYTES:
            payload = bytes(self._buf[:CHUNK_BYTES])
            del self._buf[:CHUNK_BYTES]
            out.append(
                AudioChunk(self.session_id, self._seq, self._seq * CHUNK_MS, payload)
            )
            self._seq += 1
            self._consumed += CHUNK_BYTES
        return out

    def finish(self) -> list[AudioChunk]:
        if len(self._buf) % BYTES_PER_SAMPLE != 0:
            offset = self._consumed + len(self._buf) - 1
            raise MalformedStreamError(
                f"stream ended on a half sample at offset {offset}", offset=offset
            )
        if not self._buf:
            return []
        chunk = AudioChunk(
            self.session_id, self._seq, self._seq * CHUNK_MS, bytes(self._buf)
        )
        self._buf.clear()
        self._seq += 1
        return [chunk]


class FrameSampler:
    """Down-samples a timestamped frame source to ``rate_fps``.

    Emits the source frame that first reaches each 1/rate tick (ticks at
    0, 1000/rate, 2000/rate, ...). Never synthesizes frames: a source gap
    larger than ``stall_threshold_ms`` yields a StreamStalled event on the
    next arrival instead.
    """

    def __init__(
        self,
        session_id: str,
        rate_fps: float = 1.0,
        stall_threshold_ms: int = 5000,
    ):
        if rate_fps <= 0:
            raise ValueError("rate_fps must be positive")
        self.session_id = session_id
        self.period_ms = 1000.0 / rate_fps
        self.stall_threshold_ms = stall_threshold_ms
        self._next_tick_ms = 0.0
        self._out_seq = 0
        self._last_in_t: Optional[int] = None

    def feed(self, frame: RawFrame) -> list[Union[RawFrame, StreamStalled]]:
        out: list[Union[RawFrame, StreamStalled]] = []
        if self._last_in_t is not None:
            gap = frame.t_ms - self._last_in_t
            if gap > self.stall_threshold_ms:
                out.append(StreamStalled(self.session_id, gap_ms=gap, t_ms=frame.t_ms))
        self._last_in_t = frame.t_ms
        if frame.t_ms >= self._next_tick_ms:
            out.append(
                RawFrame(
                    session_id=self.session_id,
                    seq=self._out_seq,
                    t_ms=frame.t_ms,
                    payload=frame.payload,
                    is_features=frame.is_features,
                )
            )
            self._out_seq += 1
            # skip past missed ticks so a burst after a gap emits one frame
            while self._next_tick_ms <= frame.t_ms:
                self._next_tick_ms += self.period_ms
        return out


def sample_frames(
    frame_source: Iterable[RawFrame],
    rate_fps: float = 1.0,
    stall_threshold_ms: int = 5000,
    session_id: str = "",
) -> Iterator[Union[RawFrame, StreamStalled]]:
    """Generator form of FrameSampler over a finite source."""
    sampler: Optional[FrameSampler] = None
    for frame in frame_source:
        if sampler is None:
            sampler = FrameSampler(
                session_id or frame.session_id, rate_fps, stall_threshold_ms
            )
        yield from sampler.feed(frame)


class OverflowPolicy(enum.Enum):
    BLOCK = "block"
    DROP_OLDEST = "drop_oldest"


class PutStatus(enum.Enum):
    ACCEPTED = "accepted"
    DROPPED = "dropped"
    FULL = "full"


@dataclass(frozen=True)
class PutResult:
    status: PutStatus
    evicted: object = None


T = TypeVar("T")


class Empty(Exception):
    pass


class BoundedQueue(Generic[T]):
    """FIFO queue with a hard capacity, safe for one producer + one consumer.

    BLOCK suspends the producer until space exists; DROP_OLDEST evicts the
    oldest element and reports it. Tracks its high-water mark for the
    health endpoint and replay reports.
    """

    def __init__(self, capacity: int, policy: OverflowPolicy = OverflowPolicy.BLOCK,
                 name: str = ""):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.policy = policy
        self.name = name
        self._items: list[T] = []
        self._lock = threading.Lock()
        self._not_full = threading.Condition(self._lock)
        self._not_empty = threading.Condition(self._lock)
        self._closed = False
        self.high_water = 0

    def __len__(self) -> int:
        with self._lock:
            return len(self._items)

    @property
    def closed(self) -> bool:
        with self._lock:
            return self._closed

    def close(self) -> None:
        with self._lock:
            self._closed = True
            self._not_full.notify_all()
            self._not_empty.notify_all()

    def _do_put(self, item: T) -> None:
        self._items.append(item)
        if len(self._items) > self.high_water:
            self.high_water = len(self._items)
        self._not_empty.notify()

    def try_put(self, item: T) -> PutResult:
        """Non-blocking put. Under BLOCK a full queue reports FULL instead
        of suspending (used by the cooperative scheduler)."""
        with self._lock:
            if self._closed:
                raise QueueClosedError(f"queue {self.name!r} is closed")
            if len(self._items) < self.capacity:
                self._do_put(item)
                return PutResult(PutStatus.ACCEPTED)
            if self.policy is OverflowPolicy.DROP_OLDEST:
                evicted = self._items.pop(0)
                self._do_put(item)
                return PutResult(PutStatus.DROPPED, evicted=evicted)
            return PutResult(PutStatus.FULL)

    def put(self, item: T, timeout: Optional[float] = None) -> PutResult:
        """Blocking put: under BLOCK the caller is suspended until space."""
        with self._lock:
            if self.policy is OverflowPolicy.DROP_OLDEST:
                if self._closed:
                    raise QueueClosedError(f"queue {self.name!r} is closed")
                if len(self._items) >= self.capacity:
                    evicted = self._items.pop(0)
                    self._do_put(item)
                    return PutResult(PutStatus.DROPPED, evicted=evicted)
                self._do_put(item)
                return PutResult(PutStatus.ACCEPTED)
            while True:
                if self._closed:
                    raise QueueClosedError(f"queue {self.name!r} is closed")
                if len(self._items) < self.capacity:
                    self._do_put(item)
                    return PutResult(PutStatus.ACCEPTED)
                if not self._not_full.wait(timeout):
                    return PutResult(PutStatus.FULL)

    def try_get(self) -> T:
        with self._lock:
            if not self._items:
                raise Empty
            item = self._items.pop(0)
            self._not_full.notify()
            return item

    def get(self, timeout: Optional[float] = None) -> T:
        with self._lock:
            while not self._items:
                if self._closed:
                    raise QueueClosedError(f"queue {self.name!r} is closed")
                if not self._not_empty.wait(timeout):
                    raise Empty
            item = self._items.pop(0)
            self._not_full.notify()
            return item

    def stats(self) -> dict:
        with self._lock:
            return {
                "depth": len(self._items),
                "capacity": self.capacity,
                "high_water": self.high_water,
            }
