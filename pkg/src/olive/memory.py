"""Multi-modal long memory: clip compression, integration, snapshots and
question-conditioned retrieval.

Per clip k the bank stores a short-term memory (T*P x C, spatially
down-sampled then refreshed by the compressor backend), a global memory
(one C-vector, the retrieval key) and a bounded set of source-frame
references for prompt assembly. A long-term memory matrix holds one
summary row per clip. Backup signals snapshot the bank copy-on-write;
queries are answered against the snapshot taken at their voice onset,
never the live bank.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError
from .perception import ClipFeatures

logger = logging.getLogger(__name__)

FORMAT_TAG = "omnimem/1"


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ClipRecord:
    clip_index: int
    t_start_ms: int
    t_end_ms: int
    short_term: np.ndarray          # T*P x C
    global_mem: np.ndarray          # C
    frame_refs: tuple[int, ...]     # t_ms of retained source frames
    features: Optional[np.ndarray] = None  # raw F, evicted after compression
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class QuestionFeature:
    q: np.ndarray
    question: str


@dataclass(frozen=True)
class RetrievalHit:
    clip_index: int
    score: float     # ranking score (cosine plus any recency bonus)
    cosine: float
    record: ClipRecord


@dataclass(frozen=True)
class RetrievalResult:
    hits: tuple[RetrievalHit, ...]
    no_memory: bool

    def __iter__(self):
        return iter(self.hits)

    def __len__(self):
        return len(self.hits)


@dataclass(frozen=True)
class MemorySnapshot:
    snapshot_t_ms: int
    records: tuple[ClipRecord, ...]
    long_term: np.ndarray  # k x C

    @property
    def clip_count(self) -> int:
        return len(self.records)

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(str(self.snapshot_t_ms).encode())
        for r in self.records:
            h.update(
                f"{r.clip_index},{r.t_start_ms},{r.t_end_ms},{r.frame_refs},{r.flags}".encode()
            )
            h.update(np.ascontiguousarray(r.short_term).tobytes())
            h.update(np.ascontiguousarray(r.global_mem).tobytes())
        h.update(np.ascontiguousarray(self.long_term).tobytes())
        return h.hexdigest()


EMPTY_SNAPSHOT = MemorySnapshot(
    snapshot_t_ms=-1, records=(), long_term=_frozen(np.zeros((0, 0)))
)


def init_short_term(features: np.ndarray, tokens_per_frame: int, p: int) -> np.ndarray:
    """Spatial down-sampling: per frame, each of the P output tokens is the
    mean of a contiguous group of N/P input tokens."""
    n = tokens_per_frame
    if p < 1 or n % p != 0:
        raise ConfigError(f"profile.p={p} must divide profile.n={n}")
    rows, c = features.shape
    if rows % n != 0:
        raise ValueError(f"feature rows {rows} not a multiple of tokens_per_frame {n}")
    t = rows // n
    grouped = features.reshape(t, p, n // p, c)
    return grouped.mean(axis=2).reshape(t * p, c)


def compress_clip(
    features: np.ndarray,
    short_term0: np.ndarray,
    global0: np.ndarray,
    backend,
) -> tuple[np.ndarray, np.ndarray, tuple[str, ...]]:
    """Refresh (short_term, global) through the compressor backend.

    The backend sees the three blocks concatenated along the token axis in
    the order features, short-term, global, with explicit boundaries. On
    backend failure the clip degrades to the down-sampled init plus a
    normalized token mean, and is flagged."""
    tokens = np.concatenate([features, short_term0, global0[None, :]], axis=0)
    boundaries = (features.shape[0], short_term0.shape[0], 1)
    try:
        short_term, global_mem = backend.compress_clip(tokens, boundaries)
        return np.asarray(short_term), np.asarray(global_mem), ()
    except Exception:
        logger.warning("compressor backend failed; storing degraded clip", exc_info=True)
        mean = features.mean(axis=0)
        norm = float(np.linalg.norm(mean))
        return short_term0.copy(), (mean / norm if norm else mean), ("degraded",)


def integrate(
    short_terms: Sequence[np.ndarray],
    globals_: Sequence[np.ndarray],
    backend,
) -> np.ndarray:
    """Full long-term recompute: one row per clip, order-aligned."""
    if not short_terms:
        raise ValueError("integrate requires at least one clip")
    return np.asarray(backend.integrate(list(short_terms), list(globals_)))


def encode_question(long_term: np.ndarray, question: str, backend) -> QuestionFeature:
    if not question:
        raise ValueError("question must be non-empty")
    return QuestionFeature(
        q=np.asarray(backend.encode_question(long_term, question)), question=question
    )


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def retrieve(
    question: QuestionFeature,
    bank: MemorySnapshot,
    top_k: int,
    recency_bonus: float = 0.0,
) -> RetrievalResult:
    """Rank the snapshot's clips by cosine similarity to the question.

    Ties break toward the earlier clip. ``recency_bonus`` > 0 adds
    lambda * (j+1)/k to clip ordinal j, biasing pronoun-style questions
    ("what is this") toward the latest clip."""
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    if not bank.records:
        return RetrievalResult(hits=(), no_memory=True)
    k = len(bank.records)
    scored = []
    for ordinal, record in enumerate(bank.records):
        cos = _cosine(question.q, record.global_mem)
        score = cos
        if recency_bonus:
            score = cos + recency_bonus * (ordinal + 1) / k
        scored.append(RetrievalHit(record.clip_index, score, cos, record))
    scored.sort(key=lambda h: (-h.score, h.clip_index))
    return RetrievalResult(hits=tuple(scored[:top_k]), no_memory=False)


def _spread_indices(count: int, want: int) -> list[int]:
    if count <= want:
        return list(range(count))
    if want == 1:
        return [0]
    return [round(i * (count - 1) / (want - 1)) for i in range(want)]


class MemoryBank:
    """Single-writer live memory. Only the compressor worker mutates it;
    readers see immutable snapshots."""

    def __init__(
        self,
        tokens_per_frame: int,
        p: int,
        backend,
        window_clips: int = 32,
        max_snapshots: int = 8,
        frame_refs_per_clip: int = 4,
        keep_features: bool = False,
    ):
        if p < 1 or tokens_per_frame % p != 0:
            raise ConfigError(f"profile.p={p} must divide profile.n={tokens_per_frame}")
        self.tokens_per_frame = tokens_per_frame
        self.p = p
        self.backend = backend
        self.window_clips = window_clips
        self.max_snapshots = max_snapshots
        self.frame_refs_per_clip = frame_refs_per_clip
        self.keep_features = keep_features
        self.records: list[ClipRecord] = []
        self._long_rows: list[np.ndarray] = []
        self._snapshots: list[MemorySnapshot] = []

    @property
    def clip_count(self) -> int:
        return len(self.records)

    @property
    def long_term(self) -> np.ndarray:
        if not self._long_rows:
            return np.zeros((0, 0))
        return np.stack(self._long_rows, axis=0)

    def ingest_clip(self, clip: ClipFeatures) -> ClipRecord:
        if clip.clip_index != len(self.records):
            raise ValueError(
                f"clip index {clip.clip_index} out of order; expected {len(self.records)}"
            )
        n = clip.tokens_per_frame
        features = np.asarray(clip.features, dtype=np.float64)
        c = features.shape[1]
        short0 = init_short_term(features, n, self.p)
        global0 = np.zeros(c, dtype=np.float64)
        short_term, global_mem, flags = compress_clip(features, short0, global0, self.backend)
        ref_idx = _spread_indices(len(clip.frame_times), self.frame_refs_per_clip)
        record = ClipRecord(
            clip_index=clip.clip_index,
            t_start_ms=clip.t_start_ms,
            t_end_ms=clip.t_end_ms,
            short_term=_frozen(short_term),
            global_mem=_frozen(global_mem),
            frame_refs=tuple(clip.frame_times[i] for i in ref_idx),
            features=_frozen(features) if self.keep_features else None,
            flags=flags,
        )
        self.records.append(record)
        self._reintegrate()
        return record

    def _reintegrate(self) -> None:
        k = len(self.records)
        window = self.records[max(0, k - self.window_clips) :]
        rows = integrate(
            [r.short_term for r in window],
            [r.global_mem for r in self.records],
            self.backend,
        )
        keep = self._long_rows[: k - len(window)]
        self._long_rows = keep + [rows[i] for i in range(rows.shape[0])]

    def snapshot(self, t_ms: int) -> MemorySnapshot:
        """Capture the bank for later grounding (Backup signal handler)."""
        visible = tuple(r for r in self.records if r.t_end_ms <= t_ms)
        if len(visible) == len(self.records):
            long_term = _frozen(self.long_term)
        elif visible:
            long_term = _frozen(np.stack(self._long_rows[: len(visible)], axis=0))
        else:
            long_term = _frozen(np.zeros((0, 0)))
        snap = MemorySnapshot(snapshot_t_ms=t_ms, records=visible, long_term=long_term)
        self._snapshots.append(snap)
        if len(self._snapshots) > self.max_snapshots:
            self._snapshots.pop(0)
        return snap

    def restore_for_grounding(self, t_ms: int) -> MemorySnapshot:
        """Most recent snapshot taken at or before t_ms; an empty cold-start
        snapshot when none exists."""
        best = None
        for snap in self._snapshots:
            if snap.snapshot_t_ms <= t_ms:
                best = snap
        return best if best is not None else EMPTY_SNAPSHOT

    def live_view(self) -> MemorySnapshot:
        t = self.records[-1].t_end_ms if self.records else -1
        long_term = _frozen(self.long_term) if self.records else _frozen(np.zeros((0, 0)))
        return MemorySnapshot(snapshot_t_ms=t, records=tuple(self.records), long_term=long_term)


def export_memory(snapshot: MemorySnapshot, directory) -> None:
    """Write a snapshot as a directory of per-clip float32 matrices plus a
    JSON manifest (format tag omnimem/1)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    clips = []
    for r in snapshot.records:
        stem = f"clip_{r.clip_index:05d}"
        (directory / f"{stem}.short.bin").write_bytes(
            r.short_term.astype("<f4").tobytes()
        )
        (directory / f"{stem}.global.bin").write_bytes(
            r.global_mem.astype("<f4").tobytes()
        )
        clips.append(
            {
                "index": r.clip_index,
                "t_start_ms": r.t_start_ms,
                "t_end_ms": r.t_end_ms,
                "short_rows": int(r.short_term.shape[0]),
                "width": int(r.short_term.shape[1]),
                "frame_refs": list(r.frame_refs),
                "flags": list(r.flags),
            }
        )
    (directory / "long_term.bin").write_bytes(snapshot.long_term.astype("<f4").tobytes())
    manifest = {
        "format": FORMAT_TAG,
        "k": snapshot.clip_count,
        "snapshot_t_ms": snapshot.snapshot_t_ms,
        "long_term_rows": int(snapshot.long_term.shape[0]) if snapshot.long_term.size else 0,
        "width": int(snapshot.long_term.shape[1]) if snapshot.long_term.size else 0,
        "clips": clips,
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def import_memory(directory) -> MemorySnapshot:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    if manifest.get("format") != FORMAT_TAG:
        raise ValueError(f"unsupported memory format: {manifest.get('format')!r}")
    records = []
    for meta in manifest["clips"]:
        stem = f"clip_{meta['index']:05d}"
        rows, width = meta["short_rows"], meta["width"]
        short = np.frombuffer(
            (directory / f"{stem}.short.bin").read_bytes(), dtype="<f4"
        ).astype(np.float64).reshape(rows, width)
        glob = np.frombuffer(
            (directory / f"{stem}.global.bin").read_bytes(), dtype="<f4"
        ).astype(np.float64)
        records.append(
            ClipRecord(
                clip_index=meta["index"],
                t_start_ms=meta["t_start_ms"],
                t_end_ms=meta["t_end_ms"],
                short_term=_frozen(short),
                global_mem=_frozen(glob),
                frame_refs=tuple(meta["frame_refs"]),
                flags=tuple(meta["flags"]),
            )
        )
    lt_rows = manifest.get("long_term_rows", 0)
    width = manifest.get("width", 0)
    if lt_rows:
        long_term = np.frombuffer(
            (directory / "long_term.bin").read_bytes(), dtype="<f4"
        ).astype(np.float64).reshape(lt_rows, width)
    else:
        long_term = np.zeros((0, 0))
    return MemorySnapshot(
        snapshot_t_ms=manifest["snapshot_t_ms"],
        records=tuple(records),
        long_term=_frozen(long_term),
    )
