"""Instruction gating, prompt assembly and answer generation.

The gate decides whether a transcript deserves an answer at all; answered
questions are grounded in retrieved memory and rendered into the fixed
prompt template (a versioned text asset, tested byte-for-byte).
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Iterator, Optional

import numpy as np

logger = logging.getLogger(__name__)


class Verdict(enum.Enum):
    ANSWER = "answer"
    IGNORE = "ignore"


@dataclass(frozen=True)
class GateDecision:
    verdict: Verdict
    reason: str  # filler | non-linguistic | instruction | question


def predict_instruction(transcript: str, backend) -> GateDecision:
    """Gate a transcript. Fail-closed: answering noise is worse than
    missing a marginal query, so backend errors yield Ignore."""
    try:
        return backend.predict(transcript)
    except Exception:
        logger.warning("gate backend failed for %r; ignoring", transcript, exc_info=True)
        return GateDecision(Verdict.IGNORE, "non-linguistic")


@dataclass(frozen=True)
class FrameRef:
    clip_index: int
    t_ms: int


@dataclass(frozen=True)
class AssembledPrompt:
    text: str
    question: str
    clip_indices: tuple[int, ...]
    frame_refs: tuple[FrameRef, ...]
    memories: tuple[np.ndarray, ...]


def _template() -> str:
    return (
        resources.files("olive.assets.prompts")
        .joinpath("answer_template.txt")
        .read_text(encoding="utf-8")
    )


def build_prompt(question: str, retrieved) -> AssembledPrompt:
    """Instantiate the prompt template for a retrieval result.

    Clips appear in rank order. With an empty retrieval (cold start) the
    clip and memory sentences are omitted entirely and the question line
    loses its connecting comma.
    """
    hits = list(retrieved)
    if not hits:
        return AssembledPrompt(
            text=f"Question: {question}",
            question=question,
            clip_indices=(),
            frame_refs=(),
            memories=(),
        )
    img_parts = []
    mem_parts = []
    refs: list[FrameRef] = []
    memories = []
    indices = []
    for hit in hits:
        record = hit.record
        indices.append(hit.clip_index)
        frame_times = " ".join(f"@{t}ms" for t in record.frame_refs)
        img_parts.append(f"[clip {hit.clip_index}: frames {frame_times}]")
        rows, cols = record.short_term.shape
        mem_parts.append(f"[clip {hit.clip_index}: {rows}x{cols}]")
        refs.extend(FrameRef(hit.clip_index, t) for t in record.frame_refs)
        memories.append(record.short_term)
    text = (
        _template()
        .replace("<|Que|>", question)
        .replace("<|Img|>", " ".join(img_parts))
        .replace("<|Mem|>", " ".join(mem_parts))
    )
    return AssembledPrompt(
        text=text,
        question=question,
        clip_indices=tuple(indices),
        frame_refs=tuple(refs),
        memories=tuple(memories),
    )


def generate_answer(prompt: AssembledPrompt, backend) -> Iterator[str]:
    """Stream answer increments from the reasoner backend."""
    yield from backend.generate(prompt)


SENTENCE_BOUNDARIES = frozenset(".!?;")


def split_sentences(increments: Iterable[str]) -> Iterator[str]:
    """Re-segment a text stream at sentence boundaries for TTS hand-off.

    Splits immediately after . ! ? or ; and flushes any tail at stream
    end; concatenating the output reproduces the input exactly.
    """
    buf: list[str] = []
    for piece in increments:
        for ch in piece:
            buf.append(ch)
            if ch in SENTENCE_BOUNDARIES:
                yield "".join(buf)
                buf = []
    if buf:
        yield "".join(buf)


@dataclass
class AnswerEvent:
    session_id: str
    utterance_id: int
    question: str
    answer: str
    grounded_clips: tuple[int, ...]
    gate_ms: float = 0.0
    retrieve_ms: float = 0.0
    generate_ms: float = 0.0
    first_audio_ms: Optional[float] = None
