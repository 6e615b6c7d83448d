"""Wizard backends: ground truth read from replay-trace annotations.

They let end-to-end tests assert exact strings without any model,
separating orchestration correctness from model quality.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..perception import SOUND_SPEECH


@dataclass(frozen=True)
class SegmentTruth:
    t_start_ms: int
    t_end_ms: int
    sound_class: str
    transcript: str


@dataclass
class TraceAnnotations:
    segments: list = field(default_factory=list)        # SegmentTruth, time order
    answers: dict = field(default_factory=dict)         # question -> answer text
    query_truth: dict = field(default_factory=dict)     # question -> ground-truth clip indices
    notes: list = field(default_factory=list)


class WizardAsr:
    """Maps a detected voice segment to the annotated utterance with the
    largest time overlap. Unannotated speech comes back untranscribed."""

    def __init__(self, annotations: Optional[TraceAnnotations] = None,
                 slack_ms: int = 500):
        self.annotations = annotations or TraceAnnotations()
        self.slack_ms = slack_ms

    def classify_and_transcribe(self, segment) -> tuple[str, str]:
        best = None
        best_overlap = 0
        for truth in self.annotations.segments:
            overlap = min(segment.t_end_ms, truth.t_end_ms) - max(
                segment.t_start_ms, truth.t_start_ms
            )
            if overlap > best_overlap:
                best, best_overlap = truth, overlap
        if best is None:
            for truth in self.annotations.segments:
                if abs(truth.t_start_ms - segment.t_start_ms) <= self.slack_ms:
                    best = truth
                    break
        if best is None:
            return SOUND_SPEECH, ""
        return best.sound_class, best.transcript


class WizardReasoner:
    """Returns the trace's scripted answer for a question; a question the
    trace never scripted is a test defect and raises."""

    def __init__(self, annotations: Optional[TraceAnnotations] = None):
        self.annotations = annotations or TraceAnnotations()

    def generate(self, prompt):
        try:
            yield self.annotations.answers[prompt.question]
        except KeyError:
            raise KeyError(
                f"trace provides no scripted answer for question {prompt.question!r}"
            ) from None
