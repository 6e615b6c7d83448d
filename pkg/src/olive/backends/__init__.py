"""Model-role contracts and the backend registry.

Six roles sit behind the pipeline: sound classification + transcription
(asr), per-frame encoding (frame_encoder), memory compression
(compressor), answer generation (reasoner), speech synthesis (tts) and
the instruction gate (gate). Each role has a deterministic reference
implementation, optionally a wizard (trace ground truth), and a remote
HTTP adapter, selected per role by a BackendDescriptor.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterator, Protocol, runtime_checkable

import numpy as np

from ..errors import ConfigError

if TYPE_CHECKING:  # structural typing only; avoids import cycles
    from ..reasoning import AssembledPrompt, GateDecision
    from ..vad import VoiceSegment

ROLES = ("asr", "frame_encoder", "compressor", "reasoner", "tts", "gate")
IMPLEMENTATIONS = ("reference", "wizard", "remote")


@dataclass
class BackendDescriptor:
    role: str
    implementation: str = "reference"
    endpoint: str = ""
    timeout_ms: int = 5000
    max_retries: int = 2
    backoff_base_ms: int = 100
    inflight_limit: int = 2

    def validate(self) -> None:
        problems = []
        if self.role not in ROLES:
            problems.append(f"backends.{self.role}: unknown role")
        if self.implementation not in IMPLEMENTATIONS:
            problems.append(
                f"backends.{self.role}.implementation must be one of {IMPLEMENTATIONS}"
            )
        if self.implementation == "remote" and not self.endpoint:
            problems.append(f"backends.{self.role}.endpoint required for remote")
        if self.timeout_ms <= 0:
            problems.append(f"backends.{self.role}.timeout_ms must be > 0")
        if self.max_retries < 0:
            problems.append(f"backends.{self.role}.max_retries must be >= 0")
        if problems:
            raise ConfigError("; ".join(problems))


@runtime_checkable
class AsrBackend(Protocol):
    def classify_and_transcribe(self, segment: "VoiceSegment") -> tuple[str, str]:
        """Returns (sound_class, transcript); transcript empty unless speech."""
        ...


@runtime_checkable
class FrameEncoderBackend(Protocol):
    def encode_frame(self, image_bytes: bytes) -> np.ndarray:
        """JPEG bytes -> N x C token matrix."""
        ...


@runtime_checkable
class CompressorBackend(Protocol):
    def compress_clip(
        self, tokens: np.ndarray, boundaries: tuple[int, int, int]
    ) -> tuple[np.ndarray, np.ndarray]:
        """Input is the clip features, initial short-term memory and initial
        global memory concatenated along the token axis in that order;
        ``boundaries`` gives the three row counts. Returns the refreshed
        (short_term, global) pair."""
        ...

    def integrate(
        self, short_terms: list[np.ndarray], globals_: list[np.ndarray]
    ) -> np.ndarray:
        """One summary row per entry of ``short_terms``; ``globals_`` carries
        every clip's global memory for context."""
        ...

    def encode_question(self, long_term: np.ndarray, question: str) -> np.ndarray:
        """Memory-space-aligned question vector (length C)."""
        ...


@runtime_checkable
class ReasonerBackend(Protocol):
    def generate(self, prompt: "AssembledPrompt") -> Iterator[str]:
        """Streamed text increments; concatenation is the full answer."""
        ...


@runtime_checkable
class TtsBackend(Protocol):
    def synthesize(self, text: str) -> bytes:
        """Text -> 16-bit mono 16 kHz PCM."""
        ...


@runtime_checkable
class GateBackend(Protocol):
    def predict(self, transcript: str) -> "GateDecision": ...


@dataclass
class BackendSet:
    asr: AsrBackend
    frame_encoder: FrameEncoderBackend
    compressor: CompressorBackend
    reasoner: ReasonerBackend
    tts: TtsBackend
    gate: GateBackend


def build_backends(config, annotations=None) -> BackendSet:
    """Instantiate the six roles from config.

    ``annotations`` (harness trace ground truth) feeds the wizard
    implementations; without it a wizard ASR classifies everything as
    untranscribed speech and a wizard reasoner raises on unknown questions.
    """
    from . import reference, remote, wizard

    bc = config.backends
    for d in (bc.asr, bc.frame_encoder, bc.compressor, bc.reasoner, bc.tts, bc.gate):
        d.validate()

    def pick(desc: BackendDescriptor, ref_factory, wiz_factory, remote_factory):
        if desc.implementation == "remote":
            return remote_factory(desc)
        if desc.implementation == "wizard":
            if wiz_factory is None:
                raise ConfigError(f"backends.{desc.role}: no wizard implementation")
            return wiz_factory()
        return ref_factory()

    return BackendSet(
        # the dependency-free ASR *is* the wizard (ground truth from traces)
        asr=pick(
            bc.asr,
            lambda: wizard.WizardAsr(annotations),
            lambda: wizard.WizardAsr(annotations),
            remote.RemoteAsr,
        ),
        frame_encoder=pick(
            bc.frame_encoder,
            lambda: reference.ReferenceFrameEncoder(
                tokens_per_frame=config.profile.n, width=config.profile.c
            ),
            None,
            remote.RemoteFrameEncoder,
        ),
        compressor=pick(
            bc.compressor,
            reference.ReferenceCompressor,
            None,
            remote.RemoteCompressor,
        ),
        reasoner=pick(
            bc.reasoner,
            reference.ReferenceReasoner,
            lambda: wizard.WizardReasoner(annotations),
            remote.RemoteReasoner,
        ),
        tts=pick(
            bc.tts,
            lambda: reference.ReferenceTts(ms_per_char=config.tts.ms_per_char),
            None,
            remote.RemoteTts,
        ),
        gate=pick(
            bc.gate,
            lambda: reference.ReferenceGate(
                filler_lexicon=config.gate.filler_lexicon,
                min_content_tokens=config.gate.min_content_tokens,
            ),
            None,
            remote.RemoteGate,
        ),
    )
