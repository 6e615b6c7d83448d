"""Deterministic reference backends.

All of them are pure functions of their inputs (no hidden state, bitwise
reproducible), which is what lets the acceptance suite pin exact values.
"""

from __future__ import annotations

import io
import math

import numpy as np
from PIL import Image

from ..errors import ConfigError
from ..ingest import SAMPLE_RATE
from ..reasoning import GateDecision, Verdict
from .hashing import cell_key, hashed_vector, tokenize, token_key


def l2_normalize(v: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        return v.copy()
    return v / norm


class ReferenceFrameEncoder:
    """Hashed-patch embedder: the image is split into a sqrt(N) x sqrt(N)
    grid; each cell's mean RGB (rounded to ints) keys one hashed token.
    Content-sensitive, dependency-free, deterministic."""

    def __init__(self, tokens_per_frame: int = 16, width: int = 64):
        grid = math.isqrt(tokens_per_frame)
        if grid * grid != tokens_per_frame:
            raise ConfigError(
                f"profile.n={tokens_per_frame}: the reference frame encoder needs a square token count"
            )
        self.grid = grid
        self.n = tokens_per_frame
        self.c = width

    def encode_frame(self, image_bytes: bytes) -> np.ndarray:
        img = Image.open(io.BytesIO(image_bytes)).convert("RGB")
        arr = np.asarray(img, dtype=np.float64)
        h, w = arr.shape[0], arr.shape[1]
        tokens = np.empty((self.n, self.c), dtype=np.float64)
        for row in range(self.grid):
            for col in range(self.grid):
                y0 = row * h // self.grid
                y1 = (row + 1) * h // self.grid
                x0 = col * w // self.grid
                x1 = (col + 1) * w // self.grid
                mean = arr[y0:y1, x0:x1].reshape(-1, 3).mean(axis=0)
                r, g, b = (int(round(v)) for v in mean)
                tokens[row * self.grid + col] = hashed_vector(cell_key(r, g, b), self.c)
        return tokens


class ReferenceCompressor:
    """Shape-faithful stand-in for the trained compressor model.

    compress: short-term memory passes through the down-sampled init;
    global memory is the unit-normalized token mean of the clip features.
    integrate: one row per clip, the normalized mean of its short-term
    rows. encode_question: normalized mean of the question's hashed token
    vectors (the long-term context is accepted but unused here; a model
    backend conditions on it).
    """

    def compress_clip(
        self, tokens: np.ndarray, boundaries: tuple[int, int, int]
    ) -> tuple[np.ndarray, np.ndarray]:
        n_f, n_h, n_hat = boundaries
        if n_f + n_h + n_hat != tokens.shape[0]:
            raise ValueError(
                f"block boundaries {boundaries} do not cover {tokens.shape[0]} rows"
            )
        features = tokens[:n_f]
        short_term = tokens[n_f : n_f + n_h]
        global_mem = l2_normalize(features.mean(axis=0))
        return short_term.copy(), global_mem

    def integrate(
        self, short_terms: list[np.ndarray], globals_: list[np.ndarray]
    ) -> np.ndarray:
        rows = [l2_normalize(h.mean(axis=0)) for h in short_terms]
        return np.stack(rows, axis=0)

    def encode_question(self, long_term: np.ndarray, question: str) -> np.ndarray:
        if not question:
            raise ValueError("question must be non-empty")
        tokens = tokenize(question)
        if not tokens:
            raise ValueError(f"question has no tokens: {question!r}")
        if long_term.ndim != 2 or long_term.shape[1] < 2:
            raise ValueError("long_term must be a k x C matrix (k may be 0)")
        c = long_term.shape[1]
        vecs = np.stack([hashed_vector(token_key(t), c) for t in tokens], axis=0)
        return l2_normalize(vecs.mean(axis=0))


class ReferenceReasoner:
    """Template echo: the answer names the question and the grounded clips,
    so routing and grounding are observable without a model."""

    def generate(self, prompt):
        indices = ", ".join(str(i) for i in prompt.clip_indices)
        yield f"Answering '{prompt.question}' using clips [{indices}]."


TONE_HZ = 440.0
TONE_AMPLITUDE = 8000


class ReferenceTts:
    """Fixed 440 Hz tone, 80 ms of audio per character of input."""

    def __init__(self, ms_per_char: int = 80):
        if ms_per_char <= 0:
            raise ConfigError("tts.ms_per_char must be > 0")
        self.ms_per_char = ms_per_char

    def synthesize(self, text: str) -> bytes:
        n_samples = len(text) * self.ms_per_char * SAMPLE_RATE // 1000
        if n_samples == 0:
            return b""
        t = np.arange(n_samples, dtype=np.float64)
        wave = TONE_AMPLITUDE * np.sin(2.0 * np.pi * TONE_HZ * t / SAMPLE_RATE)
        return wave.astype("<i2").tobytes()


DEFAULT_FILLER_LEXICON = (
    "enn", "ok", "okay", "uh", "uhh", "um", "umm", "hmm", "hm",
    "mhm", "ah", "oh", "yeah", "yep", "huh", "mm",
)


class ReferenceGate:
    """Instruction gate: filler utterances and fragments are ignored.

    Empty or non-alphanumeric input -> Ignore(non-linguistic); every token
    in the filler lexicon -> Ignore(filler); fewer content tokens than the
    minimum -> Ignore(filler). Anything else is answerable and tagged
    question (trailing '?') or instruction.
    """

    def __init__(self, filler_lexicon=DEFAULT_FILLER_LEXICON, min_content_tokens: int = 2):
        self.filler_lexicon = frozenset(w.lower() for w in filler_lexicon)
        self.min_content_tokens = min_content_tokens

    def predict(self, transcript: str) -> GateDecision:
        tokens = tokenize(transcript)
        if not tokens:
            return GateDecision(Verdict.IGNORE, "non-linguistic")
        content = [t for t in tokens if t not in self.filler_lexicon]
        if not content:
            return GateDecision(Verdict.IGNORE, "filler")
        if len(content) < self.min_content_tokens:
            return GateDecision(Verdict.IGNORE, "filler")
        reason = "question" if transcript.rstrip().endswith("?") else "instruction"
        return GateDecision(Verdict.ANSWER, reason)
