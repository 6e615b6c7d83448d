"""HTTP adapters for real model servers.

One JSON envelope for every role: POST {"role", "version": "ol/1",
"request": {...}} -> {"role", "version", "response": {...}}. Responses
are validated against the per-role schemas published in assets/schemas.
Connect failures and 5xx responses retry with exponential backoff
(base 100 ms, factor 2, jitter +-20%); application-level failures
(4xx, malformed JSON, schema violations) never retry.
"""

from __future__ import annotations

import base64
import json
import random
import threading
import time
from functools import lru_cache
from importlib import resources
from typing import Iterator

import jsonschema
import numpy as np
import requests

from ..errors import BackendProtocolError, BackendUnavailableError
from ..reasoning import GateDecision, Verdict
from . import BackendDescriptor

PROTOCOL_VERSION = "ol/1"
BACKOFF_FACTOR = 2.0
JITTER = 0.2


@lru_cache(maxsize=None)
def _schema(name: str) -> dict:
    text = (
        resources.files("olive.assets.schemas").joinpath(f"{name}.json").read_text("utf-8")
    )
    return json.loads(text)


def remote_call(descriptor: BackendDescriptor, request: dict, schema_name: str) -> dict:
    """POST the envelope and return the validated response body."""
    envelope = {"role": descriptor.role, "version": PROTOCOL_VERSION, "request": request}
    attempts = descriptor.max_retries + 1
    last_exc: Exception | None = None
    for attempt in range(attempts):
        if attempt:
            delay = descriptor.backoff_base_ms * (BACKOFF_FACTOR ** (attempt - 1)) / 1000.0
            time.sleep(delay * random.uniform(1 - JITTER, 1 + JITTER))
        try:
            resp = requests.post(
                descriptor.endpoint, json=envelope, timeout=descriptor.timeout_ms / 1000.0
            )
        except requests.exceptions.ConnectionError as exc:
            last_exc = exc
            continue  # connect-level failure: retriable
        except requests.exceptions.Timeout as exc:
            # a read timeout may have executed server-side; never retry
            raise BackendUnavailableError(
                f"{descriptor.role} backend timed out after {descriptor.timeout_ms} ms"
            ) from exc
        if 500 <= resp.status_code < 600:
            last_exc = BackendUnavailableError(
                f"{descriptor.role} backend returned {resp.status_code}"
            )
            continue
        if resp.status_code != 200:
            raise BackendProtocolError(
                f"{descriptor.role} backend returned {resp.status_code}"
            )
        try:
            body = resp.json()
        except ValueError as exc:
            raise BackendProtocolError(
                f"{descriptor.role} backend returned malformed JSON"
            ) from exc
        if not isinstance(body, dict) or "response" not in body:
            raise BackendProtocolError(
                f"{descriptor.role} backend response missing 'response' field"
            )
        payload = body["response"]
        try:
            jsonschema.validate(payload, _schema(schema_name))
        except jsonschema.ValidationError as exc:
            raise BackendProtocolError(
                f"{descriptor.role} backend response violates schema: {exc.message}"
            ) from exc
        return payload
    raise BackendUnavailableError(
        f"{descriptor.role} backend unreachable after {attempts} attempts"
    ) from last_exc


class _RemoteBase:
    def __init__(self, descriptor: BackendDescriptor):
        self.descriptor = descriptor
        self._slots = threading.Semaphore(descriptor.inflight_limit)

    def _call(self, request: dict, schema_name: str) -> dict:
        with self._slots:
            return remote_call(self.descriptor, request, schema_name)


class RemoteAsr(_RemoteBase):
    def classify_and_transcribe(self, segment) -> tuple[str, str]:
        payload = self._call(
            {
                "t_start_ms": segment.t_start_ms,
                "t_end_ms": segment.t_end_ms,
                "pcm_b64": base64.b64encode(segment.samples).decode("ascii"),
            },
            "remote_asr",
        )
        return payload["class"], payload["transcript"]


class RemoteFrameEncoder(_RemoteBase):
    def encode_frame(self, image_bytes: bytes) -> np.ndarray:
        payload = self._call(
            {"image_b64": base64.b64encode(image_bytes).decode("ascii")},
            "remote_frame_encoder",
        )
        return np.asarray(payload["tokens"], dtype=np.float64)


class RemoteCompressor(_RemoteBase):
    def compress_clip(self, tokens, boundaries):
        payload = self._call(
            {
                "op": "compress",
                "tokens": np.asarray(tokens).tolist(),
                "boundaries": list(boundaries),
            },
            "remote_compressor_compress",
        )
        return (
            np.asarray(payload["short_term"], dtype=np.float64),
            np.asarray(payload["global"], dtype=np.float64),
        )

    def integrate(self, short_terms, globals_):
        payload = self._call(
            {
                "op": "integrate",
                "short_terms": [np.asarray(h).tolist() for h in short_terms],
                "globals": [np.asarray(g).tolist() for g in globals_],
            },
            "remote_compressor_integrate",
        )
        return np.asarray(payload["rows"], dtype=np.float64)

    def encode_question(self, long_term, question):
        payload = self._call(
            {
                "op": "encode_question",
                "long_term": np.asarray(long_term).tolist(),
                "question": question,
            },
            "remote_compressor_encode_question",
        )
        return np.asarray(payload["vector"], dtype=np.float64)


class RemoteReasoner(_RemoteBase):
    def generate(self, prompt) -> Iterator[str]:
        payload = self._call(
            {
                "text": prompt.text,
                "question": prompt.question,
                "clip_indices": list(prompt.clip_indices),
                "memories": [m.tolist() for m in prompt.memories],
            },
            "remote_reasoner",
        )
        yield payload["answer"]


class RemoteTts(_RemoteBase):
    def synthesize(self, text: str) -> bytes:
        payload = self._call({"text": text}, "remote_tts")
        return base64.b64decode(payload["pcm_b64"])


class RemoteGate(_RemoteBase):
    def predict(self, transcript: str) -> GateDecision:
        payload = self._call({"transcript": transcript}, "remote_gate")
        verdict = Verdict.ANSWER if payload["verdict"] == "answer" else Verdict.IGNORE
        return GateDecision(verdict, payload["reason"])
