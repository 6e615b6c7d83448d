"""Builders for the bundled scenario traces.

Each scenario is constructed, not recorded: speech is a full-scale tone
burst the energy VAD is guaranteed to segment, and clip features are
hashed embeddings chosen so the intended retrieval outcome is
analytically certain (the target clip's rows equal the reference
encoding of the query, cosine exactly 1; distractor embeddings of other
keys are never parallel to it). Every burst boundary is a multiple of
16 ms so chunk timestamps line up exactly.

Regenerate the committed traces with:  python -m olive.harness.builders
"""

from __future__ import annotations

import json
from pathlib import Path

from ..ingest import CHUNK_MS

TONE_AMPLITUDE = 20000
SMALL_PROFILE = {"profile.t": 4, "profile.n": 4, "profile.p": 2, "profile.c": 16}

# default VAD: onset 64 ms, hangover 256 ms
BURST_MS = 400
HANGOVER_MS = 256


class TraceBuilder:
    def __init__(self):
        self._events: list[tuple[int, int, dict]] = []
        self._n = 0
        self.audio_cursor = 0

    def _add(self, t_ms: int, kind: str, payload: dict) -> None:
        assert t_ms % 1 == 0
        self._events.append((t_ms, self._n, {"t_ms": t_ms, "kind": kind, "payload": payload}))
        self._n += 1

    def meta(self, note: str = "", config: dict | None = None, transport: dict | None = None):
        payload: dict = {"annotation_type": "meta"}
        if note:
            payload["note"] = note
        if config:
            payload["config"] = config
        if transport:
            payload["transport"] = transport
        self._add(0, "annotation", payload)

    def silence(self, ms: int):
        assert ms % CHUNK_MS == 0, "keep audio events chunk-aligned"
        self._add(self.audio_cursor, "audio", {"silence_ms": ms})
        self.audio_cursor += ms

    def tone(self, ms: int, amplitude: int = TONE_AMPLITUDE):
        assert ms % CHUNK_MS == 0
        self._add(self.audio_cursor, "audio", {"tone_ms": ms, "amplitude": amplitude})
        self.audio_cursor += ms

    def burst(self, transcript: str, sound_class: str = "speech",
              ms: int = BURST_MS, tail_silence_ms: int = 992) -> tuple[int, int]:
        """A tone burst plus trailing silence, annotated as an utterance.
        Returns (voice_start_ms, voice_end_ms) as the VAD will see them."""
        start = self.audio_cursor
        self.tone(ms)
        self.silence(tail_silence_ms)
        end = start + ms + HANGOVER_MS
        self.segment(start, end, sound_class, transcript)
        return start, end

    def frame_key(self, t_ms: int, key: str, rows: int, cols: int):
        self._add(t_ms, "frame",
                  {"features_from_key": {"key": key, "rows": rows, "cols": cols}})

    def frame_question(self, t_ms: int, question: str, rows: int, cols: int):
        self._add(t_ms, "frame",
                  {"features_from_question": {"question": question, "rows": rows, "cols": cols}})

    def segment(self, t_start: int, t_end: int, sound_class: str, transcript: str):
        self._add(t_start, "annotation", {
            "annotation_type": "segment",
            "t_start_ms": t_start,
            "t_end_ms": t_end,
            "class": sound_class,
            "transcript": transcript,
        })

    def answer(self, question: str, answer: str):
        self._add(0, "annotation",
                  {"annotation_type": "answer", "question": question, "answer": answer})

    def query_truth(self, question: str, clip_indices: list[int]):
        self._add(0, "annotation", {
            "annotation_type": "query_truth",
            "question": question,
            "clip_indices": clip_indices,
        })

    def expect(self, at_ms: int, expect_type: str, **params):
        self._add(at_ms, "expect", {"expect_type": expect_type, **params})

    def text(self) -> str:
        ordered = sorted(self._events, key=lambda e: (e[0], e[1]))
        return "\n".join(json.dumps(e[2], sort_keys=True) for e in ordered) + "\n"


def _clip_frames(b: TraceBuilder, start_s: int, frames: int, key: str | None,
                 question: str | None = None, rows: int = 4, cols: int = 16):
    for i in range(frames):
        t = (start_s + i) * 1000
        if question is not None:
            b.frame_question(t, question, rows, cols)
        else:
            b.frame_key(t, key, rows, cols)


def build_weather() -> str:
    q = "How about the weather today?"
    b = TraceBuilder()
    b.meta(
        note=(
            "Semantics-implicit scenario: the query must retrieve the clip that "
            "showed the weather-related object. Clip 0's feature rows equal the "
            "reference encoding of the query itself, so cos(q, clip0) == 1 while "
            "the distractor clips use hashed embeddings of unrelated keys, which "
            "are never parallel to it; rank 1 is analytically certain."
        ),
        config={**SMALL_PROFILE, "memory.top_k": 2},
    )
    _clip_frames(b, 0, 4, None, question=q)        # clip 0: the umbrella clip
    _clip_frames(b, 4, 4, "corridor")              # clip 1
    _clip_frames(b, 8, 4, "bookshelf")             # clip 2
    b.silence(12000)
    start, end = b.burst(q)
    b.query_truth(q, [0])
    b.expect(end, "retrieved_contains", question=q, clip_index=0, rank=1)
    b.expect(end, "answer_count", question=q, count=1)
    return b.text()


def build_sandwich() -> str:
    q = "I'm hungry, where can I heat my sandwiches?"
    b = TraceBuilder()
    b.meta(
        note=(
            "Semantics-implicit scenario: the query must retrieve the clip that "
            "showed the appliance. Clip 1's rows equal the reference encoding of "
            "the query (cosine exactly 1); clips 0 and 2 are hashed distractors."
        ),
        config={**SMALL_PROFILE, "memory.top_k": 2},
    )
    _clip_frames(b, 0, 4, "hallway")               # clip 0
    _clip_frames(b, 4, 4, None, question=q)        # clip 1: the microwave clip
    _clip_frames(b, 8, 4, "window")                # clip 2
    b.silence(12000)
    start, end = b.burst(q)
    b.query_truth(q, [1])
    b.expect(end, "retrieved_contains", question=q, clip_index=1, rank=1)
    b.expect(end, "answer_count", question=q, count=1)
    return b.text()


def build_whatisthis() -> str:
    q = "What is this"
    b = TraceBuilder()
    b.meta(
        note=(
            "Reference-implicit scenario: a pronoun question must retrieve the "
            "latest clip. With 3 clips the recency bonus separates adjacent "
            "clips by 8/3 > 2, which exceeds the widest possible cosine spread, "
            "so the latest clip wins regardless of content."
        ),
        config={**SMALL_PROFILE, "memory.top_k": 2, "memory.recency_bonus": 8.0},
    )
    # keys chosen so plain cosine ranks clip 0 first: the bonus is decisive
    _clip_frames(b, 0, 4, "garden")                # clip 0, cos ~= +0.15
    _clip_frames(b, 4, 4, "stairwell")             # clip 1, cos ~= -0.10
    _clip_frames(b, 8, 4, "mailbox")               # clip 2 (latest), cos ~= -0.11
    b.silence(12000)
    start, end = b.burst(q)
    b.query_truth(q, [2])
    b.expect(end, "retrieved_contains", question=q, clip_index=2, rank=1)
    b.expect(end, "answer_count", question=q, count=1)
    return b.text()


def build_bargein() -> str:
    q = "please describe everything you can see here"
    b = TraceBuilder()
    b.meta(
        note=(
            "Barge-in scenario: a long reference-TTS answer is playing against a "
            "10-chunk client jitter buffer when a second voice onset fires; the "
            "interrupt must be written before any further answer audio and no "
            "old-generation chunk may follow it."
        ),
        config={**SMALL_PROFILE},
        transport={"playback_buffer_chunks": 10},
    )
    b.silence(992)
    start1, end1 = b.burst(q, tail_silence_ms=1600)
    start2, end2 = b.burst("stop", tail_silence_ms=992)
    b.expect(end2, "interrupt_by_ms", t_ms=start2)
    b.expect(end2, "no_stale_audio_after_interrupt")
    b.expect(end2, "answer_count", question=q, count=1)
    return b.text()


def build_isolation() -> str:
    q = "where did the blue marker go?"
    b = TraceBuilder()
    b.meta(
        note=(
            "Memory-grounding scenario: the query's backup fires at 4992 ms; a "
            "distractor clip whose rows equal the reference encoding of the query "
            "(the highest possible cosine) finishes ingestion afterwards and must "
            "stay invisible to the grounded retrieval."
        ),
        config={"profile.t": 2, "profile.n": 4, "profile.p": 2, "profile.c": 16,
                "memory.top_k": 2},
    )
    _clip_frames(b, 0, 2, "desk")                  # clip 0, ends 1000
    _clip_frames(b, 2, 2, "shelf")                 # clip 1, ends 3000
    b.silence(4992)
    start, end = b.burst(q, tail_silence_ms=1600)
    _clip_frames(b, 6, 2, None, question=q)        # clip 2, ends 7000: the distractor
    b.expect(end, "retrieved_only_before", question=q, t_ms=start)
    b.expect(end, "answer_count", question=q, count=1)
    return b.text()


def build_filler() -> str:
    b = TraceBuilder()
    b.meta(
        note=(
            "Filler-rejection scenario: backchannels, an empty transcript and a "
            "non-speech sound must produce no answer and no TTS audio at all."
        ),
        config={**SMALL_PROFILE},
    )
    b.silence(992)
    for transcript in ("enn...", "ok...", "", "hmm", "yeah"):
        b.burst(transcript)
    b.burst("", sound_class="laughing")
    b.expect(b.audio_cursor, "no_tts_audio")
    return b.text()


QUESTION_SUITE = (
    ("what color is the mug on the desk?", "The mug is red."),
    ("how many chairs are in the room?", "There are three chairs."),
    ("is the door open right now?", "Yes, the door is open."),
)


def build_questions() -> str:
    b = TraceBuilder()
    b.meta(
        note=(
            "Question suite under the wizard reasoner: each scripted question "
            "must produce exactly one answer with the trace's exact string."
        ),
        config={"profile.t": 2, "profile.n": 4, "profile.p": 2, "profile.c": 16,
                "backends.reasoner.implementation": "wizard"},
    )
    _clip_frames(b, 0, 2, "whiteboard")
    _clip_frames(b, 2, 2, "doorway")
    b.silence(4992)
    for question, answer in QUESTION_SUITE:
        start, end = b.burst(question)
        b.answer(question, answer)
        b.expect(end, "answer_equals", question=question, answer=answer)
        b.expect(end, "answer_count", question=question, count=1)
    first_q, first_a = QUESTION_SUITE[0]
    b.expect(b.audio_cursor, "tts_chunk_count", question=first_q,
             count=len(first_a) * 80 // CHUNK_MS)
    return b.text()


def build_latency(n_queries: int = 100) -> str:
    """Plumbing-latency trace for real-time mode: minimal VAD debounce and
    chunk-granular audio events so pacing follows the wall clock."""
    b = TraceBuilder()
    b.meta(
        note=(
            "Plumbing-latency scenario: voice-end to first outbound audio chunk "
            "with zero-cost backends; audio arrives one 16 ms chunk per event."
        ),
        config={**SMALL_PROFILE, "vad.onset_min_ms": 32, "vad.hangover_ms": 32},
    )

    def chunks(total_ms: int, make):
        for _ in range(total_ms // CHUNK_MS):
            make(CHUNK_MS)

    chunks(992, b.silence)
    for i in range(n_queries):
        start = b.audio_cursor
        chunks(96, b.tone)
        chunks(128, b.silence)
        b.segment(start, start + 96 + 32, "speech", f"check status item {i} now")
    return b.text()


BUNDLED = {
    "weather": build_weather,
    "sandwich": build_sandwich,
    "whatisthis": build_whatisthis,
    "bargein": build_bargein,
    "isolation": build_isolation,
    "filler": build_filler,
    "questions": build_questions,
}


def write_bundled(directory=None) -> list[Path]:
    directory = Path(directory) if directory else Path(__file__).parent / "traces"
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name, builder in BUNDLED.items():
        path = directory / f"{name}.jsonl"
        path.write_text(builder(), encoding="utf-8")
        written.append(path)
    return written


if __name__ == "__main__":
    for path in write_bundled():
        print(path)
