"""Per-session pipeline: the queue-and-worker topology.

    audio bytes -> chunker -> [audio q] -> vad --VoiceEnd--> [asr todo q]
                                  |  VoiceStart: interrupt -> outbound ctrl
                                  |             backup   -> memory ctrl
    frames -> sampler -> [frame q] -> compressor worker -> memory bank
    [asr todo q] -> asr -> [llm todo q] -> gate/retrieve/generate -> [tts todo q]
    [tts todo q] -> tts -> [outbound audio q] -> writer -> transport

Workers are logical single-steppers driven by ``cycle()`` in a fixed
order, which makes virtual-clock replay deterministic; live sessions run
the same engine on a dedicated thread, fed through thread-safe inbound
buffers. Queues are the only shared state between the feeding side and
the engine. Control channels are unbounded so signals never sit behind
data backpressure, and every worker drains control before data.
"""

from __future__ import annotations

import logging
import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Protocol

import numpy as np

from . import memory as mem
from . import perception, reasoning
from .backends import BackendSet
from .backends.config import RuntimeConfig
from .clock import Clock
from .errors import OliveError
from .ingest import (
    CHUNK_BYTES,
    CHUNK_MS,
    BoundedQueue,
    Empty,
    FrameSampler,
    OverflowPolicy,
    PutStatus,
    RawFrame,
    StreamChunker,
    StreamStalled,
)
from .vad import VoiceDetector, VoiceEnd, VoiceStart

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Backup:
    t_ms: int


class ControlChannel:
    """Unbounded out-of-band FIFO; posting never blocks."""

    def __init__(self):
        self._items = deque()
        self._lock = threading.Lock()

    def post(self, item) -> None:
        with self._lock:
            self._items.append(item)

    def drain(self) -> list:
        with self._lock:
            items = list(self._items)
            self._items.clear()
            return items

    def __len__(self):
        with self._lock:
            return len(self._items)


class Transport(Protocol):
    """Outbound seam. ``generation``/``utterance_id`` are observability
    fields for test transports; they are not part of the wire format."""

    def send_json(self, message: dict) -> None: ...

    def try_send_audio(
        self, seq: int, t_ms: int, payload: bytes, generation: int, utterance_id: int
    ) -> bool: ...


class NullTransport:
    def send_json(self, message: dict) -> None:
        pass

    def try_send_audio(self, seq, t_ms, payload, generation, utterance_id) -> bool:
        return True


class RecordingTransport:
    """Ordered in-process transport for tests and replay.

    With ``playback_buffer_chunks`` set it models a client jitter buffer:
    audio is accepted only while less than that many chunks are buffered
    ahead of the playback position, which advances with the clock. That
    is what leaves undelivered chunks for an interrupt to discard."""

    def __init__(self, clock: Clock, playback_buffer_chunks: Optional[int] = None):
        self.clock = clock
        self.playback_buffer_chunks = playback_buffer_chunks
        self.log: list[dict] = []
        self._playback_free_at_ms = 0.0

    def send_json(self, message: dict) -> None:
        self.log.append({"kind": "json", "t_wall_ms": self.clock.now_ms(), "message": message})

    def try_send_audio(self, seq, t_ms, payload, generation, utterance_id) -> bool:
        now = self.clock.now_ms()
        if self.playback_buffer_chunks is not None:
            start = max(now, self._playback_free_at_ms)
            buffered_ms = start - now
            if buffered_ms >= self.playback_buffer_chunks * CHUNK_MS:
                return False
            self._playback_free_at_ms = start + CHUNK_MS
        self.log.append(
            {
                "kind": "audio",
                "t_wall_ms": now,
                "seq": seq,
                "t_ms": t_ms,
                "bytes": len(payload),
                "generation": generation,
                "utterance_id": utterance_id,
            }
        )
        return True

    def audio_entries(self):
        return [e for e in self.log if e["kind"] == "audio"]

    def json_entries(self, mtype: Optional[str] = None):
        out = [e for e in self.log if e["kind"] == "json"]
        if mtype is not None:
            out = [e for e in out if e["message"].get("type") == mtype]
        return out


@dataclass
class UtteranceMetrics:
    utterance_id: int
    t_start_ms: int = 0
    t_end_ms: int = 0
    wall_start_ms: float = 0.0
    wall_end_ms: Optional[float] = None
    sound_class: str = ""
    transcript: str = ""
    gate_verdict: str = ""
    gate_reason: str = ""
    answered: bool = False
    answer: str = ""
    grounded_clips: tuple = ()
    gate_ms: float = 0.0
    retrieve_ms: float = 0.0
    generate_ms: float = 0.0
    first_audio_wall_ms: Optional[float] = None
    tts_chunks: int = 0


@dataclass
class InterruptMetrics:
    generation: int
    t_ms: int
    detect_wall_ms: float
    written_wall_ms: Optional[float] = None


@dataclass
class MetricsRecorder:
    utterances: list = field(default_factory=list)
    interrupts: list = field(default_factory=list)
    environment_events: list = field(default_factory=list)
    dropped_audio_chunks: int = 0

    def utterance(self, utt_id: int) -> UtteranceMetrics:
        for u in self.utterances:
            if u.utterance_id == utt_id:
                return u
        u = UtteranceMetrics(utterance_id=utt_id)
        self.utterances.append(u)
        return u


@dataclass(frozen=True)
class _AsrItem:
    utterance_id: int
    segment: object
    generation: int  # the generation opened by this utterance's own onset


@dataclass(frozen=True)
class _LlmItem:
    utterance_id: int
    result: perception.AudioResult
    generation: int


@dataclass(frozen=True)
class _TtsItem:
    utterance_id: int
    generation: int
    text: str


@dataclass(frozen=True)
class _OutChunk:
    utterance_id: int
    generation: int
    payload: bytes


class SessionPipeline:
    def __init__(
        self,
        session_id: str,
        config: RuntimeConfig,
        backends: BackendSet,
        clock: Clock,
        transport: Transport,
        metrics: Optional[MetricsRecorder] = None,
    ):
        config.validate()
        self.session_id = session_id
        self.config = config
        self.backends = backends
        self.clock = clock
        self.transport = transport
        self.metrics = metrics or MetricsRecorder()

        q = config.queues
        self.audio_q = BoundedQueue(q.audio, OverflowPolicy.BLOCK, "audio")
        self.frame_q = BoundedQueue(q.frame, OverflowPolicy.DROP_OLDEST, "frame")
        self.asr_q = BoundedQueue(q.asr_todo, OverflowPolicy.BLOCK, "asr_todo")
        self.llm_q = BoundedQueue(q.llm_todo, OverflowPolicy.BLOCK, "llm_todo")
        self.tts_q = BoundedQueue(q.tts_todo, OverflowPolicy.BLOCK, "tts_todo")
        self.out_audio_q = BoundedQueue(
            q.outbound_audio, OverflowPolicy.DROP_OLDEST, "outbound_audio"
        )
        self.mem_ctrl = ControlChannel()
        self.out_ctrl = ControlChannel()

        self._chunker = StreamChunker(session_id)
        self._sampler = FrameSampler(
            session_id, config.ingest.frame_rate_fps, config.ingest.stall_threshold_ms
        )
        self._vad = VoiceDetector(config.vad)
        self._assembler = perception.ClipAssembler(config.profile.t)
        self.bank = mem.MemoryBank(
            tokens_per_frame=config.profile.n,
            p=config.profile.p,
            backend=backends.compressor,
            window_clips=config.memory.window_clips,
            max_snapshots=config.memory.max_snapshots,
            frame_refs_per_clip=config.memory.frame_refs_per_clip,
        )

        self._gen_lock = threading.Lock()
        self.generation = 0
        self._utt_counter = 0
        self._current_utt: Optional[int] = None

        # thread-safe inbound buffers (feeding side -> engine)
        self._in_lock = threading.Lock()
        self._in_pcm = deque()
        self._in_frames = deque()
        self._in_ended = False
        self._in_cond = threading.Condition(self._in_lock)

        # worker backlogs for BLOCK-policy downstream queues
        self._vad_backlog = deque()
        self._asr_backlog = deque()
        self._llm_backlog = deque()
        self._tts_backlog = deque()
        self._writer_pending: Optional[_OutChunk] = None
        self._out_seq = 0
        self._in_frame_seq = 0
        self._audio_eos_flushed = False
        self._frames_eos_flushed = False
        self.faulted: Optional[str] = None

        self._workers = (
            self._w_ingest,
            self._w_vad,
            self._w_memory,
            self._w_asr,
            self._w_llm,
            self._w_tts,
            self._w_writer,
        )

    # ── feeding side (any thread) ────────────────────────────────────

    def submit_audio(self, data: bytes) -> None:
        with self._in_cond:
            self._in_pcm.append(data)
            self._in_cond.notify()

    def submit_frame(self, t_ms: int, payload, is_features: bool = False) -> None:
        with self._in_cond:
            self._in_frames.append((t_ms, payload, is_features))
            self._in_cond.notify()

    def submit_end(self) -> None:
        with self._in_cond:
            self._in_ended = True
            self._in_cond.notify()

    def wait_for_input(self, timeout: float) -> None:
        with self._in_cond:
            if not (self._in_pcm or self._in_frames or self._in_ended):
                self._in_cond.wait(timeout)

    # ── engine ───────────────────────────────────────────────────────

    def cycle(self) -> bool:
        """Run every worker to quiescence. Returns True if anything moved."""
        if self.faulted:
            return False
        progressed = False
        while True:
            any_progress = False
            for worker in self._workers:
                try:
                    if worker():
                        any_progress = True
                except OliveError as exc:
                    self.faulted = str(exc)
                    logger.error("session %s faulted: %s", self.session_id, exc)
                    self._status("session_fault", str(exc))
                    try:
                        self._w_writer()  # flush the fault notice
                    except Exception:
                        pass
                    return True
            if not any_progress:
                return progressed
            progressed = True

    def pending_work(self) -> bool:
        with self._in_lock:
            inbound = bool(self._in_pcm or self._in_frames)
            eos_unflushed = self._in_ended and not (
                self._audio_eos_flushed and self._frames_eos_flushed
            )
        return (
            inbound
            or eos_unflushed
            or len(self.audio_q) > 0
            or len(self.frame_q) > 0
            or len(self.asr_q) > 0
            or len(self.llm_q) > 0
            or len(self.tts_q) > 0
            or len(self.out_audio_q) > 0
            or len(self.mem_ctrl) > 0
            or len(self.out_ctrl) > 0
            or bool(self._vad_backlog)
            or bool(self._asr_backlog)
            or bool(self._llm_backlog)
            or bool(self._tts_backlog)
            or self._writer_pending is not None
        )

    def run_live(self, stop: threading.Event, poll_s: float = 0.002) -> None:
        """Engine loop for live sessions (dedicated thread)."""
        while not stop.is_set():
            self.cycle()
            if self.faulted:
                break
            with self._in_lock:
                ended = self._in_ended
            if not self.pending_work():
                if ended:
                    break
                self.wait_for_input(poll_s)

    def queue_stats(self) -> dict:
        return {
            "audio": self.audio_q.stats(),
            "frame": self.frame_q.stats(),
            "asr_todo": self.asr_q.stats(),
            "llm_todo": self.llm_q.stats(),
            "tts_todo": self.tts_q.stats(),
            "outbound_audio": self.out_audio_q.stats(),
        }

    # ── outbound helpers ─────────────────────────────────────────────

    def _status(self, status: str, detail: str = "", utterance_id: Optional[int] = None):
        msg = {
            "type": "status",
            "session": self.session_id,
            "payload": {"status": status, "detail": detail, "utterance_id": utterance_id},
        }
        self.out_ctrl.post(msg)

    # ── workers ──────────────────────────────────────────────────────

    def _w_ingest(self) -> bool:
        progressed = False
        with self._in_lock:
            pcm = list(self._in_pcm)
            self._in_pcm.clear()
            frames = list(self._in_frames)
            self._in_frames.clear()
            ended = self._in_ended
        for data in pcm:
            for chunk in self._chunker.feed(data):
                self._vad_backlog.append(("chunk", chunk))
            progressed = True
        if ended and not self._audio_eos_flushed and not pcm:
            for chunk in self._chunker.finish():
                self._vad_backlog.append(("chunk", chunk))
            self._vad_backlog.append(("flush", None))
            self._audio_eos_flushed = True
            progressed = True
        # move backlog into the audio queue while there is room
        while self._vad_backlog and self._vad_backlog[0][0] == "chunk":
            result = self.audio_q.try_put(self._vad_backlog[0][1])
            if result.status is PutStatus.FULL:
                break
            self._vad_backlog.popleft()
            progressed = True
        for t_ms, payload, is_features in frames:
            raw = RawFrame(self.session_id, self._in_frame_seq, t_ms, payload, is_features)
            self._in_frame_seq += 1
            for item in self._sampler.feed(raw):
                if isinstance(item, StreamStalled):
                    self._status("stream_stalled", f"gap {item.gap_ms} ms")
                else:
                    self.frame_q.put(item)  # DropOldest: stale frames superseded
            progressed = True
        if ended and not self._frames_eos_flushed and not frames:
            self._frames_eos_flushed = True
            progressed = True
        return progressed

    def _w_vad(self) -> bool:
        progressed = False
        # a pending segment gates chunk consumption: strict FIFO into asr
        while self._asr_backlog:
            if self.asr_q.try_put(self._asr_backlog[0]).status is PutStatus.FULL:
                return progressed
            self._asr_backlog.popleft()
            progressed = True
        while True:
            # the eos flush marker sits in the vad backlog behind all chunks
            if (
                self._vad_backlog
                and self._vad_backlog[0][0] == "flush"
                and len(self.audio_q) == 0
            ):
                self._vad_backlog.popleft()
                for event in self._vad.flush():
                    self._handle_vad_event(event)
                progressed = True
                continue
            try:
                chunk = self.audio_q.try_get()
            except Empty:
                break
            for event in self._vad.process_chunk(chunk):
                self._handle_vad_event(event)
            progressed = True
            if self._asr_backlog:
                break
        return progressed

    def _handle_vad_event(self, event) -> None:
        if isinstance(event, VoiceStart):
            self._utt_counter += 1
            self._current_utt = self._utt_counter
            with self._gen_lock:
                self.generation += 1
                gen = self.generation
            um = self.metrics.utterance(self._current_utt)
            um.t_start_ms = event.t_ms
            um.wall_start_ms = self.clock.now_ms()
            self.metrics.interrupts.append(
                InterruptMetrics(
                    generation=gen, t_ms=event.t_ms, detect_wall_ms=self.clock.now_ms()
                )
            )
            # issuance order: interrupt to the frontend, then backup to memory
            self.out_ctrl.post(
                {
                    "type": "interrupt",
                    "session": self.session_id,
                    "payload": {"t_ms": event.t_ms, "generation": gen},
                }
            )
            self.mem_ctrl.post(Backup(t_ms=event.t_ms))
        elif isinstance(event, VoiceEnd):
            utt = self._current_utt if self._current_utt is not None else 0
            um = self.metrics.utterance(utt)
            um.t_end_ms = event.segment.t_end_ms
            um.wall_end_ms = self.clock.now_ms()
            self._asr_backlog.append(_AsrItem(utt, event.segment, self.generation))
            self._current_utt = None

    def _w_memory(self) -> bool:
        progressed = False
        for signal in self.mem_ctrl.drain():
            if isinstance(signal, Backup):
                self.bank.snapshot(signal.t_ms)
                progressed = True
        while True:
            try:
                frame = self.frame_q.try_get()
            except Empty:
                break
            progressed = True
            ff = perception.extract_frame_features(frame, self.backends.frame_encoder)
            if ff is None:
                self._status("frame_decode_error", f"frame at {frame.t_ms} ms dropped")
                continue
            clip = self._assembler.add(ff)
            if not isinstance(clip, perception.NotReady):
                self.bank.ingest_clip(clip)
        if (
            self._frames_eos_flushed
            and len(self.frame_q) == 0
            and self._assembler.has_partial
        ):
            clip = self._assembler.flush()
            if clip is not None:
                self.bank.ingest_clip(clip)
                progressed = True
        return progressed

    def _w_asr(self) -> bool:
        progressed = False
        while self._llm_backlog:
            if self.llm_q.try_put(self._llm_backlog[0]).status is PutStatus.FULL:
                return progressed
            self._llm_backlog.popleft()
            progressed = True
        while True:
            try:
                item = self.asr_q.try_get()
            except Empty:
                break
            progressed = True
            result = perception.classify_and_transcribe(
                item.segment, self.backends.asr, self.clock
            )
            um = self.metrics.utterance(item.utterance_id)
            um.sound_class = result.sound_class
            um.transcript = result.transcript
            if result.sound_class == perception.SOUND_ERROR:
                self._status("asr_error", "backend failed", item.utterance_id)
                continue
            self.out_ctrl.post(
                {
                    "type": "transcript",
                    "session": self.session_id,
                    "payload": {
                        "utterance_id": item.utterance_id,
                        "t_start_ms": item.segment.t_start_ms,
                        "t_end_ms": item.segment.t_end_ms,
                        "sound_class": result.sound_class,
                        "text": result.transcript,
                    },
                }
            )
            if result.sound_class == perception.SOUND_SPEECH:
                self._llm_backlog.append(
                    _LlmItem(item.utterance_id, result, item.generation)
                )
            else:
                # environment sounds never reach the reasoner
                self.metrics.environment_events.append(
                    (item.utterance_id, result.sound_class)
                )
                self._status(
                    "environment_sound", result.sound_class, item.utterance_id
                )
            if self._llm_backlog:
                break
        return progressed

    def _w_llm(self) -> bool:
        progressed = False
        while self._tts_backlog:
            if self.tts_q.try_put(self._tts_backlog[0]).status is PutStatus.FULL:
                return progressed
            self._tts_backlog.popleft()
            progressed = True
        while True:
            try:
                item = self.llm_q.try_get()
            except Empty:
                break
            progressed = True
            self._answer(item)
            if self._tts_backlog:
                break
        return progressed

    def _answer(self, item: _LlmItem) -> None:
        um = self.metrics.utterance(item.utterance_id)
        transcript = item.result.transcript
        t0 = self.clock.now_ms()
        decision = reasoning.predict_instruction(transcript, self.backends.gate)
        um.gate_ms = self.clock.now_ms() - t0
        um.gate_verdict = decision.verdict.value
        um.gate_reason = decision.reason
        if decision.verdict is reasoning.Verdict.IGNORE:
            self._status("gate_ignored", decision.reason, item.utterance_id)
            return
        gen = item.generation
        segment = item.result.segment
        t1 = self.clock.now_ms()
        snapshot = self.bank.restore_for_grounding(segment.t_start_ms)
        long_term = snapshot.long_term
        if long_term.size == 0:
            long_term = np.zeros((0, self.config.profile.c))
        try:
            qf = mem.encode_question(long_term, transcript, self.backends.compressor)
            retrieved = mem.retrieve(
                qf,
                snapshot,
                top_k=self.config.memory.top_k,
                recency_bonus=self.config.memory.recency_bonus,
            )
        except Exception as exc:
            logger.warning("retrieval failed for %r", transcript, exc_info=True)
            self._status("retrieval_error", str(exc), item.utterance_id)
            return
        um.retrieve_ms = self.clock.now_ms() - t1
        prompt = reasoning.build_prompt(transcript, retrieved)
        t2 = self.clock.now_ms()
        pieces: list[str] = []
        try:
            for piece in reasoning.split_sentences(
                reasoning.generate_answer(prompt, self.backends.reasoner)
            ):
                if (
                    self.config.reasoning.cancel_generation_on_interrupt
                    and self.generation != gen
                ):
                    self._status("generation_cancelled", "", item.utterance_id)
                    break
                pieces.append(piece)
                if self.config.reasoning.sentence_streaming:
                    self._tts_backlog.append(_TtsItem(item.utterance_id, gen, piece))
        except Exception as exc:
            logger.warning("reasoner failed for %r", transcript, exc_info=True)
            self._status("reasoner_error", str(exc), item.utterance_id)
        um.generate_ms = self.clock.now_ms() - t2
        answer = "".join(pieces)
        if not self.config.reasoning.sentence_streaming and answer:
            self._tts_backlog.append(_TtsItem(item.utterance_id, gen, answer))
        um.answered = True
        um.answer = answer
        um.grounded_clips = tuple(h.clip_index for h in retrieved)
        self.out_ctrl.post(
            {
                "type": "answer",
                "session": self.session_id,
                "payload": {
                    "utterance_id": item.utterance_id,
                    "question": transcript,
                    "answer": answer,
                    "grounded_clips": list(um.grounded_clips),
                    "gate_ms": um.gate_ms,
                    "retrieve_ms": um.retrieve_ms,
                    "generate_ms": um.generate_ms,
                },
            }
        )

    def _w_tts(self) -> bool:
        # one item per pass so the writer drains between sentences; a single
        # sentence longer than the outbound buffer still evicts its head,
        # which is the documented slow-client behavior of that buffer
        progressed = False
        for _ in range(1):
            try:
                item = self.tts_q.try_get()
            except Empty:
                break
            progressed = True
            if item.generation < self.generation:
                continue  # stale answer; discard before synthesis
            try:
                pcm = self.backends.tts.synthesize(item.text)
            except Exception as exc:
                logger.warning("tts backend failed", exc_info=True)
                self._status("tts_error", str(exc), item.utterance_id)
                continue
            um = self.metrics.utterance(item.utterance_id)
            dropped = 0
            for off in range(0, len(pcm), CHUNK_BYTES):
                if item.generation < self.generation:
                    break  # interrupted mid-answer
                result = self.out_audio_q.put(
                    _OutChunk(item.utterance_id, item.generation, pcm[off : off + CHUNK_BYTES])
                )
                um.tts_chunks += 1
                if result.status is PutStatus.DROPPED:
                    dropped += 1
            if dropped:
                self.metrics.dropped_audio_chunks += dropped
                self._status(
                    "outbound_audio_dropped", f"{dropped} chunks", item.utterance_id
                )
        return progressed

    def _w_writer(self) -> bool:
        progressed = False
        for msg in self.out_ctrl.drain():
            if msg.get("type") == "interrupt":
                gen = msg["payload"]["generation"]
                self._out_seq = 0  # outbound seq restarts per generation
                for im in self.metrics.interrupts:
                    if im.generation == gen and im.written_wall_ms is None:
                        im.written_wall_ms = self.clock.now_ms()
            self.transport.send_json(msg)
            progressed = True
        while True:
            if self._writer_pending is None:
                try:
                    self._writer_pending = self.out_audio_q.try_get()
                except Empty:
                    break
            chunk = self._writer_pending
            if chunk.generation < self.generation:
                self._writer_pending = None  # stale: discard before write
                progressed = True
                continue
            ok = self.transport.try_send_audio(
                self._out_seq,
                self._out_seq * CHUNK_MS,
                chunk.payload,
                chunk.generation,
                chunk.utterance_id,
            )
            if not ok:
                break  # client buffer full; retry after time advances
            um = self.metrics.utterance(chunk.utterance_id)
            if um.first_audio_wall_ms is None:
                um.first_audio_wall_ms = self.clock.now_ms()
            self._out_seq += 1
            self._writer_pending = None
            progressed = True
        return progressed
