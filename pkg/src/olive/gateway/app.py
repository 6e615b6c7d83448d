"""Session-facing WebSocket gateway.

One socket per session carries everything: JSON control frames and binary
media frames inbound, interrupts/transcripts/answers/status and binary
answer audio outbound. Each live session runs its pipeline engine on a
dedicated thread; the socket reader feeds it and an async writer drains
its outbound queue. /healthz reports per-session queue depths.
"""

from __future__ import annotations

import logging
import queue
import threading
from typing import Optional

import anyio
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from pydantic import BaseModel

from ..backends import build_backends
from ..backends.config import RuntimeConfig, load_config
from ..clock import RealClock
from ..errors import ConfigError, OliveError
from ..pipeline import SessionPipeline
from . import wire

logger = logging.getLogger(__name__)

HANDSHAKING = "handshaking"
LIVE = "live"
DRAINING = "draining"
CLOSED = "closed"
_STATE_ORDER = (HANDSHAKING, LIVE, DRAINING, CLOSED)


class WsTransport:
    """Pipeline-facing transport that hands frames to the socket writer."""

    def __init__(self):
        self.outbox: "queue.Queue" = queue.Queue()

    def send_json(self, message: dict) -> None:
        self.outbox.put(("json", message))

    def try_send_audio(self, seq, t_ms, payload, generation, utterance_id) -> bool:
        frame = wire.encode_binary(
            wire.BinaryFrame(wire.KIND_AUDIO_OUT, seq, t_ms, payload)
        )
        self.outbox.put(("binary", frame))
        return True

    def close(self) -> None:
        self.outbox.put(None)


class LiveSession:
    def __init__(self, session_id: str, pipeline: SessionPipeline, transport: WsTransport):
        self.session_id = session_id
        self.pipeline = pipeline
        self.transport = transport
        self.state = HANDSHAKING
        self.stop = threading.Event()
        self.engine = threading.Thread(
            target=pipeline.run_live, args=(self.stop,), daemon=True,
            name=f"ol-engine-{session_id}",
        )

    def advance(self, state: str) -> None:
        # session states only move forward
        if _STATE_ORDER.index(state) < _STATE_ORDER.index(self.state):
            raise OliveError(f"session state cannot move {self.state} -> {state}")
        self.state = state


class SessionRegistry:
    def __init__(self):
        self._lock = threading.Lock()
        self._sessions: dict[str, LiveSession] = {}

    def register(self, session: LiveSession) -> bool:
        with self._lock:
            if session.session_id in self._sessions:
                return False
            self._sessions[session.session_id] = session
            return True

    def deregister(self, session_id: str) -> None:
        with self._lock:
            self._sessions.pop(session_id, None)

    def snapshot(self) -> dict[str, LiveSession]:
        with self._lock:
            return dict(self._sessions)


class QueueStats(BaseModel):
    depth: int
    capacity: int
    high_water: int


class SessionHealth(BaseModel):
    state: str
    generation: int
    queues: dict[str, QueueStats]


class HealthResponse(BaseModel):
    status: str
    sessions: dict[str, SessionHealth]


def _negotiated_config(base: RuntimeConfig, profile: Optional[wire.Profile]) -> RuntimeConfig:
    import copy

    cfg = copy.deepcopy(base)
    if profile is not None:
        cfg.profile.t = profile.t
        cfg.profile.n = profile.n
        cfg.profile.p = profile.p
        cfg.profile.c = profile.c
        cfg.profile.sample_rate = profile.sample_rate
    cfg.validate()
    return cfg


def create_app(config: Optional[RuntimeConfig] = None) -> FastAPI:
    cfg = config if config is not None else load_config()
    app = FastAPI(title="olive gateway")
    registry = SessionRegistry()
    app.state.config = cfg
    app.state.registry = registry

    @app.get("/healthz", response_model=HealthResponse)
    def healthz() -> HealthResponse:
        sessions = {}
        for sid, sess in registry.snapshot().items():
            sessions[sid] = SessionHealth(
                state=sess.state,
                generation=sess.pipeline.generation,
                queues={
                    name: QueueStats(**stats)
                    for name, stats in sess.pipeline.queue_stats().items()
                },
            )
        return HealthResponse(status="ok", sessions=sessions)

    @app.websocket(cfg.gateway.ws_path)
    async def ws_endpoint(ws: WebSocket) -> None:
        import asyncio

        await ws.accept()
        session = await _handshake(ws, cfg, registry)
        if session is None:
            return
        writer = asyncio.create_task(_writer_loop(ws, session))
        clean_bye = False
        try:
            clean_bye = await _reader_loop(ws, session)
        finally:
            session.advance(DRAINING)
            if clean_bye:
                # let in-flight work finish so queued answers still go out
                session.pipeline.submit_end()
                await asyncio.to_thread(session.engine.join, 5.0)
            session.stop.set()
            session.transport.close()  # sentinel: writer exits after flushing
            try:
                await asyncio.wait_for(writer, timeout=5.0)
            except (asyncio.TimeoutError, asyncio.CancelledError):
                writer.cancel()
            if clean_bye:
                try:
                    await ws.send_json(_bye(session.session_id, "session-closed"))
                    await ws.close()
                except Exception:
                    pass
            session.advance(CLOSED)
            registry.deregister(session.session_id)

    return app


async def _handshake(
    ws: WebSocket, cfg: RuntimeConfig, registry: SessionRegistry
) -> Optional[LiveSession]:
    message = await ws.receive()
    if message.get("bytes") is not None:
        await ws.send_json(_bye("", "binary frame before ready"))
        await ws.close()
        return None
    try:
        hello = wire.parse_json_message(_json_of(message))
    except wire.WireFormatError as exc:
        await ws.send_json(_bye("", f"bad hello: {exc}"))
        await ws.close()
        return None
    if not isinstance(hello, wire.HelloMessage):
        await ws.send_json(_bye("", "first frame must be hello"))
        await ws.close()
        return None
    if hello.payload.version != wire.PROTOCOL_VERSION:
        await ws.send_json(_bye(hello.session, "version"))
        await ws.close()
        return None
    try:
        session_cfg = _negotiated_config(cfg, hello.payload.profile)
    except ConfigError as exc:
        await ws.send_json(_bye(hello.session, f"profile: {exc}"))
        await ws.close()
        return None

    transport = WsTransport()
    pipeline = SessionPipeline(
        session_id=hello.session,
        config=session_cfg,
        backends=build_backends(session_cfg),
        clock=RealClock(),
        transport=transport,
    )
    session = LiveSession(hello.session, pipeline, transport)
    if not registry.register(session):
        await ws.send_json(_bye(hello.session, "duplicate-session"))
        await ws.close()
        return None
    session.engine.start()
    session.advance(LIVE)
    p = session_cfg.profile
    ready = wire.ReadyMessage(
        session=hello.session,
        payload=wire.ReadyPayload(
            profile=wire.Profile(t=p.t, n=p.n, p=p.p, c=p.c, sample_rate=p.sample_rate)
        ),
    )
    await ws.send_json(ready.model_dump())
    return session


async def _reader_loop(ws: WebSocket, session: LiveSession) -> bool:
    """Feed inbound frames to the pipeline. True if the client said bye."""
    while True:
        try:
            message = await ws.receive()
        except WebSocketDisconnect:
            return False
        if message["type"] == "websocket.disconnect":
            return False
        if message.get("bytes") is not None:
            _handle_binary(ws, session, message["bytes"])
            continue
        try:
            parsed = wire.parse_json_message(_json_of(message))
        except wire.WireFormatError as exc:
            # unknown/malformed types: report, keep the connection
            session.transport.send_json(
                _status(session.session_id, "protocol_error", str(exc))
            )
            continue
        if isinstance(parsed, wire.ByeMessage):
            return True
        session.transport.send_json(
            _status(session.session_id, "protocol_error",
                    f"unexpected {parsed.type} from client")
        )


def _handle_binary(ws: WebSocket, session: LiveSession, data: bytes) -> None:
    try:
        frame = wire.decode_binary(data)
    except wire.WireFormatError as exc:
        session.transport.send_json(_status(session.session_id, "protocol_error", str(exc)))
        return
    if frame.kind == wire.KIND_AUDIO_IN:
        session.pipeline.submit_audio(frame.body)
    elif frame.kind == wire.KIND_FRAME_IN:
        session.pipeline.submit_frame(frame.t_ms, frame.body, is_features=False)
    else:
        session.transport.send_json(
            _status(session.session_id, "protocol_error",
                    f"client sent outbound kind 0x{frame.kind:02x}")
        )


async def _writer_loop(ws: WebSocket, session: LiveSession) -> None:
    outbox = session.transport.outbox
    while True:
        item = await anyio.to_thread.run_sync(outbox.get)
        if item is None:
            return
        kind, payload = item
        try:
            if kind == "json":
                await ws.send_json(payload)
            else:
                await ws.send_bytes(payload)
        except Exception:
            # the endpoint's teardown owns the state transition
            logger.info("session %s writer stopped: socket closed", session.session_id)
            return


def _json_of(message: dict) -> dict:
    import json

    text = message.get("text")
    if text is None:
        raise wire.WireFormatError("expected a text frame")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise wire.WireFormatError(f"frame is not valid JSON: {exc.msg}") from exc


def _bye(session: str, reason: str) -> dict:
    return {"type": "bye", "session": session, "payload": {"reason": reason}}


def _status(session: str, status: str, detail: str = "") -> dict:
    return {
        "type": "status",
        "session": session,
        "payload": {"status": status, "detail": detail, "utterance_id": None},
    }
