"""Message-based service for live clients.

One logical owner (the tick task) advances the simulation; connection
handlers only enqueue parsed messages and send replies. Both carriers —
raw TCP (u32 big-endian length prefix + UTF-8 JSON) and WebSocket text
frames — are accepted on the same port, distinguished by sniffing the
first bytes ("GET " marks an HTTP upgrade).
"""

from __future__ import annotations

import asyncio
import contextlib
import itertools
import struct

from .config import SimConfig
from .protocol import (
    ProtocolError, dump_json_message, encode_tcp_frame, parse_json_message,
    read_tcp_frame, ws_encode_frame, ws_handshake, ws_read_text,
)
from .sim import Simulation

_BATCH_PERIOD_S = 0.01


class ClientSession:
    _ids = itertools.count(1)

    def __init__(self, kind: str, reader, writer):
        self.id = next(self._ids)
        self.kind = kind  # "tcp" | "ws"
        self.reader = reader
        self.writer = writer
        self.console_id = None
        self.alive = True

    def send(self, msg: dict) -> None:
        if not self.alive:
            return
        payload = dump_json_message(msg)
        if self.kind == "tcp":
            self.writer.write(encode_tcp_frame(payload))
        else:
            self.writer.write(ws_encode_frame(payload))

    async def read_payload(self):
        if self.kind == "tcp":
            return await read_tcp_frame(self.reader)
        return await ws_read_text(self.reader, self.writer)


class ConductorServer:
    """serve(): accept clients, queue their messages, apply at tick boundaries."""

    def __init__(self, config: SimConfig, host: str = "127.0.0.1", port: int = 0):
        self.config = config
        self.host = host
        self.port = port
        self.sim = Simulation(config)
        self.sessions = {}
        self._queue = []   # ordered (session, message) pairs
        self._server = None
        self._tick_task = None
        self._stopping = False

    async def start(self) -> None:
        self._server = await asyncio.start_server(self._handle_client, self.host, self.port)
        self.port = self._server.sockets[0].getsockname()[1]
        self._tick_task = asyncio.ensure_future(self._tick_loop())

    async def stop(self) -> None:
        self._stopping = True
        if self._tick_task is not None:
            self._tick_task.cancel()
            with contextlib.suppress(asyncio.CancelledError):
                await self._tick_task
        for session in list(self.sessions.values()):
            await self._close_session(session)
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
        self.sim.stop_recording()

    async def serve_forever(self) -> None:
        await self.start()
        await self._server.serve_forever()

    # ---- tick owner -------------------------------------------------------

    async def _tick_loop(self) -> None:
        ticks_per_batch = max(1, round(self.config.tick_rate_hz * _BATCH_PERIOD_S))
        telemetry_ticks = max(
            1, self.config.tick_rate_hz // self.config.telemetry_rate_hz)
        snapshot_ticks = max(
            1, self.config.tick_rate_hz // self.config.snapshot_rate_hz)
        last_telemetry = -1
        last_snapshot = -1
        while not self._stopping:
            batch, self._queue = self._queue, []
            replies = self.sim.step([msg for _, msg in batch])
            for (session, _), reply in zip(batch, replies):
                session.send(reply)
            for _ in range(ticks_per_batch - 1):
                self.sim.step(())
            if self.sim.tick // telemetry_ticks > last_telemetry:
                last_telemetry = self.sim.tick // telemetry_ticks
                self._broadcast(self.sim.telemetry())
            if self.sim.tick // snapshot_ticks > last_snapshot:
                last_snapshot = self.sim.tick // snapshot_ticks
                self._broadcast(self.sim.snapshot())
            await self._flush_all()
            await asyncio.sleep(_BATCH_PERIOD_S)

    def _broadcast(self, msg: dict) -> None:
        for session in self.sessions.values():
            session.send(msg)

    async def _flush_all(self) -> None:
        for session in list(self.sessions.values()):
            try:
                await session.writer.drain()
            except (ConnectionError, RuntimeError):
                await self._close_session(session)

    # ---- connection handlers ------------------------------------------------

    async def _handle_client(self, reader, writer) -> None:
        try:
            head = await reader.readexactly(4)
        except (asyncio.IncompleteReadError, ConnectionError):
            writer.close()
            return
        if head == b"GET ":
            try:
                first_line = head + await reader.readline()
                await ws_handshake(reader, writer, first_line)
            except (ProtocolError, ConnectionError, asyncio.IncompleteReadError):
                writer.close()
                return
            session = ClientSession("ws", reader, writer)
        else:
            session = ClientSession("tcp", reader, writer)
            session._pending_head = head
        self.sessions[session.id] = session
        try:
            await self._session_loop(session)
        finally:
            await self._close_session(session)

    async def _session_loop(self, session: ClientSession) -> None:
        while not self._stopping:
            try:
                if session.kind == "tcp" and getattr(session, "_pending_head", None):
                    (length,) = struct.unpack(">I", session._pending_head)
                    session._pending_head = None
                    if length > 1 << 20:
                        raise ProtocolError("oversized frame")
                    payload = await session.reader.readexactly(length)
                else:
                    payload = await session.read_payload()
            except (asyncio.IncompleteReadError, ConnectionError):
                return
            except ProtocolError as e:
                # framing violation: error, then disconnect this client only
                session.send({"type": "error", "code": "protocol", "detail": str(e)})
                with contextlib.suppress(ConnectionError):
                    await session.writer.drain()
                return
            if payload is None:  # clean WebSocket close
                return
            msg, err = parse_json_message(payload)
            if err is not None:
                session.send({"type": "error", "code": "bad_message", "detail": err})
                continue
            self._dispatch(session, msg)
            with contextlib.suppress(ConnectionError):
                await session.writer.drain()

    def _dispatch(self, session: ClientSession, msg: dict) -> None:
        if msg.get("type") == "hello":
            # answered immediately: it only binds the session, no sim state
            console = msg.get("console_id")
            reply = self.sim.handle_message(msg)
            if reply.get("type") == "welcome" and console is not None:
                session.console_id = console
            session.send(reply)
            return
        if session.console_id is not None:
            msg.setdefault("console_id", session.console_id)
        self._queue.append((session, msg))

    async def _close_session(self, session: ClientSession) -> None:
        if not session.alive:
            return
        session.alive = False
        self.sessions.pop(session.id, None)
        if session.console_id is not None:
            # disconnect releases ownership; the arms freeze next tick
            self.sim.release_client(session.console_id)
        with contextlib.suppress(ConnectionError):
            session.writer.close()


async def serve(config: SimConfig, host: str, port: int) -> ConductorServer:
    server = ConductorServer(config, host, port)
    await server.start()
    return server
