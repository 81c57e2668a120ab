"""WebSocket transport for the shared session.

One text frame carries one envelope: requests ``{"id", "op", "args"}``,
responses ``{"id", "ok", "data"|"error"}``, events ``{"event", "data",
"initiator"}``.  Every request gets exactly one response.

Concurrency contract: connection I/O is concurrent, but all session
mutations flow through a single writer task, which hands the resulting
events to per-client ordered queues.  That single total order is what every
client observes.  A slow client whose queue overflows (1000 frames) is
disconnected rather than allowed to stall the rest.
"""

from __future__ import annotations

import asyncio
import json
import logging
import threading
from typing import Optional

from websockets.asyncio.server import serve
from websockets.exceptions import ConnectionClosed

from ..errors import WorkcellError
from .session import Session

logger = logging.getLogger(__name__)

MAX_CLIENT_QUEUE = 1000


class _Client:
    def __init__(self, connection):
        self.connection = connection
        self.name: Optional[str] = None
        self.queue: asyncio.Queue = asyncio.Queue(maxsize=MAX_CLIENT_QUEUE)


class CollabServer:
    def __init__(self, session: Session, host: str = "127.0.0.1", port: int = 8765):
        self.session = session
        self.host = host
        self.port = port
        self._clients: dict = {}  # connection -> _Client
        self._commands: Optional[asyncio.Queue] = None
        self._loop: Optional[asyncio.AbstractEventLoop] = None
        self._server = None
        self._stopping: Optional[asyncio.Event] = None
        session.emit_async = self._emit_threadsafe

    # -- lifecycle ---------------------------------------------------------

    async def run(self, ready: Optional[threading.Event] = None) -> None:
        self._loop = asyncio.get_running_loop()
        self._commands = asyncio.Queue()
        self._stopping = asyncio.Event()
        async with serve(self._handle_connection, self.host, self.port) as server:
            self._server = server
            self.port = server.sockets[0].getsockname()[1]
            writer = asyncio.create_task(self._writer())
            if ready is not None:
                ready.set()
            logger.info("listening on ws://%s:%d/ws", self.host, self.port)
            try:
                await self._stopping.wait()
            finally:
                writer.cancel()

    def start_background(self) -> threading.Thread:
        """Run the server on a daemon thread; returns once it accepts."""
        ready = threading.Event()
        thread = threading.Thread(target=lambda: asyncio.run(self.run(ready)), daemon=True)
        thread.start()
        if not ready.wait(10):
            raise WorkcellError("INSTANTIATION_FAILED", "server did not start")
        return thread

    def stop(self) -> None:
        if self._loop is not None and self._stopping is not None:
            self._loop.call_soon_threadsafe(self._stopping.set)

    @property
    def url(self) -> str:
        return f"ws://{self.host}:{self.port}/ws"

    # -- connection handling --------------------------------------------------

    async def _handle_connection(self, connection) -> None:
        client = _Client(connection)
        self._clients[connection] = client
        sender = asyncio.create_task(self._sender(client))
        try:
            async for raw in connection:
                try:
                    message = json.loads(raw)
                except json.JSONDecodeError:
                    await self._enqueue(client, {"id": None, "ok": False,
                                                 "error": {"code": "BAD_REQUEST",
                                                           "message": "malformed JSON"}})
                    continue
                await self._commands.put(("request", client, message))
        except ConnectionClosed:
            pass
        finally:
            await self._commands.put(("disconnect", client, None))
            sender.cancel()
            self._clients.pop(connection, None)

    async def _sender(self, client: _Client) -> None:
        try:
            while True:
                frame = await client.queue.get()
                await client.connection.send(json.dumps(frame))
        except (ConnectionClosed, asyncio.CancelledError):
            pass

    async def _enqueue(self, client: _Client, frame: dict) -> None:
        try:
            client.queue.put_nowait(frame)
        except asyncio.QueueFull:
            logger.warning("client %s too slow; disconnecting", client.name)
            await client.connection.close(code=1013, reason="event queue overflow")

    # -- the single writer -------------------------------------------------------

    async def _writer(self) -> None:
        while True:
            kind, client, message = await self._commands.get()
            if kind == "disconnect":
                if client.name is not None:
                    events = self.session.disconnect_user(client.name)
                    client.name = None
                    await self._broadcast_all(events, initiator=None)
                continue
            request_id = message.get("id")
            op_name = message.get("op", "")
            args = message.get("args") or {}
            try:
                if op_name == "register_user":
                    if client.name is not None:
                        raise WorkcellError("NAME_TAKEN", "connection already registered")
                    data, events = self.session.register_user(args.get("name", ""))
                    client.name = args.get("name")
                elif client.name is None:
                    raise WorkcellError("NOT_REGISTERED", "register_user first")
                else:
                    data, events = self.session.handle(client.name, op_name, args)
                response = {"id": request_id, "ok": True, "data": data}
            except WorkcellError as exc:
                error = {"code": exc.code, "message": exc.message}
                details = getattr(exc, "details", None)
                if details:
                    error["details"] = details
                response = {"id": request_id, "ok": False, "error": error}
                events = []
            except Exception as exc:  # defensive: a handler bug must not kill the loop
                logger.exception("handler %s failed", op_name)
                response = {
                    "id": request_id, "ok": False,
                    "error": {"code": "INTERNAL", "message": str(exc)},
                }
                events = []
            await self._enqueue(client, response)
            await self._broadcast_all(events, initiator=client.name)

    async def _broadcast_all(self, events: list, initiator: Optional[str]) -> None:
        for event_name, data in events:
            frame = {"event": event_name, "data": data, "initiator": initiator}
            for client in list(self._clients.values()):
                if client.name is not None:
                    await self._enqueue(client, frame)

    def _emit_threadsafe(self, event_name: str, data: dict) -> None:
        """Broadcast an event born outside the writer task (executor thread)."""
        if self._loop is None:
            return

        def _do():
            asyncio.ensure_future(self._broadcast_all([(event_name, data)], initiator=None))

        self._loop.call_soon_threadsafe(_do)
