"""Action dispatch: built-in instances in-process, remote ones over HTTP.

The remote wire contract is deliberately tiny so that a plugin can be any
process: ``GET /health`` for liveness, ``POST /actions/{name}`` with JSON
``{"args": [...]}`` returning ``{"results": [...]}`` (HTTP 200) or
``{"error": "..."}``.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Protocol

import httpx

from ..errors import WorkcellError
from ..model import ActionObject
from .logic import LogicInstance
from .manifest import ObjectTypeManifest
from .scara import SimScara

DEFAULT_TIMEOUT = 30.0


class ObjectInstance(Protocol):
    def call(self, action: str, args: list) -> list: ...

    def cancel(self) -> None: ...

    def close(self) -> None: ...


class NullInstance:
    """Passive device (e.g. a camera): present in the scene, no actions."""

    def __init__(self, parameters: dict | None = None, base=None):
        pass

    def call(self, action: str, args: list) -> list:
        raise WorkcellError("UNKNOWN_ACTION", f"passive object has no action {action!r}")

    def cancel(self) -> None:
        pass

    def close(self) -> None:
        pass


BUILTINS = {
    "sim_scara": SimScara,
    "logic": LogicInstance,
    "null": NullInstance,
}


class RemoteInstance:
    """Client side of the remote binding; health-checked at construction."""

    def __init__(self, base_url: str, timeout: float = DEFAULT_TIMEOUT):
        self.base_url = base_url.rstrip("/")
        self._client = httpx.Client(base_url=self.base_url, timeout=timeout)
        try:
            response = self._client.get("/health")
        except httpx.HTTPError as exc:
            self._client.close()
            raise WorkcellError("INSTANTIATION_FAILED", f"{self.base_url}: {exc}")
        if response.status_code != 200:
            self._client.close()
            raise WorkcellError(
                "INSTANTIATION_FAILED", f"{self.base_url}: health returned {response.status_code}"
            )

    def call(self, action: str, args: list) -> list:
        try:
            response = self._client.post(f"/actions/{action}", json={"args": args})
        except httpx.TimeoutException:
            raise WorkcellError("TIMEOUT", f"action {action!r} timed out")
        except httpx.HTTPError as exc:
            raise WorkcellError("ACTION_FAILED", f"{action}: {exc}")
        if response.status_code != 200:
            try:
                message = response.json().get("error", response.text)
            except ValueError:
                message = response.text
            raise WorkcellError("ACTION_FAILED", message)
        return response.json().get("results", [])

    def cancel(self) -> None:
        pass

    def close(self) -> None:
        self._client.close()


def instantiate(obj: ActionObject, manifest: ObjectTypeManifest,
                timeout: float = DEFAULT_TIMEOUT) -> ObjectInstance:
    """Create the live instance for an action object (builtin or remote)."""
    binding = manifest.binding
    if binding.builtin is not None:
        factory = BUILTINS.get(binding.builtin)
        if factory is None:
            raise WorkcellError("INSTANTIATION_FAILED", f"no builtin {binding.builtin!r}")
        params = {name: tv.value for name, tv in obj.parameters}
        return factory(params, obj.pose)
    return RemoteInstance(binding.remote, timeout)


def dispatch_action(instance: ObjectInstance, action: str, args: list) -> list:
    """Run one action call; device failures surface as ACTION_FAILED."""
    if instance is None:
        raise WorkcellError("NOT_ONLINE", f"no live instance for action {action!r}")
    try:
        return instance.call(action, list(args))
    except WorkcellError as exc:
        if exc.code in ("ACTION_FAILED", "TIMEOUT", "CANCELLED"):
            raise
        raise WorkcellError("ACTION_FAILED", exc.message)


class RemoteObjectServer:
    """Reference server exposing one instance over the remote wire contract.

    Used as a test fixture and as a template for real device services:
    ``RemoteObjectServer(LogicInstance(), port=0)`` serves the builtin Logic
    semantics byte-equivalently to in-process dispatch.
    """

    def __init__(self, instance: ObjectInstance, host: str = "127.0.0.1", port: int = 0):
        self.instance = instance
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, fmt, *args):
                pass

            def _send(self, status: int, payload: dict) -> None:
                body = json.dumps(payload).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def do_GET(self):
                if self.path == "/health":
                    self._send(200, {"status": "ok"})
                else:
                    self._send(404, {"error": "not found"})

            def do_POST(self):
                if not self.path.startswith("/actions/"):
                    self._send(404, {"error": "not found"})
                    return
                action = self.path[len("/actions/"):]
                length = int(self.headers.get("Content-Length", 0))
                try:
                    payload = json.loads(self.rfile.read(length) or b"{}")
                    results = outer.instance.call(action, payload.get("args", []))
                    self._send(200, {"results": results})
                except WorkcellError as exc:
                    self._send(500, {"error": exc.message})
                except Exception as exc:  # defensive: keep the server alive
                    self._send(500, {"error": str(exc)})

        self._server = ThreadingHTTPServer((host, port), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "RemoteObjectServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
