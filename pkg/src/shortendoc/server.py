"""Minimal HTTP server exposing any ScoringBackend over the wire protocol
that RemoteBackend speaks. Intended for tests and local demos."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .backend import ScoringBackend
from .core import TokenSeq


class _Handler(BaseHTTPRequestHandler):
    server: "BackendServer"

    def log_message(self, fmt, *args):  # keep test output quiet
        pass

    def _reply(self, status: int, body: dict) -> None:
        data = json.dumps(body).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_POST(self):
        length = int(self.headers.get("Content-Length") or 0)
        try:
            payload = json.loads(self.rfile.read(length) or b"{}")
        except ValueError:
            self._reply(400, {"error": "invalid JSON"})
            return
        route = self.path.rstrip("/")
        try:
            body = self.server.dispatch(route, payload)
        except KeyError as exc:
            self._reply(400, {"error": f"missing field {exc}"})
            return
        except LookupError as exc:
            self._reply(404, {"error": str(exc)})
            return
        except Exception as exc:  # surfaced to the client as HTTP 500
            self._reply(500, {"error": str(exc)})
            return
        self._reply(200, body)


class BackendServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, backend: ScoringBackend, host: str = "127.0.0.1", port: int = 0):
        super().__init__((host, port), _Handler)
        self.backend = backend
        # Surfaces seen during tokenize, so id-only requests can be rebuilt.
        self._surfaces: dict[int, str] = {}
        self._lock = threading.Lock()

    @property
    def url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"

    def _seq(self, ids) -> TokenSeq:
        ids = [int(i) for i in ids]
        with self._lock:
            surfaces = tuple(self._surfaces.get(i, "") for i in ids)
        return TokenSeq(tuple(ids), surfaces)

    def dispatch(self, route: str, payload: dict) -> dict:
        b = self.backend
        if route == "/v1/tokenize":
            seq = b.tokenize(payload["text"])
            with self._lock:
                for i, s in zip(seq.ids, seq.surfaces):
                    self._surfaces.setdefault(i, s)
            return {"ids": list(seq.ids), "surfaces": list(seq.surfaces)}
        if route == "/v1/detokenize":
            return {"text": b.detokenize(self._seq(payload["ids"]))}
        if route == "/v1/logprobs":
            return {"logprobs": [float(x) for x in b.token_logprobs(self._seq(payload["ids"]))]}
        if route == "/v1/logits":
            return {"logits": [float(x) for x in b.next_token_logits(self._seq(payload["ids"]))]}
        if route == "/v1/embed":
            return {"vector": [float(x) for x in b.doc_embedding(self._seq(payload["ids"]))]}
        raise LookupError(f"unknown endpoint {route}")


def serve_in_thread(backend: ScoringBackend, host: str = "127.0.0.1",
                    port: int = 0) -> BackendServer:
    """Start a server on a daemon thread; call ``shutdown()`` when done."""
    srv = BackendServer(backend, host, port)
    threading.Thread(target=srv.serve_forever, daemon=True).start()
    return srv
