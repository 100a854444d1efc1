"""A local chat-completion endpoint for integration tests.

Modes: ``valid`` answers every prompt with well-formed random content,
``error`` returns HTTP 500, ``garbage`` returns unparsable text, and
``script`` replays a list of reply strings in order (HTTP 500 once exhausted).
"""

from __future__ import annotations

import json
import random
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

MODES = ("valid", "error", "garbage", "script")


def _valid_reply(prompt: str, rng: random.Random) -> str:
    if "promising starting points" in prompt:
        count = int(re.search(r"Suggest (\d+) promising", prompt).group(1))
        dim = int(re.search(r"(\d+)-dimensional vectors", prompt).group(1))
        return json.dumps([[round(rng.random(), 6) for _ in range(dim)] for _ in range(count)])
    if "Predict the function value" in prompt:
        return repr(round(rng.uniform(-1.0, 1.0), 6))
    dim = int(re.search(r"single (\d+)-dimensional", prompt).group(1))
    return json.dumps([round(rng.random(), 6) for _ in range(dim)])


class StubChatServer:
    """Threaded stub server; use as a context manager or call start/stop."""

    def __init__(self, mode: str = "valid", script: list[str] | None = None, host: str = "127.0.0.1", port: int = 0, seed: int = 0):
        if mode not in MODES:
            raise ValueError(f"unknown stub mode {mode!r}")
        self.mode = mode
        self.script = list(script or [])
        self.rng = random.Random(seed)
        self.requests: list[dict] = []
        self._lock = threading.Lock()
        self._httpd = ThreadingHTTPServer((host, port), self._handler())
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}/v1/chat/completions"

    def _reply(self, payload: dict) -> tuple[int, str]:
        with self._lock:
            self.requests.append(payload)
            if self.mode == "error":
                return 500, ""
            if self.mode == "garbage":
                return 200, "not json"
            if self.mode == "script":
                if not self.script:
                    return 500, ""
                return 200, self.script.pop(0)
            prompt = payload["messages"][-1]["content"]
            return 200, _valid_reply(prompt, self.rng)

    def _handler(self):
        server = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                try:
                    payload = json.loads(self.rfile.read(length) or b"{}")
                    status, content = server._reply(payload)
                except (ValueError, KeyError, IndexError, AttributeError):
                    status, content = 400, ""
                if status != 200:
                    self.send_response(status)
                    self.end_headers()
                    return
                body = json.dumps(
                    {"choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]}
                ).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def log_message(self, format, *args):
                pass

        return Handler

    def start(self) -> "StubChatServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()

    def serve_forever(self) -> None:
        self._httpd.serve_forever()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()
