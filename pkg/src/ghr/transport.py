"""Message transports between named nodes.

DirectTransport routes calls in-process and is what the tests and the
simulation harness use; it can mark nodes as down to rehearse outages.
The socket pieces wrap the same dict-in, dict-out contract around a framed
TCP stream so a console or curl-style client can talk to a running cloud.
"""
from __future__ import annotations

import socket
import socketserver
import threading
from typing import Callable, Dict

from .errors import TransportError
from .wire import encode_frame, read_frame

Handler = Callable[[dict], dict]


class DirectTransport:
    def __init__(self):
        self._nodes: Dict[str, Handler] = {}
        self._down: set[str] = set()

    def register(self, name: str, handler: Handler) -> None:
        self._nodes[name] = handler

    def set_down(self, name: str, down: bool = True) -> None:
        if down:
            self._down.add(name)
        else:
            self._down.discard(name)

    def call(self, target: str, message: dict) -> dict:
        if target in self._down:
            raise TransportError("node-unreachable", f"{target} is down", retriable=True)
        handler = self._nodes.get(target)
        if handler is None:
            raise TransportError("no-such-node", target)
        return handler(message)


class _FrameHandler(socketserver.StreamRequestHandler):
    def handle(self):
        while True:
            try:
                message = read_frame(self.rfile)
            except TransportError:
                return
            if message is None:
                return
            response = self.server.app_handler(message)
            self.wfile.write(encode_frame(response))
            self.wfile.flush()


class FrameServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, host: str, port: int, handler: Handler):
        super().__init__((host, port), _FrameHandler)
        self.app_handler = handler

    @property
    def port(self) -> int:
        return self.server_address[1]

    def start_background(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread


class FrameClient:
    def __init__(self, host: str, port: int, timeout_s: float = 10.0):
        self._sock = socket.create_connection((host, port), timeout=timeout_s)
        self._rfile = self._sock.makefile("rb")
        self._lock = threading.Lock()

    def call(self, message: dict) -> dict:
        with self._lock:
            self._sock.sendall(encode_frame(message))
            response = read_frame(self._rfile)
        if response is None:
            raise TransportError("connection-closed", "server hung up", retriable=True)
        return response

    def close(self) -> None:
        try:
            self._rfile.close()
        finally:
            self._sock.close()
