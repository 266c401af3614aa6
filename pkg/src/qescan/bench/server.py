"""TCP front end for the bench: one listening endpoint per instrument."""

from __future__ import annotations

import socket
import threading
from typing import Optional

from ..errors import BenchAddressError
from .config import BenchConfig
from .core import SimBench

ENDPOINT_ORDER = ("picoammeter", "monochromator", "powermeter", "stage")


class BenchServer:
    """Serves the four instrument grammars over TCP.

    One connection is handled at a time per endpoint (a session owns its
    instrument); further clients queue on the listen backlog. Commands are
    applied in arrival order under the bench's serialization lock.
    """

    def __init__(self, bench: SimBench, host: str = "127.0.0.1",
                 base_port: int = 0,
                 ports: Optional[dict[str, int]] = None):
        self.bench = bench
        self.host = host
        self._listeners: dict[str, socket.socket] = {}
        self._threads: list[threading.Thread] = []
        self._closing = threading.Event()
        self.addresses: dict[str, str] = {}
        for i, kind in enumerate(ENDPOINT_ORDER):
            port = ports[kind] if ports else (base_port + i if base_port else 0)
            sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            try:
                sock.bind((host, port))
            except OSError as exc:
                sock.close()
                self.close()
                raise BenchAddressError(f"cannot bind {kind} endpoint on "
                                        f"{host}:{port}: {exc}") from exc
            sock.listen(4)
            # closing a socket does not wake a blocked accept(); poll instead
            sock.settimeout(0.25)
            self._listeners[kind] = sock
            self.addresses[kind] = f"{host}:{sock.getsockname()[1]}"

    def start(self) -> "BenchServer":
        for kind, sock in self._listeners.items():
            thread = threading.Thread(target=self._serve_endpoint,
                                      args=(kind, sock),
                                      name=f"bench-{kind}", daemon=True)
            thread.start()
            self._threads.append(thread)
        return self

    def _serve_endpoint(self, kind: str, listener: socket.socket) -> None:
        while not self._closing.is_set():
            try:
                conn, _ = listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            with conn:
                self._serve_connection(kind, conn)

    def _serve_connection(self, kind: str, conn: socket.socket) -> None:
        buf = bytearray()
        conn.settimeout(0.5)
        while not self._closing.is_set():
            try:
                data = conn.recv(4096)
            except socket.timeout:
                continue
            except OSError:
                return
            if not data:
                return
            buf += data
            while True:
                idx = buf.find(b"\r\n")
                if idx < 0:
                    break
                line = bytes(buf[: idx + 2])
                del buf[: idx + 2]
                _, reply = self.bench.transact(kind, line)
                try:
                    conn.sendall(reply)
                except OSError:
                    return

    def close(self) -> None:
        self._closing.set()
        for sock in self._listeners.values():
            try:
                sock.close()
            except OSError:
                pass
        for thread in self._threads:
            thread.join(timeout=2.0)


def serve(config: BenchConfig, host: str = "127.0.0.1", base_port: int = 0,
          ports: Optional[dict[str, int]] = None) -> BenchServer:
    """Build a bench from config and start serving its four endpoints."""
    bench = SimBench(config)
    return BenchServer(bench, host=host, base_port=base_port, ports=ports).start()
