"""Transport-agnostic instrument sessions.

A session owns one endpoint and runs a strict lockstep: send one command,
read exactly one response line. Two transports exist: TCP sockets (real
wire, or a bench served in another process) and in-process loopback onto a
SimBench sharing the engine's virtual clock (the deterministic path).

Endpoint addresses: ``host:port`` for TCP, ``loop`` for loopback (requires
a co-launched bench).
"""

from __future__ import annotations

import socket
from dataclasses import dataclass
from typing import Optional, Protocol

from .errors import ProtocolError, SessionBusyError, TransportError
from .protocol import (
    CommandFrame,
    ResponseFrame,
    StreamParser,
    encode_command,
)

KIND_ALIASES = {
    "picoammeter": "picoammeter", "pico": "picoammeter",
    "monochromator": "monochromator", "mono": "monochromator",
    "powermeter": "powermeter", "pm": "powermeter",
    "stage": "stage",
}


@dataclass(frozen=True)
class Endpoint:
    kind: str
    address: str
    timeout_ms: int = 5000

    def __post_init__(self):
        if self.timeout_ms <= 0:
            raise ValueError("endpoint timeout must be > 0")


class Transport(Protocol):
    def transact(self, line: bytes) -> tuple[float, bytes]:
        """Send one frame, return (timestamp, raw response line)."""

    def close(self) -> None: ...


class LoopTransport:
    """Direct in-process call into a bench endpoint; timestamps are the
    bench's own command stamps, so both sides share one clock."""

    def __init__(self, bench, kind: str):
        self.bench = bench
        self.kind = kind

    def transact(self, line: bytes) -> tuple[float, bytes]:
        return self.bench.transact(self.kind, line)

    def close(self) -> None:
        pass


class TcpTransport:
    def __init__(self, address: str, timeout_ms: int, clock):
        host, _, port = address.rpartition(":")
        try:
            self._sock = socket.create_connection((host, int(port)),
                                                  timeout=timeout_ms / 1000.0)
        except (OSError, ValueError) as exc:
            raise TransportError(f"cannot connect to {address}: {exc}") from exc
        self._sock.settimeout(timeout_ms / 1000.0)
        self._clock = clock
        self._buf = bytearray()

    def transact(self, line: bytes) -> tuple[float, bytes]:
        try:
            self._sock.sendall(line)
            while True:
                idx = self._buf.find(b"\r\n")
                if idx >= 0:
                    reply = bytes(self._buf[: idx + 2])
                    del self._buf[: idx + 2]
                    # stamp at completion of the exchange
                    return self._clock.now(), reply
                data = self._sock.recv(4096)
                if not data:
                    raise TransportError("connection closed by bench")
                self._buf += data
        except socket.timeout as exc:
            raise TransportError(f"timeout waiting for response: {exc}") from exc
        except OSError as exc:
            raise TransportError(f"socket error: {exc}") from exc

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


class Session:
    """Single-writer lockstep session over a transport."""

    def __init__(self, endpoint: Endpoint, transport: Transport):
        self.endpoint = endpoint
        self._transport = transport
        self._busy = False

    def query(self, frame: CommandFrame) -> tuple[float, ResponseFrame]:
        if self._busy:
            raise SessionBusyError(
                f"{self.endpoint.kind}: a command is already outstanding")
        self._busy = True
        try:
            t, raw = self._transport.transact(encode_command(frame))
        finally:
            self._busy = False
        parser = StreamParser(mode="response")
        frames = parser.feed(raw)
        if len(frames) != 1 or isinstance(frames[0], ProtocolError):
            raise ProtocolError(
                f"{self.endpoint.kind}: bad response line {raw!r}")
        return t, frames[0]

    def close(self) -> None:
        self._transport.close()


def open_sessions(endpoints: dict[str, str], clock, bench=None,
                  timeout_ms: int = 5000) -> dict[str, Session]:
    """Open one session per instrument kind from an address map."""
    sessions: dict[str, Session] = {}
    try:
        for key, address in endpoints.items():
            kind = KIND_ALIASES.get(key)
            if kind is None:
                raise TransportError(f"unknown endpoint kind {key!r}")
            endpoint = Endpoint(kind=kind, address=address, timeout_ms=timeout_ms)
            if address == "loop":
                if bench is None:
                    raise TransportError(
                        f"{kind}: loopback endpoint requires a co-launched bench")
                transport: Transport = LoopTransport(bench, kind)
            else:
                transport = TcpTransport(address, timeout_ms, clock)
            sessions[kind] = Session(endpoint, transport)
    except Exception:
        for session in sessions.values():
            session.close()
        raise
    missing = {"picoammeter", "monochromator", "powermeter", "stage"} - set(sessions)
    if missing:
        for session in sessions.values():
            session.close()
        raise TransportError(f"missing endpoints for: {sorted(missing)}")
    return sessions
