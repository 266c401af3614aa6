"""Line-oriented ASCII framing: encoder, single-line parser, stream parser.

Frames are CRLF-terminated, at most 256 bytes including the terminator,
and tokenized by single spaces. Command verbs match ``[A-Z*][A-Z0-9:*]*``
(the leading ``*`` covers IEEE-488-style common commands such as *IDN) with
an optional trailing ``?`` marking a query. Responses are either ``OK``
(optionally with payload), ``ERR <3-digit code> <message>``, or a bare
payload line answering a query.

Direction matters: ``parse_line`` takes a ``mode`` of ``"command"``,
``"response"`` or ``"auto"``. Auto mode classifies by shape and is only a
convenience; sessions always know which side of the link they are on. A
bare payload whose first token happens to match the verb pattern (no such
payload is produced by the shipped grammars) would be misread in auto mode.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

from .errors import EncodeError, FrameTooLongError, ProtocolError

MAX_FRAME_BYTES = 256
VERB_RE = re.compile(r"^[A-Z*][A-Z0-9:*]*$")
TOKEN_RE = re.compile(r"^[\x21-\x7e]+$")  # printable ASCII, no spaces


@dataclass(frozen=True, slots=True)
class CommandFrame:
    verb: str
    args: tuple[str, ...] = ()
    is_query: bool = False

    @property
    def key(self) -> str:
        """Grammar lookup key: verb plus '?' for queries."""
        return self.verb + ("?" if self.is_query else "")


@dataclass(frozen=True, slots=True)
class ResponseFrame:
    status: str  # "OK" | "ERR"
    code: int | None = None  # 3-digit code, ERR only
    payload: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return self.status == "OK"

    def text(self) -> str:
        return " ".join(self.payload)


Frame = Union[CommandFrame, ResponseFrame]


def _check_token(token: str, what: str) -> None:
    if not TOKEN_RE.match(token):
        raise EncodeError(f"invalid {what} token {token!r}")


def encode_command(frame: CommandFrame) -> bytes:
    if frame.verb.endswith("?"):
        raise EncodeError("verb must not embed '?'; set is_query instead")
    if not VERB_RE.match(frame.verb):
        raise EncodeError(f"invalid verb {frame.verb!r}")
    for arg in frame.args:
        _check_token(arg, "argument")
    head = frame.verb + ("?" if frame.is_query else "")
    line = " ".join((head, *frame.args)) + "\r\n"
    data = line.encode("ascii")
    if len(data) > MAX_FRAME_BYTES:
        raise EncodeError(f"frame is {len(data)} bytes; limit is {MAX_FRAME_BYTES}")
    return data


def encode_response(frame: ResponseFrame) -> bytes:
    if frame.status == "ERR":
        if frame.code is None or not 100 <= frame.code <= 999:
            raise EncodeError(f"ERR response needs a 3-digit code, got {frame.code!r}")
        tokens = ["ERR", f"{frame.code:03d}", *frame.payload]
    elif frame.status == "OK":
        # Query answers go on the wire as the bare payload; a plain ack is "OK".
        tokens = list(frame.payload) if frame.payload else ["OK"]
    else:
        raise EncodeError(f"unknown response status {frame.status!r}")
    for tok in tokens:
        _check_token(tok, "payload")
    data = (" ".join(tokens) + "\r\n").encode("ascii")
    if len(data) > MAX_FRAME_BYTES:
        raise EncodeError(f"frame is {len(data)} bytes; limit is {MAX_FRAME_BYTES}")
    return data


def _tokenize(body: str, offset: int | None) -> list[str]:
    tokens = body.split(" ")
    if any(tok == "" for tok in tokens):
        raise ProtocolError("empty token (leading, trailing or doubled space)", offset=offset)
    for tok in tokens:
        if not TOKEN_RE.match(tok):
            raise ProtocolError(f"invalid token {tok!r}", offset=offset)
    return tokens


def _parse_command(tokens: list[str], offset: int | None) -> CommandFrame:
    head = tokens[0]
    is_query = head.endswith("?")
    verb = head[:-1] if is_query else head
    if not VERB_RE.match(verb):
        raise ProtocolError(f"invalid verb {head!r}", offset=offset)
    return CommandFrame(verb=verb, args=tuple(tokens[1:]), is_query=is_query)


def _parse_response(tokens: list[str], offset: int | None) -> ResponseFrame:
    if tokens[0] == "ERR":
        if len(tokens) < 2 or not re.match(r"^\d{3}$", tokens[1]):
            raise ProtocolError("ERR response without a 3-digit code", offset=offset)
        return ResponseFrame(status="ERR", code=int(tokens[1]), payload=tuple(tokens[2:]))
    if tokens[0] == "OK":
        return ResponseFrame(status="OK", payload=tuple(tokens[1:]))
    return ResponseFrame(status="OK", payload=tuple(tokens))


def parse_line(line: bytes, mode: str = "auto", _offset: int | None = None) -> Frame:
    """Parse one complete CRLF-terminated frame."""
    if not line.endswith(b"\r\n"):
        raise ProtocolError("frame is not CRLF-terminated", offset=_offset)
    if len(line) > MAX_FRAME_BYTES:
        raise FrameTooLongError(
            f"frame is {len(line)} bytes; limit is {MAX_FRAME_BYTES}", offset=_offset
        )
    body_bytes = line[:-2]
    if not body_bytes:
        raise ProtocolError("empty frame", offset=_offset)
    try:
        body = body_bytes.decode("ascii")
    except UnicodeDecodeError as exc:
        pos = (_offset or 0) + exc.start
        raise ProtocolError(f"non-ASCII byte at offset {pos}", offset=pos) from None
    tokens = _tokenize(body, _offset)
    if mode == "command":
        return _parse_command(tokens, _offset)
    if mode == "response":
        return _parse_response(tokens, _offset)
    if mode == "auto":
        if tokens[0] in ("OK", "ERR"):
            return _parse_response(tokens, _offset)
        head = tokens[0][:-1] if tokens[0].endswith("?") else tokens[0]
        if VERB_RE.match(head):
            return _parse_command(tokens, _offset)
        return _parse_response(tokens, _offset)
    raise ValueError(f"unknown parse mode {mode!r}")


class StreamParser:
    """Incremental frame extractor over an arbitrary byte chunking.

    ``feed`` returns a list of parsed frames interleaved with ProtocolError
    instances for malformed lines (the parser resynchronizes at the next
    CRLF and keeps going, so fuzzed input can never crash it). Bytes after
    the last CRLF stay buffered for the next call.
    """

    def __init__(self, mode: str = "auto", max_frame: int = MAX_FRAME_BYTES):
        self._mode = mode
        self._max = max_frame
        self._buf = bytearray()
        self._offset = 0  # absolute offset of _buf[0] in the stream
        self._resync = False

    def feed(self, data: bytes) -> list[Frame | ProtocolError]:
        self._buf += data
        out: list[Frame | ProtocolError] = []
        while True:
            idx = self._buf.find(b"\r\n")
            if idx < 0:
                if self._resync:
                    # Everything buffered belongs to the oversize line.
                    self._offset += len(self._buf)
                    self._buf.clear()
                elif len(self._buf) > self._max:
                    out.append(FrameTooLongError(
                        f"no CRLF within {self._max} bytes of offset {self._offset}",
                        offset=self._offset,
                    ))
                    self._resync = True
                    self._offset += len(self._buf)
                    self._buf.clear()
                break
            line_start = self._offset
            line = bytes(self._buf[: idx + 2])
            del self._buf[: idx + 2]
            self._offset = line_start + idx + 2
            if self._resync:
                self._resync = False
                continue
            try:
                out.append(parse_line(line, mode=self._mode, _offset=line_start))
            except ProtocolError as exc:
                out.append(exc)
        return out

    @property
    def pending(self) -> bytes:
        """Unconsumed bytes awaiting their CRLF."""
        return bytes(self._buf)
