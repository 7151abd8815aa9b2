"""Message vocabulary and transports between client and server.

Frame layout: a 4-byte big-endian length (of the body), then the body:
1-byte variant tag followed by fixed-width big-endian fields (round index
and vertex are 4 bytes, angle indices and bits are 1 byte).

    tag 1  PrepQubit           j, vertex, prep kind, prep value   (body 11)
    tag 2  EntangleDone        j                                  (body 5)
    tag 3  MeasureInstruction  j, vertex, delta                   (body 10)
    tag 4  Outcome             j, vertex, bit                     (body 10)
    tag 5  Redo                j                                  (body 5)
    tag 6  Ok                  -                                  (body 1)
    tag 7  Abort               -                                  (body 1)

PrepQubit carries the preparation classically because the quantum channel
is simulated; on the API side it travels as an opaque handle that only the
register simulator opens, so server logic never sees the secret fields.
"""

from __future__ import annotations

import socket
import struct
from collections import deque
from dataclasses import dataclass
from typing import NamedTuple

from .statevector import PrepSpec

__all__ = [
    "FramingError",
    "VersionError",
    "QubitHandle",
    "PrepQubit",
    "EntangleDone",
    "MeasureInstruction",
    "Outcome",
    "Redo",
    "Ok",
    "Abort",
    "MESSAGE_TYPES",
    "encode",
    "decode",
    "SessionConfig",
    "InProcessPair",
    "SocketTransport",
    "Listener",
    "listen_one",
    "connect",
]


class FramingError(ValueError):
    """Truncated frame, trailing bytes, or malformed field."""


class VersionError(ValueError):
    """Unknown variant tag."""


class QubitHandle:
    """Opaque stand-in for a transmitted qubit.

    Server-side code must treat this as a black box and pass it to its
    register simulator; only the simulator reads the preparation.
    """

    __slots__ = ("_spec",)

    def __init__(self, spec: PrepSpec):
        self._spec = spec

    def reveal_to_simulator(self) -> PrepSpec:
        return self._spec

    def __eq__(self, other):
        return isinstance(other, QubitHandle) and other._spec == self._spec

    def __repr__(self):
        return "QubitHandle(<sealed>)"


class PrepQubit(NamedTuple):
    round_index: int
    vertex: int
    qubit: QubitHandle


class EntangleDone(NamedTuple):
    round_index: int


class MeasureInstruction(NamedTuple):
    round_index: int
    vertex: int
    delta: int


class Outcome(NamedTuple):
    round_index: int
    vertex: int
    bit: int


class Redo(NamedTuple):
    round_index: int


class Ok(NamedTuple):
    pass


class Abort(NamedTuple):
    pass


MESSAGE_TYPES = (PrepQubit, EntangleDone, MeasureInstruction, Outcome, Redo, Ok, Abort)

_TAG = {PrepQubit: 1, EntangleDone: 2, MeasureInstruction: 3, Outcome: 4,
        Redo: 5, Ok: 6, Abort: 7}
_PREP_KIND = {"plus_theta": 0, "dummy": 1}
_PREP_KIND_BACK = {v: k for k, v in _PREP_KIND.items()}


def encode(msg) -> bytes:
    """Serialize a message into one length-prefixed frame."""
    kind = type(msg)
    tag = _TAG.get(kind)
    if tag is None:
        raise FramingError(f"cannot encode {msg!r}")
    if kind is PrepQubit:
        spec = msg.qubit.reveal_to_simulator()
        body = struct.pack(">BIIBB", tag, msg.round_index, msg.vertex,
                           _PREP_KIND[spec.kind], spec.value)
    elif kind in (EntangleDone, Redo):
        body = struct.pack(">BI", tag, msg.round_index)
    elif kind is MeasureInstruction:
        body = struct.pack(">BIIB", tag, msg.round_index, msg.vertex, msg.delta)
    elif kind is Outcome:
        body = struct.pack(">BIIB", tag, msg.round_index, msg.vertex, msg.bit)
    else:  # Ok / Abort
        body = struct.pack(">B", tag)
    return struct.pack(">I", len(body)) + body


def decode(frame: bytes):
    """Parse one complete frame; strict about length and trailing bytes."""
    if len(frame) < 5:
        raise FramingError("frame shorter than the minimal header")
    (length,) = struct.unpack(">I", frame[:4])
    body = frame[4:]
    if len(body) != length:
        raise FramingError(f"frame announces {length} body bytes, got {len(body)}")
    tag = body[0]
    try:
        if tag == 1:
            _, j, v, kind, value = struct.unpack(">BIIBB", body)
            if kind not in _PREP_KIND_BACK:
                raise FramingError(f"unknown preparation kind {kind}")
            return PrepQubit(j, v, QubitHandle(PrepSpec(_PREP_KIND_BACK[kind], value)))
        if tag == 2:
            _, j = struct.unpack(">BI", body)
            return EntangleDone(j)
        if tag == 3:
            _, j, v, delta = struct.unpack(">BIIB", body)
            if delta > 7:
                raise FramingError(f"angle index {delta} outside 0..7")
            return MeasureInstruction(j, v, delta)
        if tag == 4:
            _, j, v, bit = struct.unpack(">BIIB", body)
            if bit > 1:
                raise FramingError(f"outcome {bit} is not a bit")
            return Outcome(j, v, bit)
        if tag == 5:
            _, j = struct.unpack(">BI", body)
            return Redo(j)
        if tag == 6:
            if length != 1:
                raise FramingError("Ok carries no fields")
            return Ok()
        if tag == 7:
            if length != 1:
                raise FramingError("Abort carries no fields")
            return Abort()
    except struct.error as exc:
        raise FramingError(f"malformed body for tag {tag}") from exc
    raise VersionError(f"unknown message tag {tag}")


@dataclass(frozen=True)
class SessionConfig:
    """Identity and transport selection for one protocol session."""

    session_id: str
    transport: str = "in_process"  # "in_process" | "socket"
    address: str = ""
    port: int = 0


@dataclass
class Endpoint:
    """One side of an in-process channel: paired FIFO queues."""

    outbox: deque
    inbox: deque
    capture: list | None = None

    def send(self, msg) -> None:
        if self.capture is not None:
            self.capture.append(encode(msg))
        self.outbox.append(msg)

    def recv(self):
        if not self.inbox:
            raise FramingError("recv on an empty in-process channel")
        return self.inbox.popleft()

    def pending(self) -> bool:
        return bool(self.inbox)


class InProcessPair:
    """Ordered queue pair with the same semantics as the socket transport."""

    def __init__(self, capture_client: bool = False, capture_server: bool = False):
        a, b = deque(), deque()
        self.client = Endpoint(outbox=a, inbox=b,
                               capture=[] if capture_client else None)
        self.server = Endpoint(outbox=b, inbox=a,
                               capture=[] if capture_server else None)


class SocketTransport:
    """Blocking TCP endpoint carrying one frame per message."""

    def __init__(self, sock: socket.socket, capture: bool = False):
        self._sock = sock
        self.capture = [] if capture else None

    def send(self, msg) -> None:
        frame = encode(msg)
        if self.capture is not None:
            self.capture.append(frame)
        self._sock.sendall(frame)

    def _read_exact(self, count: int) -> bytes:
        chunks = []
        while count:
            chunk = self._sock.recv(count)
            if not chunk:
                raise FramingError("connection closed mid-frame")
            chunks.append(chunk)
            count -= len(chunk)
        return b"".join(chunks)

    def recv(self):
        header = self._read_exact(4)
        (length,) = struct.unpack(">I", header)
        body = self._read_exact(length)
        return decode(header + body)

    def close(self) -> None:
        self._sock.close()


class Listener:
    """Bound listening socket; `accept` yields one session transport."""

    def __init__(self, host: str, port: int):
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen(1)
        self.port = self._sock.getsockname()[1]

    def accept(self, capture: bool = False) -> "SocketTransport":
        conn, _ = self._sock.accept()
        return SocketTransport(conn, capture=capture)

    def close(self) -> None:
        self._sock.close()


def listen_one(host: str, port: int, capture: bool = False) -> "SocketTransport":
    """Block until a single connection arrives and wrap it."""
    listener = Listener(host, port)
    try:
        return listener.accept(capture=capture)
    finally:
        listener.close()


def connect(host: str, port: int) -> SocketTransport:
    sock = socket.create_connection((host, port))
    return SocketTransport(sock)
