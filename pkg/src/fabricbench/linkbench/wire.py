"""Framed binary messages over stream sockets.

Header layout (big-endian, 17 bytes)::

    magic    4 bytes  b"ZHB1"
    msg_type 1 byte   HELLO=1 PLAN=2 START=3 PING=4 PONG=5 RESULT=6 BYE=7
    seq      8 bytes  unsigned
    length   4 bytes  unsigned payload length

Control payloads (HELLO, PLAN, START, RESULT) are UTF-8 JSON objects;
PING/PONG payloads are opaque bytes.
"""

from __future__ import annotations

import enum
import json
import socket
import struct
import threading
from dataclasses import dataclass
from typing import Callable

from fabricbench.errors import ProtocolError

MAGIC = b"ZHB1"
HEADER = struct.Struct(">4sBQI")
HEADER_SIZE = HEADER.size
MAX_PAYLOAD = 1 << 30


class MsgType(enum.IntEnum):
    HELLO = 1
    PLAN = 2
    START = 3
    PING = 4
    PONG = 5
    RESULT = 6
    BYE = 7


@dataclass(frozen=True)
class WireMessage:
    msg_type: MsgType
    seq: int
    payload: bytes = b""

    def encode(self) -> bytes:
        return encode_header(self.msg_type, self.seq, len(self.payload)) + bytes(self.payload)

    def json(self) -> dict:
        try:
            obj = json.loads(bytes(self.payload).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ProtocolError(f"{self.msg_type.name} payload is not valid JSON: {exc}") from None
        if not isinstance(obj, dict):
            raise ProtocolError(f"{self.msg_type.name} payload must be a JSON object")
        return obj


def encode_header(msg_type: int, seq: int, length: int) -> bytes:
    if not 0 <= seq < 1 << 64:
        raise ValueError("seq out of range")
    if not 0 <= length <= MAX_PAYLOAD:
        raise ValueError("payload too large")
    return HEADER.pack(MAGIC, int(msg_type), seq, length)


def decode_header(data: bytes) -> tuple[MsgType, int, int]:
    magic, raw_type, seq, length = HEADER.unpack(data)
    if magic != MAGIC:
        raise ProtocolError(f"bad magic {magic!r}")
    try:
        msg_type = MsgType(raw_type)
    except ValueError:
        raise ProtocolError(f"unknown message type {raw_type}") from None
    if length > MAX_PAYLOAD:
        raise ProtocolError(f"payload length {length} exceeds limit")
    return msg_type, seq, length


def parse_address(addr: str) -> tuple[str, int]:
    host, sep, port = addr.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"address must be host:port, got {addr!r}")
    return host.strip("[]") or "127.0.0.1", int(port)


class Connection:
    """A socket carrying WireMessages, with byte counters.

    Sends are serialised by a lock so several threads may share one
    connection as a result sink.  ``throttle(nbytes)`` is called before each
    send; tests use it to impose rate caps.
    """

    def __init__(self, sock: socket.socket, peer: str = "", throttle: Callable[[int], None] | None = None):
        self.sock = sock
        self.peer = peer
        self.throttle = throttle
        self.bytes_sent = 0
        self.bytes_received = 0
        self._send_lock = threading.Lock()
        try:
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        except OSError:
            pass

    @classmethod
    def connect(cls, address: str, timeout: float | None = None, **kwargs) -> "Connection":
        sock = socket.create_connection(parse_address(address), timeout=timeout)
        return cls(sock, peer=address, **kwargs)

    def settimeout(self, timeout: float | None) -> None:
        self.sock.settimeout(timeout)

    def send(self, msg_type: MsgType, seq: int = 0, payload: bytes | bytearray | memoryview = b"") -> None:
        header = encode_header(msg_type, seq, len(payload))
        with self._send_lock:
            if self.throttle is not None:
                self.throttle(HEADER_SIZE + len(payload))
            if len(payload) <= 65536:
                self.sock.sendall(header + bytes(payload))
            else:
                self.sock.sendall(header)
                self.sock.sendall(payload)
            self.bytes_sent += HEADER_SIZE + len(payload)

    def send_json(self, msg_type: MsgType, obj: dict, seq: int = 0) -> None:
        self.send(msg_type, seq, json.dumps(obj, separators=(",", ":")).encode("utf-8"))

    def _recv_exact(self, n: int, *, at_boundary: bool = False) -> bytearray | None:
        buf = bytearray(n)
        view = memoryview(buf)
        got = 0
        while got < n:
            k = self.sock.recv_into(view[got:])
            if k == 0:
                if at_boundary and got == 0:
                    return None
                raise ConnectionError(f"short read from {self.peer or 'peer'}: {got} of {n} bytes")
            got += k
        self.bytes_received += n
        return buf

    def recv(self) -> WireMessage | None:
        """Next message, or None if the peer closed cleanly between messages."""
        raw = self._recv_exact(HEADER_SIZE, at_boundary=True)
        if raw is None:
            return None
        msg_type, seq, length = decode_header(bytes(raw))
        payload = self._recv_exact(length) if length else bytearray()
        return WireMessage(msg_type, seq, payload)

    def close(self) -> None:
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()

    def __enter__(self) -> "Connection":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
