"""Ping-pong measurement (initiator side) and the echoing reflector."""

from __future__ import annotations

import statistics
import time
from dataclasses import asdict, dataclass, field

from fabricbench.errors import ProtocolError, ValidationError
from fabricbench.linkbench.wire import Connection, MsgType

WARMUP = 3


@dataclass
class PairResult:
    src: str
    dst: str
    median_rtt: float  # s
    bandwidth: float  # GB/s, msg_size / (median_rtt / 2)
    samples: list[float] = field(default_factory=list)
    msg_size: int = 0
    bytes_sent: int = 0
    bytes_received: int = 0

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValidationError("bandwidth must be > 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PairResult":
        return cls(
            src=str(d["src"]),
            dst=str(d["dst"]),
            median_rtt=float(d["median_rtt"]),
            bandwidth=float(d["bandwidth"]),
            samples=[float(x) for x in d.get("samples", [])],
            msg_size=int(d.get("msg_size", 0)),
            bytes_sent=int(d.get("bytes_sent", 0)),
            bytes_received=int(d.get("bytes_received", 0)),
        )


def bandwidth_from_rtt(msg_size: int, rtt: float) -> float:
    """One-way payload rate in GB/s."""
    return msg_size / (rtt / 2) / 1e9


def summarize_samples(src: str, dst: str, msg_size: int, samples: list[float], **counters) -> PairResult:
    rtt = statistics.median(samples)
    return PairResult(src, dst, rtt, bandwidth_from_rtt(msg_size, rtt), list(samples), msg_size, **counters)


def pingpong(
    conn: Connection,
    msg_size: int,
    repetitions: int = 16,
    warmup: int = WARMUP,
    src: str = "",
    dst: str = "",
) -> PairResult:
    """Send ``repetitions`` PINGs, timing each PONG; median over post-warm-up samples."""
    if msg_size < 0:
        raise ValidationError("msg_size must be >= 0")
    if repetitions <= warmup:
        raise ValidationError("repetitions must exceed the warm-up count")
    payload = bytes(msg_size)
    sent0, recv0 = conn.bytes_sent, conn.bytes_received
    samples = []
    for seq in range(repetitions):
        t0 = time.perf_counter()
        conn.send(MsgType.PING, seq, payload)
        reply = conn.recv()
        rtt = time.perf_counter() - t0
        if reply is None:
            raise ConnectionError(f"peer {conn.peer or dst} closed during ping-pong")
        if reply.msg_type != MsgType.PONG:
            raise ProtocolError(f"expected PONG, got {reply.msg_type.name}", dst or None)
        if reply.seq != seq:
            raise ProtocolError(f"PONG seq {reply.seq} does not match PING seq {seq}", dst or None)
        if len(reply.payload) != msg_size:
            raise ProtocolError(f"PONG carried {len(reply.payload)} bytes, expected {msg_size}", dst or None)
        if seq >= warmup:
            samples.append(rtt)
    return summarize_samples(
        src, dst, msg_size, samples,
        bytes_sent=conn.bytes_sent - sent0,
        bytes_received=conn.bytes_received - recv0,
    )


def reflect(conn: Connection) -> int:
    """Echo every PING back as a PONG with the same seq and payload; returns PINGs served."""
    served = 0
    while True:
        msg = conn.recv()
        if msg is None or msg.msg_type == MsgType.BYE:
            return served
        if msg.msg_type != MsgType.PING:
            raise ProtocolError(f"reflector expected PING, got {msg.msg_type.name}")
        conn.send(MsgType.PONG, msg.seq, msg.payload)
        served += 1
