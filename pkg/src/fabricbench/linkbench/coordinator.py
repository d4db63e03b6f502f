"""Coordinator: registers agents, schedules pairs, assembles the bandwidth matrix."""

from __future__ import annotations

import logging
import queue
import socket
import threading
import time
from dataclasses import dataclass, field
from typing import Callable

from fabricbench.errors import ProtocolError
from fabricbench.linkbench.plan import BenchPlan
from fabricbench.linkbench.session import PairResult
from fabricbench.linkbench.wire import Connection, MsgType, WireMessage, parse_address
from fabricbench.matrix import BandwidthMatrix

log = logging.getLogger(__name__)

_EOF = object()


@dataclass
class CoordinatorResult:
    matrix: BandwidthMatrix
    results: dict[tuple[str, str], PairResult] = field(default_factory=dict)
    failures: dict[tuple[str, str], str] = field(default_factory=dict)
    # serial mode: (pair, START sent, RESULT received) on the coordinator clock
    intervals: list[tuple[tuple[str, str], float, float]] = field(default_factory=list)

    @property
    def partial(self) -> bool:
        return bool(self.matrix.missing)


def intervals_disjoint(intervals: list[tuple[tuple[str, str], float, float]]) -> bool:
    ordered = sorted(intervals, key=lambda iv: iv[1])
    return all(a[2] <= b[1] for a, b in zip(ordered, ordered[1:]))


class Coordinator:
    def __init__(
        self,
        plan: BenchPlan,
        listen: str | None = None,
        on_registered: Callable[["Coordinator"], None] | None = None,
    ):
        self.plan = plan
        self.listen = listen or plan.coordinator or "127.0.0.1:0"
        self.on_registered = on_registered
        self.conns: dict[str, Connection] = {}
        self.dead: set[str] = set()
        self.events: queue.Queue = queue.Queue()
        self._server: socket.socket | None = None
        self._seq = 0
        self.bound = threading.Event()

    # -- setup ----------------------------------------------------------------

    def bind(self) -> str:
        host, port = parse_address(self.listen)
        srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        srv.bind((host, port))
        srv.listen(len(self.plan.agents) + 8)
        self.listen = f"{host}:{srv.getsockname()[1]}"
        self._server = srv
        self.bound.set()
        return self.listen

    def _register(self) -> None:
        assert self._server is not None
        by_address = {a.address: a.id for a in self.plan.agents}
        deadline = time.monotonic() + self.plan.timeout
        while len(self.conns) < len(self.plan.agents):
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                break
            self._server.settimeout(remaining)
            try:
                sock, addr = self._server.accept()
            except socket.timeout:
                break
            conn = Connection(sock, peer=f"{addr[0]}:{addr[1]}")
            conn.settimeout(self.plan.timeout)
            try:
                hello = conn.recv()
            except (OSError, ConnectionError, ProtocolError) as exc:
                log.warning("bad registration from %s: %s", conn.peer, exc)
                conn.close()
                continue
            if hello is None or hello.msg_type != MsgType.HELLO:
                log.warning("connection from %s did not start with HELLO", conn.peer)
                conn.close()
                continue
            listen = str(hello.json().get("listen", ""))
            agent_id = by_address.get(listen)
            if agent_id is None or agent_id in self.conns:
                log.warning("rejecting agent listening on %s: not in plan or already registered", listen)
                conn.send(MsgType.BYE)
                conn.close()
                continue
            conn.settimeout(None)
            self.conns[agent_id] = conn
            log.info("agent %s registered from %s", agent_id, conn.peer)
            threading.Thread(target=self._reader, args=(agent_id, conn), daemon=True).start()
        self._server.close()
        for a in self.plan.agents:
            if a.id not in self.conns:
                log.warning("agent %s never registered", a.id)
                self.dead.add(a.id)

    def _reader(self, agent_id: str, conn: Connection) -> None:
        while True:
            try:
                msg = conn.recv()
            except ProtocolError as exc:
                self.events.put((agent_id, exc))
                return
            except (OSError, ConnectionError):
                msg = None
            if msg is None:
                self.events.put((agent_id, _EOF))
                return
            self.events.put((agent_id, msg))

    # -- messaging --------------------------------------------------------------

    def _send(self, agent_id: str, msg_type: MsgType, body: dict | None = None) -> None:
        if agent_id in self.dead:
            return
        self._seq += 1
        try:
            if body is None:
                self.conns[agent_id].send(msg_type, self._seq)
            else:
                self.conns[agent_id].send_json(msg_type, body, self._seq)
        except OSError as exc:
            log.warning("agent %s unreachable: %s", agent_id, exc)
            self.dead.add(agent_id)

    def _next_event(self, deadline: float) -> tuple[str, WireMessage] | None:
        """Next message from a live agent; handles EOFs; None on timeout."""
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return None
            try:
                agent_id, item = self.events.get(timeout=remaining)
            except queue.Empty:
                return None
            if item is _EOF:
                if agent_id not in self.dead:
                    log.warning("agent %s disconnected", agent_id)
                self.dead.add(agent_id)
                continue
            if isinstance(item, ProtocolError):
                raise ProtocolError(str(item), agent_id)
            return agent_id, item

    def _collect_plan_acks(self) -> None:
        waiting = {a for a in self.conns if a not in self.dead}
        deadline = time.monotonic() + self.plan.timeout
        while waiting - self.dead:
            ev = self._next_event(deadline)
            if ev is None:
                for a in waiting - self.dead:
                    log.warning("agent %s did not acknowledge PLAN", a)
                    self.dead.add(a)
                return
            agent_id, msg = ev
            if msg.msg_type != MsgType.PLAN:
                raise ProtocolError(f"expected PLAN acknowledgement, got {msg.msg_type.name}", agent_id)
            waiting.discard(agent_id)

    def _handle_result(self, agent_id: str, msg: WireMessage, out: CoordinatorResult, expected: set) -> tuple | None:
        if msg.msg_type != MsgType.RESULT:
            raise ProtocolError(f"expected RESULT, got {msg.msg_type.name}", agent_id)
        body = msg.json()
        try:
            pair = (str(body["src"]), str(body["dst"]))
        except KeyError:
            raise ProtocolError("RESULT without src/dst", agent_id) from None
        if pair not in expected or pair[0] != agent_id:
            raise ProtocolError(f"unexpected RESULT for pair {pair}", agent_id)
        if "error" in body:
            out.failures[pair] = str(body["error"])
        else:
            try:
                out.results[pair] = PairResult.from_dict(body)
            except (KeyError, ValueError, TypeError) as exc:
                raise ProtocolError(f"malformed RESULT: {exc}", agent_id) from None
        return pair

    # -- schedules ---------------------------------------------------------------

    def _plan_body(self, agent_id: str, pairs: list[tuple[str, str]]) -> dict:
        p = self.plan
        return {
            "id": agent_id,
            "mode": p.mode,
            "msg_size": p.msg_size,
            "repetitions": p.repetitions,
            "warmup": p.warmup,
            "timeout": p.timeout,
            "peers": {a.id: a.address for a in p.agents},
            "pairs": [list(x) for x in pairs],
        }

    def _run_serial(self, out: CoordinatorResult) -> None:
        for pair in self.plan.pairs():
            src, dst = pair
            if src in self.dead or dst in self.dead:
                out.failures[pair] = "agent unavailable"
                continue
            t0 = time.perf_counter()
            self._send(src, MsgType.START, {"pairs": [list(pair)]})
            deadline = time.monotonic() + self.plan.timeout
            while pair not in out.results and pair not in out.failures:
                if src in self.dead:
                    out.failures[pair] = "initiator lost"
                    break
                ev = self._next_event(deadline)
                if ev is None:
                    out.failures[pair] = "timeout"
                    break
                self._handle_result(*ev, out, {pair})
            out.intervals.append((pair, t0, time.perf_counter()))

    def _run_parallel(self, out: CoordinatorResult) -> None:
        pending = set(self.plan.pairs())
        expected = set(pending)
        for a in self.plan.ids:
            self._send(a, MsgType.START, {"pairs": [list(p) for p in sorted(pending) if p[0] == a]})
        deadline = time.monotonic() + self.plan.timeout
        while pending:
            for pair in [p for p in pending if p[0] in self.dead]:
                out.failures[pair] = "initiator lost"
                pending.discard(pair)
            if not pending:
                break
            ev = self._next_event(deadline)
            if ev is None:
                for pair in pending:
                    out.failures[pair] = "timeout"
                break
            pair = self._handle_result(*ev, out, expected)
            pending.discard(pair)

    def run(self) -> CoordinatorResult:
        if self._server is None:
            self.bind()
        self._register()
        if self.on_registered is not None:
            self.on_registered(self)
        p = self.plan
        all_pairs = p.pairs()
        for a in p.ids:
            mine = [x for x in all_pairs if x[0] == a] if p.mode == "parallel" else []
            self._send(a, MsgType.PLAN, self._plan_body(a, mine))
        out = CoordinatorResult(BandwidthMatrix(nodes=tuple(p.ids), mode=p.mode, msg_size=p.msg_size))
        try:
            self._collect_plan_acks()
            if p.mode == "serial":
                self._run_serial(out)
            else:
                self._run_parallel(out)
        finally:
            for a in p.ids:
                if a in self.conns:
                    self._send(a, MsgType.BYE)
                    self.conns[a].close()
        for pair in all_pairs:
            r = out.results.get(pair)
            if r is not None:
                out.matrix.add(pair[0], pair[1], r.bandwidth, r.median_rtt)
            else:
                out.matrix.flag_missing(*pair)
        return out


def run_coordinator(plan: BenchPlan, listen: str | None = None, **kwargs) -> CoordinatorResult:
    return Coordinator(plan, listen, **kwargs).run()
