"""Benchmark agent: reflects PINGs for peers and runs the sessions it is assigned.

Control conversation with the coordinator::

    agent -> HELLO  {"listen": "<host:port>"}
    coord -> PLAN   {"id", "mode", "msg_size", "repetitions", "warmup",
                     "timeout", "peers": {id: address}, "pairs": [[src, dst], ...]}
    agent -> PLAN   {"ready": true}                       (acknowledgement)
    coord -> START  {"pairs": [[src, dst], ...]}          (one per pair in serial mode,
                                                           a single barrier in parallel)
    agent -> RESULT {PairResult fields} or {"src", "dst", "error"}   per pair
    coord -> BYE
"""

from __future__ import annotations

import logging
import os
import socket
import threading
import time
from typing import Callable

from fabricbench.errors import ProtocolError
from fabricbench.linkbench.session import pingpong, reflect
from fabricbench.linkbench.wire import Connection, MsgType, parse_address

log = logging.getLogger(__name__)

CONNECT_RETRIES = 3
RETRY_BACKOFF = 1.0


class Agent:
    def __init__(
        self,
        listen: str,
        coordinator: str,
        throttle: Callable[[int], None] | None = None,
        retries: int = CONNECT_RETRIES,
        backoff: float = RETRY_BACKOFF,
        crash_on: str | None = None,
    ):
        self.listen = listen
        self.coordinator = coordinator
        self.throttle = throttle
        self.retries = retries
        self.backoff = backoff
        # fault injection for tests: "plan" exits the process abruptly on PLAN
        self.crash_on = crash_on
        self.plan: dict = {}
        self.reflected = 0
        self._server: socket.socket | None = None
        self._control: Connection | None = None
        self._ready: dict[str, Connection | Exception] = {}
        self._stop = threading.Event()
        self._lock = threading.Lock()

    # -- reflector ----------------------------------------------------------

    def _bind(self) -> None:
        host, port = parse_address(self.listen)
        srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        srv.bind((host, port))
        srv.listen(64)
        if port == 0:
            self.listen = f"{host}:{srv.getsockname()[1]}"
        self._server = srv
        threading.Thread(target=self._accept_loop, name=f"reflector-{self.listen}", daemon=True).start()

    def _accept_loop(self) -> None:
        assert self._server is not None
        while not self._stop.is_set():
            try:
                sock, addr = self._server.accept()
            except OSError:
                return
            conn = Connection(sock, peer=f"{addr[0]}:{addr[1]}", throttle=self.throttle)
            threading.Thread(target=self._reflect_one, args=(conn,), daemon=True).start()

    def _reflect_one(self, conn: Connection) -> None:
        try:
            served = reflect(conn)
            with self._lock:
                self.reflected += served
        except (OSError, ConnectionError, ProtocolError) as exc:
            log.warning("reflector session from %s ended: %s", conn.peer, exc)
        finally:
            conn.close()

    # -- control --------------------------------------------------------------

    def _connect_coordinator(self) -> Connection | None:
        for attempt in range(self.retries + 1):
            try:
                conn = Connection.connect(self.coordinator, timeout=10.0)
                conn.settimeout(None)
                conn.send_json(MsgType.HELLO, {"listen": self.listen})
                return conn
            except OSError as exc:
                if attempt == self.retries:
                    log.error("cannot reach coordinator %s: %s", self.coordinator, exc)
                    return None
                log.info("coordinator %s unreachable (%s), retrying", self.coordinator, exc)
                time.sleep(self.backoff)
        return None

    def _open_peer(self, dst: str) -> Connection:
        addr = self.plan["peers"][dst]
        conn = Connection.connect(addr, timeout=float(self.plan.get("timeout", 30.0)), throttle=self.throttle)
        return conn

    def _on_plan(self, body: dict) -> None:
        self.plan = body
        self._ready = {}
        if body.get("mode") == "parallel":
            # connect up front so the START barrier releases transfers only
            for src, dst in body.get("pairs", []):
                try:
                    self._ready[dst] = self._open_peer(dst)
                except OSError as exc:
                    self._ready[dst] = exc

    def _run_pair(self, src: str, dst: str) -> None:
        plan = self.plan
        conn = None
        try:
            pre = self._ready.pop(dst, None)
            if isinstance(pre, Exception):
                raise pre
            conn = pre or self._open_peer(dst)
            result = pingpong(conn, int(plan["msg_size"]), int(plan["repetitions"]), int(plan["warmup"]), src, dst)
            conn.send(MsgType.BYE)
            body = result.to_dict()
        except (OSError, ConnectionError, ProtocolError) as exc:
            log.warning("pair %s-%s failed: %s", src, dst, exc)
            body = {"src": src, "dst": dst, "error": str(exc) or type(exc).__name__}
        finally:
            if conn is not None:
                conn.close()
        assert self._control is not None
        try:
            self._control.send_json(MsgType.RESULT, body)
        except OSError as exc:
            log.error("could not report %s-%s: %s", src, dst, exc)

    def _on_start(self, body: dict) -> None:
        pairs = [tuple(p) for p in body.get("pairs", [])]
        workers = [threading.Thread(target=self._run_pair, args=p, daemon=True) for p in pairs]
        for w in workers:
            w.start()
        for w in workers:
            w.join()

    def serve(self) -> int:
        """Run until BYE (exit code 0) or until the coordinator is lost (2)."""
        self._bind()
        try:
            while True:
                self._control = self._connect_coordinator()
                if self._control is None:
                    return 2
                outcome = self._control_loop()
                if outcome is not None:
                    return outcome
                log.warning("lost connection to coordinator, reconnecting")
        finally:
            self._stop.set()
            if self._server is not None:
                self._server.close()

    def _control_loop(self) -> int | None:
        conn = self._control
        assert conn is not None
        runners: list[threading.Thread] = []
        try:
            while True:
                try:
                    msg = conn.recv()
                except (OSError, ConnectionError):
                    return None
                if msg is None:
                    return None
                if msg.msg_type == MsgType.BYE:
                    for r in runners:
                        r.join(timeout=1.0)
                    return 0
                if msg.msg_type == MsgType.PLAN:
                    if self.crash_on == "plan":
                        os._exit(137)
                    self._on_plan(msg.json())
                    conn.send_json(MsgType.PLAN, {"ready": True})
                elif msg.msg_type == MsgType.START:
                    t = threading.Thread(target=self._on_start, args=(msg.json(),), daemon=True)
                    t.start()
                    runners.append(t)
                else:
                    log.error("unexpected %s from coordinator", msg.msg_type.name)
                    return 2
        finally:
            conn.close()


def run_agent(listen_address: str, coordinator_address: str, **kwargs) -> int:
    return Agent(listen_address, coordinator_address, **kwargs).serve()
