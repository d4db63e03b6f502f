import os
import socket
import subprocess
import sys
import threading
import time
from pathlib import Path

import pytest

from fabricbench.linkbench.agent import Agent
from fabricbench.linkbench.plan import AgentSpec, BenchPlan

DATA = Path(__file__).resolve().parents[1] / "src" / "fabricbench" / "data"


def free_ports(n: int) -> list[int]:
    socks = []
    for _ in range(n):
        s = socket.socket()
        s.bind(("127.0.0.1", 0))
        socks.append(s)
    ports = [s.getsockname()[1] for s in socks]
    for s in socks:
        s.close()
    return ports


def make_plan(n_agents: int, mode: str = "serial", msg_size: int = 64 << 10, repetitions: int = 8,
              timeout: float = 10.0) -> BenchPlan:
    ports = free_ports(n_agents)
    agents = [AgentSpec(f"a{i}", f"127.0.0.1:{p}") for i, p in enumerate(ports)]
    return BenchPlan(agents, msg_size=msg_size, repetitions=repetitions, mode=mode, timeout=timeout)


class RateCap:
    """Token bucket shared by every connection of one agent."""

    def __init__(self, bytes_per_s: float):
        self.rate = bytes_per_s
        self.lock = threading.Lock()
        self.next_free = time.perf_counter()

    def __call__(self, nbytes: int) -> None:
        with self.lock:
            now = time.perf_counter()
            start = max(now, self.next_free)
            self.next_free = start + nbytes / self.rate
            wait = self.next_free - now
        if wait > 0:
            time.sleep(wait)


def start_thread_agents(plan: BenchPlan, coordinator: str, **kwargs) -> list[threading.Thread]:
    threads = []
    for spec in plan.agents:
        agent = Agent(spec.address, coordinator, **kwargs)
        t = threading.Thread(target=agent.serve, daemon=True)
        t.start()
        threads.append(t)
    return threads


def spawn_agent(listen: str, coordinator: str, *extra: str) -> subprocess.Popen:
    env = dict(os.environ, FABRICBENCH_LOG="error")
    return subprocess.Popen(
        [sys.executable, "-m", "fabricbench", "link", "agent", "--listen", listen, "--coordinator", coordinator, *extra],
        env=env, stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL,
    )


@pytest.fixture
def data_dir() -> Path:
    return DATA


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
