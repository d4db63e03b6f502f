"""Benchmark plan: which agents take part and how pairs are exercised.

``plan.json``::

    {
      "coordinator": "127.0.0.1:9100",
      "agents": [{"id": "a0", "address": "127.0.0.1:9101"}, ...],
      "msg_size": "1MiB",
      "repetitions": 16,
      "warmup": 3,
      "mode": "serial",
      "timeout": 30
    }
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from fabricbench.errors import ValidationError
from fabricbench.jsonfile import JsonDocument, require
from fabricbench.linkbench.session import WARMUP
from fabricbench.linkbench.wire import parse_address
from fabricbench.units import parse_size

MODES = ("serial", "parallel")
DEFAULT_TIMEOUT = 30.0


@dataclass(frozen=True)
class AgentSpec:
    id: str
    address: str


@dataclass(frozen=True)
class BenchPlan:
    agents: tuple[AgentSpec, ...]
    msg_size: int = 1 << 20
    repetitions: int = 16
    mode: str = "serial"
    warmup: int = WARMUP
    timeout: float = DEFAULT_TIMEOUT
    coordinator: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        if len(self.agents) < 2:
            raise ValidationError("a plan needs at least 2 agents")
        ids = [a.id for a in self.agents]
        if len(set(ids)) != len(ids):
            raise ValidationError("agent ids must be unique")
        addrs = [a.address for a in self.agents]
        if len(set(addrs)) != len(addrs):
            raise ValidationError("agent addresses must be unique")
        for a in self.agents:
            parse_address(a.address)
        if self.warmup < 0:
            raise ValidationError("warmup must be >= 0")
        if self.repetitions <= self.warmup:
            raise ValidationError("repetitions must exceed the warm-up count")
        if self.msg_size <= 0:
            raise ValidationError("msg_size must be > 0")
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}")
        if not self.timeout > 0:
            raise ValidationError("timeout must be > 0")

    @property
    def ids(self) -> list[str]:
        return [a.id for a in self.agents]

    def pairs(self) -> list[tuple[str, str]]:
        """Unordered pairs in lexicographic order of plan position."""
        ids = self.ids
        return [(ids[i], ids[j]) for i in range(len(ids)) for j in range(i + 1, len(ids))]

    def address_of(self, agent_id: str) -> str:
        for a in self.agents:
            if a.id == agent_id:
                return a.address
        raise KeyError(agent_id)

    def to_dict(self) -> dict:
        return {
            "coordinator": self.coordinator,
            "agents": [{"id": a.id, "address": a.address} for a in self.agents],
            "msg_size": self.msg_size,
            "repetitions": self.repetitions,
            "warmup": self.warmup,
            "mode": self.mode,
            "timeout": self.timeout,
        }


def parse_plan(doc: JsonDocument) -> BenchPlan:
    top = doc.data
    agents = []
    for entry in require(doc, top, "agents", list):
        agents.append(AgentSpec(str(require(doc, entry, "id", (str, int))), require(doc, entry, "address", str)))
    raw_size = require(doc, top, "msg_size", (int, str), optional=True)
    values = {
        "agents": agents,
        "msg_size": parse_size(raw_size) if raw_size is not None else 1 << 20,
        "repetitions": require(doc, top, "repetitions", int, optional=True) or 16,
        "mode": require(doc, top, "mode", str, optional=True) or "serial",
        "timeout": float(require(doc, top, "timeout", (int, float), optional=True) or DEFAULT_TIMEOUT),
        "coordinator": require(doc, top, "coordinator", str, optional=True),
    }
    warmup = require(doc, top, "warmup", int, optional=True)
    if warmup is not None:
        values["warmup"] = warmup
    try:
        return BenchPlan(**values)
    except ValueError as exc:
        raise doc.error(top, None, str(exc)) from None


def load_plan(path: str | Path) -> BenchPlan:
    return parse_plan(JsonDocument.load(path))
