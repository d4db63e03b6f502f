"""Socket-based all-pairs ping-pong between benchmark agents."""

from fabricbench.linkbench.agent import Agent, run_agent
from fabricbench.linkbench.coordinator import Coordinator, CoordinatorResult, intervals_disjoint, run_coordinator
from fabricbench.linkbench.plan import AgentSpec, BenchPlan, load_plan, parse_plan
from fabricbench.linkbench.session import PairResult, pingpong, reflect
from fabricbench.linkbench.wire import Connection, MsgType, WireMessage

__all__ = [
    "Agent", "AgentSpec", "BenchPlan", "Connection", "Coordinator", "CoordinatorResult", "MsgType",
    "PairResult", "WireMessage", "intervals_disjoint", "load_plan", "parse_plan", "pingpong", "reflect",
    "run_agent", "run_coordinator",
]
