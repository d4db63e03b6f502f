"""Exception hierarchy shared by all fabricbench modules."""


class FabricbenchError(Exception):
    """Base class for errors raised by fabricbench."""


class ValidationError(FabricbenchError, ValueError):
    """Input violates a documented precondition or invariant."""


class ProtocolError(FabricbenchError):
    """A peer sent something the wire protocol does not allow."""

    def __init__(self, message: str, agent_id: str | None = None):
        super().__init__(message if agent_id is None else f"{message} (agent {agent_id})")
        self.agent_id = agent_id


class BenchmarkError(FabricbenchError):
    """A microbenchmark could not run as requested."""
