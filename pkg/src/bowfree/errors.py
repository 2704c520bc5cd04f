"""Exception hierarchy shared across the package."""


class BowfreeError(Exception):
    """Base class for all package errors."""


class GraphStructureError(BowfreeError):
    """Malformed graph: out-of-range index, self-loop, duplicate edge."""


class CycleError(BowfreeError):
    """Directed part of the graph is not acyclic."""

    def __init__(self, cycle):
        self.cycle = list(cycle)
        super().__init__("directed edges contain the cycle " + " -> ".join(map(str, self.cycle)))


class BowViolationError(BowfreeError):
    """A vertex pair carries both a directed and a bidirected edge."""

    def __init__(self, pairs):
        self.pairs = list(pairs)
        super().__init__(f"graph is not bow-free, violating pairs: {self.pairs}")


class PatternError(BowfreeError):
    """Parameter matrix has nonzeros outside the structural zero pattern."""


class DefinitenessError(BowfreeError):
    """Matrix expected to be positive (semi)definite is not."""


class NearSingularError(BowfreeError):
    """Linear system is numerically singular (identifiability failure)."""

    def __init__(self, message, vertex=None):
        self.vertex = vertex
        super().__init__(message)


class ConvergenceError(BowfreeError):
    """Iterative scheme failed to converge; carries the last iterate."""

    def __init__(self, message, last_iterate=None):
        self.last_iterate = last_iterate
        super().__init__(message)


class OrderingError(BowfreeError):
    """Recovery invoked before upstream layers were solved."""


class PremiseError(BowfreeError):
    """Stability premise on (alpha, beta, kappa0) is violated."""


class ConfigError(BowfreeError):
    """Invalid generator or experiment configuration."""


class SampleSizeError(BowfreeError):
    """Too few observations for the requested estimator."""


class IngestionError(BowfreeError):
    """External file does not match the documented format."""
