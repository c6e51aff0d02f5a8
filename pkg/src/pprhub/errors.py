"""Exception types shared across the package."""


class PprHubError(Exception):
    """Base class for library errors."""


class GraphFormatError(PprHubError, ValueError):
    """Malformed graph or degree-sequence input."""


class ConvergenceError(PprHubError, ArithmeticError):
    """An iterative solver hit its iteration cap above tolerance.

    Attributes
    ----------
    partial : object
        The last iterate, wrapped in the result type the solver would
        have returned.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class MissingHubVectorError(PprHubError, KeyError):
    """A hub with positive weight has no precomputed PPR vector."""


class TreeExplodedError(PprHubError, RuntimeError):
    """Branching-process growth exceeded the node cap."""

    def __init__(self, message, generation=None, node_count=None):
        super().__init__(message)
        self.generation = generation
        self.node_count = node_count
