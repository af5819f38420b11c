"""Exception types shared across the package.

Each class carries the CLI exit code it maps to so the command layer can
translate failures without a lookup table.
"""


class CohesionError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class InputError(CohesionError, ValueError):
    """Malformed input: bad shapes, unparsable files, invalid configuration."""

    exit_code = 2


class GraphError(InputError):
    """Invalid graph definition (self-loop, out-of-range node, bad token)."""


class SingularSystemError(CohesionError, ArithmeticError):
    """The estimating equations are singular or too ill-conditioned to solve."""

    exit_code = 3

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class UnreachableNodesError(CohesionError):
    """Test nodes whose connected component holds no training node."""

    exit_code = 4

    def __init__(self, nodes, message=None):
        self.nodes = sorted(int(v) for v in nodes)
        if message is None:
            message = (
                "test nodes not reachable from any training node: "
                + ", ".join(str(v) for v in self.nodes)
            )
        super().__init__(message)


class GraphDriftError(CohesionError):
    """Prediction graph disagrees with the graph used at fit time."""

    exit_code = 5


class RetryExhaustedError(CohesionError):
    """A resampling loop gave up before finding a valid split."""

    exit_code = 6


class DegenerateCriterionError(CohesionError, ZeroDivisionError):
    """A model-selection criterion is undefined (e.g. GCV with trace(H) = n)."""

    exit_code = 3
