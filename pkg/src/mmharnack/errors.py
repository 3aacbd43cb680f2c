"""Exception hierarchy shared by all modules."""


class MMHarnackError(Exception):
    """Base class for every error raised by the package."""


# graph construction and geometry
class GraphError(MMHarnackError):
    pass


class DisconnectedGraph(GraphError):
    pass


class NonpositiveWeight(GraphError):
    pass


class DuplicateEdge(GraphError):
    pass


class InvalidFamilyParams(GraphError):
    pass


class EmptyRadiusGrid(GraphError):
    pass


class InsufficientScales(GraphError):
    pass


class GraphMismatch(MMHarnackError):
    """A field was evaluated against a graph of a different size."""


class NonuniformGrid(MMHarnackError):
    pass


# solvers
class SolverError(MMHarnackError):
    pass


class MaxIterationsExceeded(SolverError):
    """Raised by problem-level solvers; carries the best iterate found."""

    def __init__(self, message, best=None, stats=None):
        super().__init__(message)
        self.best = best
        self.stats = stats


class NonFiniteObjective(SolverError):
    pass


class NegativeInput(SolverError):
    pass


class IllPosedDomain(SolverError):
    pass


class WrongExponent(SolverError):
    pass


class StepFailed(SolverError):
    """A Cauchy step failed; the partial trajectory is attached."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


# measurement
class OutOfTimeDomain(MMHarnackError):
    pass


class UnderResolved(MMHarnackError):
    pass


class InsufficientResolution(MMHarnackError):
    pass


class ZeroBoundaryData(MMHarnackError):
    pass


class GraphTooSmall(MMHarnackError):
    pass


class ConstantField(MMHarnackError):
    pass


class DegenerateBall(MMHarnackError):
    pass


class BallIsWholeGraph(MMHarnackError):
    pass


class ParameterGateViolated(MMHarnackError):
    pass


class ConfigInvalid(MMHarnackError):
    pass


class DegenerateOscillation(MMHarnackError):
    """Every oscillation vanished, so no decay exponent can be fitted."""
