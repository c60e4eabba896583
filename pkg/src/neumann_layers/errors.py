"""Exception hierarchy shared by all modules."""


class NeumannLayerError(Exception):
    """Base class for every error raised by the package."""


class EvaluationError(NeumannLayerError):
    """A coefficient, reaction or flux returned a non-finite value."""


class QuadratureError(NeumannLayerError):
    pass


class DegenerateCoefficientError(NeumannLayerError):
    pass


class RootBracketingError(NeumannLayerError):
    pass


class InconsistentConstantsError(NeumannLayerError):
    pass


class ModeError(NeumannLayerError):
    """Prediction mode not admissible for the given coefficient family."""


class InvalidExponentError(NeumannLayerError, ValueError):
    pass


class NonConvergenceError(NeumannLayerError):
    def __init__(self, message, last_residual=float("nan")):
        super().__init__(message)
        self.last_residual = last_residual


class SolutionRejectedError(NeumannLayerError):
    pass


class OutOfDomainError(NeumannLayerError):
    pass


class InadmissibleTestFunctionError(NeumannLayerError):
    pass


class WindowExhaustedError(NeumannLayerError):
    """Too few usable interior samples for a decay fit."""


class PreconditionError(NeumannLayerError):
    """Parameters violate the preconditions of a comparison case."""


class ConfigError(NeumannLayerError):
    pass
