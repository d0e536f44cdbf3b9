"""Exception hierarchy shared by all modules."""


class CauchyKMFError(Exception):
    """Base class for errors raised by this package."""


class InvalidArgument(CauchyKMFError, ValueError):
    pass


class NotFound(CauchyKMFError, KeyError):
    pass


class InvalidCoefficients(CauchyKMFError, ValueError):
    pass


class IllPosedBVP(CauchyKMFError):
    """Mixed problem without Dirichlet constraints (singular system)."""


class SolverFailure(CauchyKMFError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class NonlinearDivergence(CauchyKMFError):
    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history or []


class Unsupported(CauchyKMFError):
    pass


class InsufficientData(CauchyKMFError):
    pass


class ConfigError(CauchyKMFError, ValueError):
    pass


class InvalidComparison(CauchyKMFError, ValueError):
    pass
