"""Exception types raised by the simulator."""


class TetherSimError(Exception):
    """Base class for all simulator errors."""


class NonSkewInput(TetherSimError, ValueError):
    pass


class DimensionMismatch(TetherSimError, ValueError):
    pass


class FullyReeled(TetherSimError, ValueError):
    pass


class SingularRadius(TetherSimError, ValueError):
    pass


class ZeroLengthElement(TetherSimError, ValueError):
    pass


class StateInvalid(TetherSimError, ValueError):
    pass


class SingularMassMatrix(TetherSimError, ArithmeticError):
    pass


class InsufficientData(TetherSimError, ValueError):
    pass


class ConfigInvalid(TetherSimError, ValueError):
    pass


class NoConvergence(TetherSimError, RuntimeError):
    """Newton iteration failed; ``report`` carries the iteration history."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
