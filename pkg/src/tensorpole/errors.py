"""Exception types raised by the numerical routines."""


class TensorpoleError(Exception):
    """Base class for numerical failures (CLI exit code 3)."""


class DegenerateSpectrumError(TensorpoleError):
    """An operation needing a gapped spectrum hit a (near) degeneracy."""

    def __init__(self, message, gap=None, pair=None):
        super().__init__(message)
        self.gap = gap
        self.pair = pair


class GaugeError(TensorpoleError):
    """A gauge or branch convention cannot be applied at this point."""


class SingularityError(TensorpoleError):
    """A closed-form expression is evaluated on its singular set."""


class UnsupportedRegimeError(TensorpoleError):
    """The requested recipe is only defined for a different parameter regime."""


class IncompleteDataError(TensorpoleError):
    """A reconstruction was given an incomplete set of matrix elements."""


class FitError(TensorpoleError):
    """A Rabi fit did not describe the trace; the trace is attached."""

    def __init__(self, message, trace=None, fit=None):
        super().__init__(message)
        self.trace = trace
        self.fit = fit
