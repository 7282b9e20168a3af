"""Exception hierarchy shared by all solvers."""


class MFGHomogError(Exception):
    """Base class for every error raised by this package."""


class GridError(MFGHomogError, ValueError):
    """Invalid grid construction parameters."""


class OddGridSize(GridError):
    pass


class GridIncommensurate(MFGHomogError, ValueError):
    """The grid cannot represent x/eps exactly (n is not a multiple of 1/eps)."""


class NonFiniteField(MFGHomogError, ValueError):
    pass


class PotentialError(MFGHomogError, ValueError):
    pass


class PotentialSyntaxError(PotentialError):
    def __init__(self, message, position=None, expected=None):
        self.position = position
        self.expected = tuple(expected or ())
        where = "" if position is None else f" at position {position}"
        hint = f" (expected one of: {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{message}{where}{hint}")


class PeriodicityViolation(PotentialError):
    """A y-variable appears outside an allowed sin/cos(2*pi*k*y_i) argument."""


class DimensionError(PotentialError):
    pass


class NotSeparable(PotentialError):
    pass


class SolverError(MFGHomogError, RuntimeError):
    pass


class NonConvergence(SolverError):
    def __init__(self, iterations, grad_norm, message="minimization did not converge"):
        self.iterations = iterations
        self.grad_norm = grad_norm
        super().__init__(f"{message}: {iterations} iterations, gradient norm {grad_norm:.3e}")


class NonFiniteObjective(SolverError):
    pass


class RootFindFailure(SolverError):
    pass


class BracketFailure(RootFindFailure):
    pass


class OutOfTableRange(MFGHomogError, ValueError):
    def __init__(self, lam, box):
        self.lam = lam
        self.box = box
        super().__init__(f"Lambda={lam} outside tabulated box {box}")


class ConfigError(MFGHomogError, ValueError):
    pass
