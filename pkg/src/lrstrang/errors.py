"""Exception types raised by the integrators and the harness."""


class LowRankError(Exception):
    """Base class for all package errors."""


class DegenerateBasisError(LowRankError):
    """Orthonormalization of an all-zero (or numerically zero) block."""


class NonFiniteInputError(LowRankError, ValueError):
    pass


class DimensionError(LowRankError, ValueError):
    pass


class NonlinearityBlowup(LowRankError, FloatingPointError):
    """The right-hand side produced non-finite values.

    The failing time is kept in ``t`` so sweeps can record where a cell diverged.
    """

    def __init__(self, t: float, message: str = "nonlinearity blow-up"):
        super().__init__(f"{message} at t={t:.6g}")
        self.t = t


class OrderUndefinedError(LowRankError, ArithmeticError):
    """Runge estimate requested but the finer solution difference underflowed."""


class MatrixMarketError(LowRankError, ValueError):
    def __init__(self, message: str, path=None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


class ConfigError(LowRankError, ValueError):
    pass
