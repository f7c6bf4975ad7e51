"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A run configuration violates its constraints (bad step counts, worker counts, ids)."""


class DimensionMismatch(ValueError):
    """An array argument does not match the problem or operator dimension."""


class SingularMatrixError(ArithmeticError):
    """A factorization met a numerically zero pivot; carries the offending index."""

    def __init__(self, index: int, value: float):
        self.index = index
        self.value = value
        super().__init__(
            f"matrix is numerically singular: |R[{index},{index}]| = {value:.3e}"
        )


class NewtonConvergenceError(RuntimeError):
    """Newton iteration exhausted its budget; carries the last residual norm."""

    def __init__(self, residual: float, iterations: int):
        self.residual = residual
        self.iterations = iterations
        super().__init__(
            f"Newton did not converge after {iterations} iterations "
            f"(last residual {residual:.3e})"
        )


class NonFiniteStateError(RuntimeError):
    """A step produced NaN or Inf entries."""


class PipelineProtocolError(RuntimeError):
    """The pipelined executor detected a protocol violation or a suspected deadlock."""


class DeterminismError(RuntimeError):
    """Outputs differed across worker counts; timing results must not be published."""


SOLVER_FAILURES = (SingularMatrixError, NewtonConvergenceError, NonFiniteStateError)
