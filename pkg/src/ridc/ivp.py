"""Split initial-value problems: y' = f_stiff(t, y) + f_nonstiff(t, y), y(a) = alpha.

State vectors are plain 1-d float64 numpy arrays. The stiff part is the one
a stepper treats implicitly; when it is linear and time independent the
problem can expose the dense operator so implicit stages become one
pre-factored linear solve instead of a Newton iteration.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DimensionMismatch

RhsFunc = Callable[[float, np.ndarray], np.ndarray]


def as_state(values, dimension: Optional[int] = None) -> np.ndarray:
    """Validate and normalize a state vector: 1-d, float64, finite."""
    y = np.ascontiguousarray(values, dtype=np.float64)
    if y.ndim != 1:
        raise DimensionMismatch(f"state must be 1-d, got shape {y.shape}")
    if dimension is not None and y.shape[0] != dimension:
        raise DimensionMismatch(f"state has length {y.shape[0]}, expected {dimension}")
    if not np.isfinite(y).all():
        raise ValueError("state contains NaN or Inf entries")
    return y


@dataclass(frozen=True)
class SplitIVP:
    """An initial-value problem with separately evaluable stiff and non-stiff parts.

    Instances are immutable and safe to share across worker threads; the two
    right-hand-side callables must be pure functions of (t, y) and reentrant.

    ``stiff_linear_operator``, when given, is a dense (n, n) matrix L with
    f_stiff(t, y) == L @ y (time independent); steppers then use the direct
    linear-solve path instead of Newton.
    """

    dimension: int
    t_start: float
    t_end: float
    initial_state: np.ndarray
    eval_nonstiff: RhsFunc
    eval_stiff: RhsFunc
    stiff_linear_operator: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be positive")
        if not self.t_start < self.t_end:
            raise ValueError(f"need t_start < t_end, got [{self.t_start}, {self.t_end}]")
        y0 = as_state(self.initial_state, self.dimension)
        y0.setflags(write=False)
        object.__setattr__(self, "initial_state", y0)
        if self.stiff_linear_operator is not None:
            op = np.ascontiguousarray(self.stiff_linear_operator, dtype=np.float64)
            if op.shape != (self.dimension, self.dimension):
                raise DimensionMismatch(
                    f"linear operator shape {op.shape} does not match dimension {self.dimension}"
                )
            op.setflags(write=False)
            object.__setattr__(self, "stiff_linear_operator", op)


def eval_full_rhs(ivp: SplitIVP, t: float, y: np.ndarray) -> np.ndarray:
    """Sum of the stiff and non-stiff parts at (t, y)."""
    if y.shape[0] != ivp.dimension:
        raise DimensionMismatch(f"state has length {y.shape[0]}, expected {ivp.dimension}")
    return ivp.eval_stiff(t, y) + ivp.eval_nonstiff(t, y)


def scalar_ivp(
    t_start: float,
    t_end: float,
    y0: float,
    stiff_coeff: float = 0.0,
    nonstiff: Optional[RhsFunc] = None,
) -> SplitIVP:
    """A 1-dof problem y' = stiff_coeff*y + nonstiff(t, y), handy in tests and demos."""
    op = np.array([[float(stiff_coeff)]])
    f_n = nonstiff if nonstiff is not None else (lambda t, y: np.zeros(1))
    return SplitIVP(
        dimension=1,
        t_start=t_start,
        t_end=t_end,
        initial_state=np.array([float(y0)]),
        eval_nonstiff=f_n,
        eval_stiff=lambda t, y: op @ y,
        stiff_linear_operator=op,
    )
