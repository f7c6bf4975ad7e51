"""Deferred-correction integral weights on uniform grids.

A level-j correction integrates the interpolant of the previous level's
right-hand side through j+1 stencil nodes over one step [t_n, t_n+dt]. Two
stencils occur:

* steady (n >= j-1): the trailing window t_{n+1}, t_n, ..., t_{n+1-j};
  weight k belongs to node t_{n+1-k} (newest first). By translation
  invariance on a uniform grid one table serves every steady step.
* startup (n < j-1): the left-anchored window t_0, ..., t_j; weight k
  belongs to node t_k (oldest first), one table per n.

Weights are computed exactly: the Lagrange numerator is expanded in monomial
coefficients over rationals and integrated term by term, then evaluated to
float and scaled by dt. Exactness holds comfortably for the supported levels
(j <= 11; equispaced interpolation degrades beyond that).
"""

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DimensionMismatch

__all__ = ["QuadratureWeights", "steady_weights", "startup_weights", "apply_quadrature"]

MAX_LEVEL = 11


@dataclass(frozen=True)
class QuadratureWeights:
    """j+1 integral weights for one correction level; each carries the dt factor."""

    level: int
    regime: str            # "steady" | "startup"
    start_index: int | None  # n for the startup regime, None for steady
    dt: float
    weights: np.ndarray

    def __post_init__(self):
        if self.weights.shape != (self.level + 1,):
            raise ValueError("weight count must be level + 1")
        total = float(self.weights.sum())
        if abs(total - self.dt) > 1e-13 * abs(self.dt):
            raise ValueError(f"weights sum to {total!r}, expected dt={self.dt!r}")


def _lagrange_step_integrals(nodes: list[Fraction], lo: Fraction, hi: Fraction) -> list[Fraction]:
    """Exact integrals over [lo, hi] of the Lagrange basis on ``nodes``."""
    out = []
    for k, xk in enumerate(nodes):
        coeffs = [Fraction(1)]  # ascending monomial coefficients
        denom = Fraction(1)
        for i, xi in enumerate(nodes):
            if i == k:
                continue
            denom *= xk - xi
            # multiply polynomial by (x - xi)
            shifted = [Fraction(0)] + coeffs
            coeffs = [shifted[d] - xi * c for d, c in enumerate(coeffs)] + [shifted[-1]]
        integral = Fraction(0)
        for d, c in enumerate(coeffs):
            integral += c * (hi ** (d + 1) - lo ** (d + 1)) / (d + 1)
        out.append(integral / denom)
    return out


def _check_level(j: int) -> None:
    if j < 1:
        raise ValueError("correction level must be >= 1 (the prediction level uses no quadrature)")
    if j > MAX_LEVEL:
        raise ValueError(f"correction level {j} exceeds the supported maximum {MAX_LEVEL}")


def steady_weights(j: int, dt: float) -> QuadratureWeights:
    """Trailing-stencil weights; index k pairs with node t_{n+1-k}."""
    _check_level(j)
    if dt <= 0:
        raise ValueError("dt must be positive")
    nodes = [Fraction(1 - i) for i in range(j + 1)]  # node offsets in dt units
    fracs = _lagrange_step_integrals(nodes, Fraction(0), Fraction(1))
    w = np.array([float(f) for f in fracs]) * dt
    w.setflags(write=False)
    return QuadratureWeights(level=j, regime="steady", start_index=None, dt=dt, weights=w)


def startup_weights(j: int, n: int, dt: float) -> QuadratureWeights:
    """Left-anchored stencil weights for step n -> n+1; index k pairs with node t_k."""
    _check_level(j)
    if dt <= 0:
        raise ValueError("dt must be positive")
    if not 0 <= n < j - 1:
        raise ValueError(
            f"startup weights need 0 <= n < j-1, got n={n}, j={j}; use steady_weights"
        )
    nodes = [Fraction(i) for i in range(j + 1)]
    fracs = _lagrange_step_integrals(nodes, Fraction(n), Fraction(n + 1))
    w = np.array([float(f) for f in fracs]) * dt
    w.setflags(write=False)
    return QuadratureWeights(level=j, regime="startup", start_index=n, dt=dt, weights=w)


def apply_quadrature(w: QuadratureWeights, rhs_window) -> np.ndarray:
    """Weighted sum of a window of right-hand-side vectors.

    ``rhs_window`` must hold level+1 vectors ordered to match the weight
    convention of ``w`` (steady: newest first; startup: oldest first).
    """
    rows = np.asarray(rhs_window, dtype=np.float64)
    scalar_window = rows.ndim == 1
    if scalar_window:
        rows = rows[:, None]
    if rows.shape[0] != w.weights.shape[0]:
        raise DimensionMismatch(
            f"window has {rows.shape[0]} entries, weights need {w.weights.shape[0]}"
        )
    out = w.weights @ rows
    return float(out[0]) if scalar_window else out
