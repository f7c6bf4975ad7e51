"""Coupled implicit/explicit Butcher tableaus for additive Runge-Kutta steps.

Each scheme pairs an s-stage diagonally implicit table (applied to the stiff
part) with an s-stage explicit table (non-stiff part) sharing one abscissa
vector. Coefficients are written as exact rationals and evaluated to double
precision once, so the row-sum consistency checks can be asserted tightly at
construction.
"""

from dataclasses import dataclass
from fractions import Fraction as F

import numpy as np

__all__ = ["ButcherPair", "imex3_tableau", "imex4_tableau"]

_ROW_SUM_TOL = 1e-14


def _as_lower_triangular(rows, stages: int) -> np.ndarray:
    a = np.zeros((stages, stages))
    for i, row in enumerate(rows):
        if len(row) > stages:
            raise ValueError(f"row {i} has {len(row)} entries for {stages} stages")
        a[i, : len(row)] = [float(v) for v in row]
    return a


@dataclass(frozen=True)
class ButcherPair:
    """DIRK table plus explicit table of equal stage count.

    ``a_implicit`` is lower triangular (diagonal allowed), ``a_explicit``
    strictly lower triangular. With ``strict`` (the default) both row sums
    must reproduce ``c`` to 1e-14; non-conforming pairs (used in tests for
    algebraic identities) can opt out.
    """

    c: np.ndarray
    a_implicit: np.ndarray
    a_explicit: np.ndarray
    b_implicit: np.ndarray
    b_explicit: np.ndarray
    strict: bool = True

    def __post_init__(self):
        s = self.c.shape[0]
        for name in ("a_implicit", "a_explicit"):
            if getattr(self, name).shape != (s, s):
                raise ValueError(f"{name} must be {s}x{s}")
        for name in ("b_implicit", "b_explicit"):
            if getattr(self, name).shape != (s,):
                raise ValueError(f"{name} must have {s} entries")
        if np.any(np.triu(self.a_implicit, k=1) != 0.0):
            raise ValueError("a_implicit must be lower triangular")
        if np.any(np.triu(self.a_explicit, k=0) != 0.0):
            raise ValueError("a_explicit must be strictly lower triangular")
        if self.strict:
            for name in ("a_implicit", "a_explicit"):
                err = np.abs(getattr(self, name).sum(axis=1) - self.c).max()
                if err > _ROW_SUM_TOL:
                    raise ValueError(f"{name} row sums deviate from c by {err:.2e}")
        for arr in (self.c, self.a_implicit, self.a_explicit, self.b_implicit, self.b_explicit):
            arr.setflags(write=False)

    @property
    def stages(self) -> int:
        return self.c.shape[0]


def _pair(c, a_imp, a_exp, b_imp, b_exp) -> ButcherPair:
    s = len(c)
    return ButcherPair(
        c=np.array([float(v) for v in c]),
        a_implicit=_as_lower_triangular(a_imp, s),
        a_explicit=_as_lower_triangular(a_exp, s),
        b_implicit=np.array([float(v) for v in b_imp]),
        b_explicit=np.array([float(v) for v in b_exp]),
    )


def imex3_tableau() -> ButcherPair:
    """Third-order pair, 5 stages."""
    c = [0, F(1, 2), F(1, 2), 1, 1]
    a_imp = [
        [0],
        [0, F(1, 2)],
        [F(1, 4), F(-5, 12), F(2, 3)],
        [2, F(-7, 2), F(1, 2), 2],
        [F(1, 6), 0, F(2, 3), F(-5, 6), 1],
    ]
    a_exp = [
        [],
        [F(1, 2)],
        [F(1, 4), F(1, 4)],
        [0, 1, 0],
        [F(1, 6), 0, F(2, 3), F(1, 6)],
    ]
    b_imp = [F(1, 6), 0, F(2, 3), F(-5, 6), 1]
    b_exp = [F(1, 6), 0, F(2, 3), F(1, 6), 0]
    return _pair(c, a_imp, a_exp, b_imp, b_exp)


def imex4_tableau() -> ButcherPair:
    """Fourth-order pair, 7 stages."""
    c = [0, F(1, 3), F(1, 3), F(1, 2), F(1, 2), 1, 1]
    a_imp = [
        [0],
        [F(-1, 6), F(1, 2)],
        [F(1, 6), F(-1, 3), F(1, 2)],
        [F(3, 8), F(-3, 8), 0, F(1, 2)],
        [F(1, 8), 0, F(3, 8), F(-1, 2), F(1, 2)],
        [F(-1, 2), 0, 3, -3, 1, F(1, 2)],
        [F(1, 6), 0, 0, 0, F(2, 3), F(-1, 2), F(2, 3)],
    ]
    a_exp = [
        [],
        [F(1, 3)],
        [F(1, 6), F(1, 6)],
        [F(1, 8), 0, F(3, 8)],
        [F(1, 8), 0, F(3, 8), 0],
        [F(1, 2), 0, F(-3, 2), 0, 2],
        [F(1, 6), 0, 0, 0, F(2, 3), F(1, 6)],
    ]
    b_imp = [F(1, 6), 0, 0, 0, F(2, 3), F(-1, 2), F(2, 3)]
    b_exp = [F(1, 6), 0, 0, 0, F(2, 3), F(1, 6), 0]
    return _pair(c, a_imp, a_exp, b_imp, b_exp)
