"""Single-step semi-implicit integrators.

``fbe_step`` is the first-order scheme (backward Euler on the stiff part,
forward Euler on the non-stiff part); ``ark_step`` advances any coupled
DIRK/explicit tableau. Every implicit relation has the shape

    y - coeff * f_stiff(t, y) = rhs,

which an :class:`ImplicitSolver` resolves either by a cached QR solve of
(I - coeff*L) when the stiff part is linear, or by a damped-free Newton
iteration with a forward-difference Jacobian otherwise.
"""

import threading

import numpy as np

from . import kernels
from .errors import DimensionMismatch, NewtonConvergenceError, NonFiniteStateError
from .ivp import SplitIVP
from .linalg import QRFactorization, qr_factor, qr_solve
from .tableaus import ButcherPair

__all__ = ["ImplicitSolver", "fbe_step", "ark_step", "integrate_ark"]

_SQRT_EPS = float(np.sqrt(np.finfo(np.float64).eps))


class ImplicitSolver:
    """Bundles cached shifted-operator factorizations and Newton settings.

    Factorizations of (I - coeff*L) are keyed by the operator identity and
    the float coefficient, so one solver instance amortizes them across all
    steps, stages, and correction levels of a run. Insertion is guarded by a
    lock; lookups of existing entries are unsynchronized reads, safe because
    entries are immutable once stored.
    """

    def __init__(self, newton_tol: float = 1e-12, newton_max_iter: int = 25,
                 force_newton: bool = False):
        self.newton_tol = newton_tol
        self.newton_max_iter = newton_max_iter
        self.force_newton = force_newton
        self._cache: dict[tuple[int, float], QRFactorization] = {}
        self._operators: dict[int, np.ndarray] = {}  # keeps id() keys alive
        self._lock = threading.Lock()

    def factorization(self, operator: np.ndarray, coeff: float) -> QRFactorization:
        key = (id(operator), float(coeff))
        fact = self._cache.get(key)
        if fact is None:
            with self._lock:
                fact = self._cache.get(key)
                if fact is None:
                    n = operator.shape[0]
                    fact = qr_factor(np.eye(n) - coeff * operator)
                    self._operators[id(operator)] = operator
                    self._cache[key] = fact
        return fact

    def prepare(self, operator: np.ndarray, coeffs) -> None:
        """Pre-factor every shifted system so timed runs never factor."""
        for c in coeffs:
            self.factorization(operator, c)

    def stiff_value(self, ivp: SplitIVP, t: float, y: np.ndarray) -> np.ndarray:
        op = ivp.stiff_linear_operator
        if op is not None and not self.force_newton:
            return kernels.mat_vec(op, y)
        return ivp.eval_stiff(t, y)

    def solve_shifted(self, ivp: SplitIVP, t: float, coeff: float,
                      rhs: np.ndarray) -> np.ndarray:
        """Solve y - coeff * f_stiff(t, y) = rhs for y."""
        op = ivp.stiff_linear_operator
        if op is not None and not self.force_newton:
            return qr_solve(self.factorization(op, coeff), rhs)
        return self._newton(ivp, t, coeff, rhs)

    def _newton(self, ivp: SplitIVP, t: float, coeff: float,
                rhs: np.ndarray) -> np.ndarray:
        n = rhs.shape[0]
        y = rhs.copy()  # explicit guess: exact when the stiff part vanishes
        eye = np.eye(n)
        residual = np.inf
        for _ in range(self.newton_max_iter):
            g = y - coeff * ivp.eval_stiff(t, y) - rhs
            residual = float(np.abs(g).max())
            if residual <= self.newton_tol:
                return y
            jac = np.empty((n, n))
            f0 = ivp.eval_stiff(t, y)
            for i in range(n):
                h = _SQRT_EPS * (1.0 + abs(y[i]))
                yp = y.copy()
                yp[i] += h
                jac[:, i] = (ivp.eval_stiff(t, yp) - f0) / h
            step = qr_solve(qr_factor(eye - coeff * jac), -g)
            y = y + step
        g = y - coeff * ivp.eval_stiff(t, y) - rhs
        residual = float(np.abs(g).max())
        if residual <= self.newton_tol:
            return y
        raise NewtonConvergenceError(residual, self.newton_max_iter)


def _check_step_args(ivp: SplitIVP, y_n: np.ndarray, dt: float) -> None:
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if y_n.shape[0] != ivp.dimension:
        raise DimensionMismatch(f"state has length {y_n.shape[0]}, expected {ivp.dimension}")


def fbe_step(ivp: SplitIVP, t_n: float, y_n: np.ndarray, dt: float,
             solver: ImplicitSolver) -> np.ndarray:
    """Forward-backward Euler: implicit in the stiff part at t_n+dt, explicit otherwise."""
    _check_step_args(ivp, y_n, dt)
    rhs = kernels.predictor_rhs(y_n, ivp.eval_nonstiff(t_n, y_n), dt)
    return solver.solve_shifted(ivp, t_n + dt, dt, rhs)


def ark_step(ivp: SplitIVP, tab: ButcherPair, t_n: float, y_n: np.ndarray,
             dt: float, solver: ImplicitSolver) -> np.ndarray:
    """One step of a coupled DIRK/explicit pair.

    Stages resolve in order; each implicit stage is a single shifted solve
    with coefficient a_implicit[i, i] * dt (skipped when that entry is zero).
    """
    _check_step_args(ivp, y_n, dt)
    s = tab.stages
    n = ivp.dimension
    ks = np.empty((s, n))
    kn = np.empty((s, n))
    for i in range(s):
        rhs = kernels.stage_accumulate(y_n, ks, kn, tab.a_implicit[i], tab.a_explicit[i], i, dt)
        t_i = t_n + tab.c[i] * dt
        aii = tab.a_implicit[i, i]
        y_stage = rhs if aii == 0.0 else solver.solve_shifted(ivp, t_i, aii * dt, rhs)
        ks[i] = solver.stiff_value(ivp, t_i, y_stage)
        kn[i] = ivp.eval_nonstiff(t_i, y_stage)
    return kernels.stage_accumulate(y_n, ks, kn, tab.b_implicit, tab.b_explicit, s, dt)


def integrate_ark(ivp: SplitIVP, tab: ButcherPair, t0: float, y0: np.ndarray,
                  t1: float, steps: int, solver: ImplicitSolver) -> np.ndarray:
    """March ``steps`` uniform ARK steps from (t0, y0) to t1."""
    if steps < 1:
        raise ValueError("steps must be positive")
    dt = (t1 - t0) / steps
    y = y0.copy()
    for k in range(steps):
        y = ark_step(ivp, tab, t0 + k * dt, y, dt, solver)
        if not np.isfinite(y).all():
            raise NonFiniteStateError(f"ARK march produced non-finite entries at step {k + 1}")
    return y
