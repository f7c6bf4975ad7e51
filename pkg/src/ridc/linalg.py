"""Dense linear algebra used by the implicit solves.

Every implicit system here has the form (I - a*dt*L) x = b with a fixed
matrix per run, so each distinct matrix is factored once (Householder QR)
and every subsequent solve is one matrix-vector product with Q^T plus a back
substitution. The per-solve kernels live in :mod:`ridc.kernels` so they run
on either backend.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DimensionMismatch, SingularMatrixError

__all__ = ["QRFactorization", "qr_factor", "qr_solve", "mat_vec"]


@dataclass(frozen=True)
class QRFactorization:
    """Q orthogonal, R upper triangular, with Q^T stored contiguously for solves."""

    q: np.ndarray
    r: np.ndarray
    qt: np.ndarray

    @property
    def dimension(self) -> int:
        return self.r.shape[0]


def qr_factor(m: np.ndarray) -> QRFactorization:
    """Householder QR of a square nonsingular matrix.

    Raises :class:`SingularMatrixError` naming the first diagonal index of R
    whose magnitude falls below 1e-14 times the infinity norm of ``m``.
    """
    m = np.ascontiguousarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"qr_factor needs a square matrix, got shape {m.shape}")
    if not np.isfinite(m).all():
        raise ValueError("matrix contains NaN or Inf entries")
    q, r = np.linalg.qr(m)
    scale = np.linalg.norm(m, np.inf)
    diag = np.abs(np.diag(r))
    tiny = np.nonzero(diag < 1e-14 * scale)[0]
    if tiny.size:
        idx = int(tiny[0])
        raise SingularMatrixError(idx, float(diag[idx]))
    q = np.ascontiguousarray(q)
    r = np.ascontiguousarray(np.triu(r))
    qt = np.ascontiguousarray(q.T)
    for a in (q, r, qt):
        a.setflags(write=False)
    return QRFactorization(q=q, r=r, qt=qt)


def qr_solve(f: QRFactorization, b: np.ndarray) -> np.ndarray:
    """Solve (QR) x = b as a Q^T product followed by a back substitution."""
    if b.shape[0] != f.dimension:
        raise DimensionMismatch(f"rhs has length {b.shape[0]}, expected {f.dimension}")
    return kernels.back_substitute(f.r, kernels.mat_vec(f.qt, b))


def mat_vec(m: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Dense matrix-vector product."""
    if m.shape[1] != x.shape[0]:
        raise DimensionMismatch(f"matrix is {m.shape}, vector has length {x.shape[0]}")
    return kernels.mat_vec(m, x)
