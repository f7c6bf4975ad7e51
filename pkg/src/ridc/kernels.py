"""Hot numeric kernels with two interchangeable backends.

The default backend compiles the kernels with numba (``@njit`` with
``nogil=True`` so worker threads overlap during the heavy math). Setting the
environment variable ``RIDC_DISABLE_NUMBA=1`` before import selects the pure
numpy fallback instead; the fallback is also picked automatically when numba
is not importable. ``ACTIVE_BACKEND`` records which one won.

Both backends compute the same quantities; they are not required to agree
bitwise with each other (summation order differs), only to a few ulps.
Within one backend results are deterministic, which is what the pipelined
engine's bitwise equivalence gate relies on.
"""

import os
import time

import numpy as np

__all__ = [
    "ACTIVE_BACKEND",
    "mat_vec",
    "back_substitute",
    "predictor_rhs",
    "corrector_rhs",
    "weighted_window_sum",
    "stage_accumulate",
    "burgers_flux",
    "warmup",
    "benchmark",
]


# ---------------------------------------------------------------------------
# numpy backend

def _np_mat_vec(m, x):
    return m @ x


def _np_back_substitute(r, b):
    n = r.shape[0]
    x = np.empty_like(b)
    for i in range(n - 1, -1, -1):
        x[i] = (b[i] - r[i, i + 1:] @ x[i + 1:]) / r[i, i]
    return x


def _np_predictor_rhs(eta, fn_eta, dt):
    return eta + dt * fn_eta


def _np_weighted_window_sum(w, fs_win, fn_win):
    return w @ (fs_win + fn_win)


def _np_corrector_rhs(eta, fn_eta, fs_prev_new, fn_prev_old, w, fs_win, fn_win, dt):
    return (
        eta
        + dt * fn_eta
        - dt * fs_prev_new
        - dt * fn_prev_old
        + w @ (fs_win + fn_win)
    )


def _np_stage_accumulate(y, ks, kn, row_s, row_n, upto, dt):
    out = y.copy()
    for j in range(upto):
        out += dt * row_s[j] * ks[j]
        out += dt * row_n[j] * kn[j]
    return out


def _np_burgers_flux(u, scale):
    # scale = 1/(4*dx); homogeneous Dirichlet ghosts at both ends
    usq = u * u
    out = np.empty_like(u)
    out[0] = -usq[1] * scale
    out[1:-1] = -(usq[2:] - usq[:-2]) * scale
    out[-1] = usq[-2] * scale
    return out


_NUMPY_IMPLS = {
    "mat_vec": _np_mat_vec,
    "back_substitute": _np_back_substitute,
    "predictor_rhs": _np_predictor_rhs,
    "weighted_window_sum": _np_weighted_window_sum,
    "corrector_rhs": _np_corrector_rhs,
    "stage_accumulate": _np_stage_accumulate,
    "burgers_flux": _np_burgers_flux,
}


# ---------------------------------------------------------------------------
# numba backend

def _build_numba_impls():
    from numba import njit

    jit = lambda f: njit(cache=True, nogil=True)(f)

    @jit
    def nb_mat_vec(m, x):
        return np.dot(m, x)

    @jit
    def nb_back_substitute(r, b):
        n = r.shape[0]
        x = np.empty_like(b)
        for i in range(n - 1, -1, -1):
            acc = b[i]
            for j in range(i + 1, n):
                acc -= r[i, j] * x[j]
            x[i] = acc / r[i, i]
        return x

    @jit
    def nb_predictor_rhs(eta, fn_eta, dt):
        n = eta.shape[0]
        out = np.empty(n)
        for i in range(n):
            out[i] = eta[i] + dt * fn_eta[i]
        return out

    @jit
    def nb_weighted_window_sum(w, fs_win, fn_win):
        k, n = fs_win.shape
        out = np.zeros(n)
        for a in range(k):
            wa = w[a]
            for i in range(n):
                out[i] += wa * (fs_win[a, i] + fn_win[a, i])
        return out

    @jit
    def nb_corrector_rhs(eta, fn_eta, fs_prev_new, fn_prev_old, w, fs_win, fn_win, dt):
        k, n = fs_win.shape
        out = np.empty(n)
        for i in range(n):
            out[i] = eta[i] + dt * fn_eta[i] - dt * fs_prev_new[i] - dt * fn_prev_old[i]
        for a in range(k):
            wa = w[a]
            for i in range(n):
                out[i] += wa * (fs_win[a, i] + fn_win[a, i])
        return out

    @jit
    def nb_stage_accumulate(y, ks, kn, row_s, row_n, upto, dt):
        n = y.shape[0]
        out = y.copy()
        for j in range(upto):
            cs = dt * row_s[j]
            cn = dt * row_n[j]
            for i in range(n):
                out[i] += cs * ks[j, i] + cn * kn[j, i]
        return out

    @jit
    def nb_burgers_flux(u, scale):
        n = u.shape[0]
        out = np.empty(n)
        out[0] = -(u[1] * u[1]) * scale
        for i in range(1, n - 1):
            out[i] = -(u[i + 1] * u[i + 1] - u[i - 1] * u[i - 1]) * scale
        out[n - 1] = (u[n - 2] * u[n - 2]) * scale
        return out

    return {
        "mat_vec": nb_mat_vec,
        "back_substitute": nb_back_substitute,
        "predictor_rhs": nb_predictor_rhs,
        "weighted_window_sum": nb_weighted_window_sum,
        "corrector_rhs": nb_corrector_rhs,
        "stage_accumulate": nb_stage_accumulate,
        "burgers_flux": nb_burgers_flux,
    }


def _numba_disabled() -> bool:
    return os.environ.get("RIDC_DISABLE_NUMBA", "").strip().lower() not in ("", "0", "false")


if _numba_disabled():
    ACTIVE_BACKEND = "numpy"
    _IMPLS = _NUMPY_IMPLS
else:
    try:
        _IMPLS = _build_numba_impls()
        ACTIVE_BACKEND = "numba"
    except ImportError:
        ACTIVE_BACKEND = "numpy"
        _IMPLS = _NUMPY_IMPLS

mat_vec = _IMPLS["mat_vec"]
back_substitute = _IMPLS["back_substitute"]
predictor_rhs = _IMPLS["predictor_rhs"]
weighted_window_sum = _IMPLS["weighted_window_sum"]
corrector_rhs = _IMPLS["corrector_rhs"]
stage_accumulate = _IMPLS["stage_accumulate"]
burgers_flux = _IMPLS["burgers_flux"]


def backends() -> dict:
    """Both implementation tables, keyed by backend name (numba only if importable)."""
    tables = {"numpy": _NUMPY_IMPLS}
    if ACTIVE_BACKEND == "numba":
        tables["numba"] = _IMPLS
    else:
        try:
            tables["numba"] = _build_numba_impls()
        except ImportError:
            pass
    return tables


def warmup(dim: int = 4) -> None:
    """Trigger JIT compilation on tiny inputs so timed runs never pay it."""
    rng = np.random.default_rng(0)
    m = np.eye(dim) + 0.01 * rng.standard_normal((dim, dim))
    r = np.triu(m)
    x = rng.standard_normal(dim)
    w = rng.standard_normal(3)
    win = rng.standard_normal((3, dim))
    mat_vec(m, x)
    back_substitute(r, x)
    predictor_rhs(x, x, 0.1)
    weighted_window_sum(w, win, win)
    corrector_rhs(x, x, x, x, w, win, win, 0.1)
    stage_accumulate(x, win, win, w, w, 2, 0.1)
    burgers_flux(x, 0.25)


def benchmark(size: int = 1000, window: int = 4, reps: int = 20) -> list[dict]:
    """Time every kernel under each available backend.

    Returns one record per (kernel, backend) with the best-of-``reps`` wall
    time in microseconds. Used by the ``ridc kernels`` subcommand.
    """
    rng = np.random.default_rng(12345)
    m = rng.standard_normal((size, size))
    r = np.triu(rng.standard_normal((size, size))) + size * np.eye(size)
    x = rng.standard_normal(size)
    w = rng.standard_normal(window)
    win_a = rng.standard_normal((window, size))
    win_b = rng.standard_normal((window, size))
    calls = {
        "mat_vec": (m, x),
        "back_substitute": (r, x),
        "predictor_rhs": (x, x, 1e-3),
        "weighted_window_sum": (w, win_a, win_b),
        "corrector_rhs": (x, x, x, x, w, win_a, win_b, 1e-3),
        "stage_accumulate": (x, win_a, win_b, w, w, window, 1e-3),
        "burgers_flux": (x, 0.25),
    }
    records = []
    for backend, table in sorted(backends().items()):
        for name, args in calls.items():
            fn = table[name]
            fn(*args)  # warm (JIT + caches)
            best = np.inf
            for _ in range(reps):
                t0 = time.perf_counter()
                fn(*args)
                best = min(best, time.perf_counter() - t0)
            records.append({"kernel": name, "backend": backend, "best_us": best * 1e6})
    return records
