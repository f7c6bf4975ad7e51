"""Pipelined deferred-correction marching.

Level 0 predicts with the first-order forward-backward Euler scheme; level j
(j >= 1) corrects level j-1 by stepping the integral error equation with the
same first-order scheme, which after algebra updates the revised solution
directly:

    eta_j(T) - dt*f_stiff(t_T, eta_j(T))
        = eta_j(T-1) + dt*f_nonstiff(t_{T-1}, eta_j(T-1))
        - dt*f_stiff(t_T, eta_{j-1}(T)) - dt*f_nonstiff(t_{T-1}, eta_{j-1}(T-1))
        + sum_k w_k * (f_stiff + f_nonstiff)(stencil node k, eta_{j-1})

Each level raises the order by one. Two executors share the identical
per-step arithmetic: ``run_serial`` marches level by level over the whole
interval, ``run_pipelined`` runs the levels concurrently, staggered in time,
coordinating through bounded single-writer/single-reader buffers. Their
outputs are bitwise identical, which doubles as the correctness gate for the
parallel path.
"""

import threading
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .errors import ConfigError, NonFiniteStateError, PipelineProtocolError
from .ivp import SplitIVP
from .quadrature import MAX_LEVEL, startup_weights, steady_weights
from .steppers import ImplicitSolver

__all__ = [
    "RidcConfig",
    "RidcSolution",
    "LevelBuffer",
    "LevelWindow",
    "startup_delay",
    "restart_partition",
    "predict_step",
    "correct_step",
    "run_serial",
    "run_pipelined",
]

MAX_LEVELS = MAX_LEVEL + 1  # predictor plus up to MAX_LEVEL corrections


def startup_delay(j: int) -> int:
    """Steps level j must wait before entering the pipeline: j*(j+1)/2."""
    if j < 0:
        raise ValueError("level must be non-negative")
    return j * (j + 1) // 2


@dataclass
class RidcConfig:
    """One run: total order = levels (1 predictor + levels-1 correctors)."""

    levels: int
    steps: int                   # total steps across [t_start, t_end]
    restarts: int = 1
    workers: int = 1
    newton_tol: float = 1e-12
    newton_max_iter: int = 25
    record_trajectory: bool = False
    trace: bool = False
    watchdog_seconds: float = 30.0

    def __post_init__(self):
        if not 1 <= self.levels <= MAX_LEVELS:
            raise ConfigError(f"levels must be in 1..{MAX_LEVELS}, got {self.levels}")
        if self.steps < 1 or self.restarts < 1:
            raise ConfigError("steps and restarts must be positive")
        if self.steps % self.restarts:
            raise ConfigError(
                f"steps ({self.steps}) must be divisible by restarts ({self.restarts})"
            )
        fill = startup_delay(self.levels) + 1
        per = self.steps // self.restarts
        if per < fill:
            raise ConfigError(
                f"each restart interval has {per} steps; {self.levels} levels need >= {fill}"
            )
        if not 1 <= self.workers <= self.levels:
            raise ConfigError(f"workers must be in 1..levels, got {self.workers}")

    @property
    def steps_per_interval(self) -> int:
        return self.steps // self.restarts


@dataclass
class RidcSolution:
    final_state: np.ndarray
    level_finals: list
    wall_seconds: float
    trajectory: Optional[np.ndarray] = None
    trace: Optional[list] = None


def restart_partition(t_start: float, t_end: float, restarts: int, total_steps: int):
    """Uniform sub-intervals sharing one global dt; each restarts the pipeline."""
    if restarts < 1 or total_steps < 1:
        raise ConfigError("restarts and total_steps must be positive")
    if total_steps % restarts:
        raise ConfigError(
            f"total_steps ({total_steps}) must be divisible by restarts ({restarts})"
        )
    per = total_steps // restarts
    dt = (t_end - t_start) / total_steps
    parts = []
    for r in range(restarts):
        ta = t_start + r * per * dt
        tb = t_end if r == restarts - 1 else t_start + (r + 1) * per * dt
        parts.append((ta, tb, per))
    return parts


# ---------------------------------------------------------------------------
# shared per-step arithmetic (both executors call exactly these)

def _window_span(level: int, target: int):
    """Producer steps a level-``level`` correction of step ``target`` reads."""
    if target < level:
        return 0, level, "startup"
    return target - level, target, "steady"


def _orient(fs_rows: np.ndarray, fn_rows: np.ndarray, regime: str, target: int):
    """Rows arrive in ascending step order; reorder to the weight convention."""
    if regime == "steady":
        return (
            np.ascontiguousarray(fs_rows[::-1]),
            np.ascontiguousarray(fn_rows[::-1]),
            0,
            1,
        )
    return np.ascontiguousarray(fs_rows), np.ascontiguousarray(fn_rows), target, target - 1


class _WeightTables:
    """Per-level quadrature weights, precomputed once per (levels, dt)."""

    def __init__(self, levels: int, dt: float):
        self.steady = {j: steady_weights(j, dt).weights for j in range(1, levels)}
        self.startup = {
            (j, n): startup_weights(j, n, dt).weights
            for j in range(2, levels)
            for n in range(j - 1)
        }

    def for_step(self, level: int, target: int) -> np.ndarray:
        if target < level:
            return self.startup[(level, target - 1)]
        return self.steady[level]


def _ensure_finite(y: np.ndarray, level: int, target: int) -> None:
    if not np.isfinite(y).all():
        raise NonFiniteStateError(
            f"level {level} produced non-finite entries at step {target}"
        )


def _predict_core(ivp, solver, t_prev, dt, eta, fn_eta, level, target, want_fs):
    rhs = kernels.predictor_rhs(eta, fn_eta, dt)
    t_new = t_prev + dt
    eta_new = solver.solve_shifted(ivp, t_new, dt, rhs)
    _ensure_finite(eta_new, level, target)
    fs_new = solver.stiff_value(ivp, t_new, eta_new) if want_fs else None
    fn_new = ivp.eval_nonstiff(t_new, eta_new)
    return eta_new, fs_new, fn_new


def _correct_core(ivp, solver, t_prev, dt, eta, fn_eta, fs_win, fn_win,
                  i_new, i_old, w, level, target, want_fs):
    rhs = kernels.corrector_rhs(
        eta, fn_eta, fs_win[i_new], fn_win[i_old], w, fs_win, fn_win, dt
    )
    t_new = t_prev + dt
    eta_new = solver.solve_shifted(ivp, t_new, dt, rhs)
    _ensure_finite(eta_new, level, target)
    fs_new = solver.stiff_value(ivp, t_new, eta_new) if want_fs else None
    fn_new = ivp.eval_nonstiff(t_new, eta_new)
    return eta_new, fs_new, fn_new


# ---------------------------------------------------------------------------
# public single-step operations

def predict_step(ivp: SplitIVP, t_n: float, eta_n: np.ndarray, dt: float,
                 solver: ImplicitSolver):
    """One predictor step; returns (eta_new, f_stiff, f_nonstiff) at the new node."""
    fn_eta = ivp.eval_nonstiff(t_n, eta_n)
    return _predict_core(ivp, solver, t_n, dt, eta_n, fn_eta, 0, -1, True)


@dataclass(frozen=True)
class LevelWindow:
    """Previous-level right-hand sides at the stencil nodes, in weight order.

    ``new_index`` locates t_{n+1} in the window, ``old_index`` locates t_n.
    """

    fs: np.ndarray
    fn: np.ndarray
    new_index: int
    old_index: int


def correct_step(level: int, ivp: SplitIVP, t_n: float, eta_n: np.ndarray,
                 prev_level_window: LevelWindow, weights, dt: float,
                 solver: ImplicitSolver):
    """One corrector step for ``level`` >= 1; returns (eta_new, f_stiff, f_nonstiff)."""
    if level < 1:
        raise ValueError("correct_step needs level >= 1")
    w = np.asarray(getattr(weights, "weights", weights), dtype=np.float64)
    win = prev_level_window
    if win.fs.shape[0] != w.shape[0] or win.fn.shape[0] != w.shape[0]:
        raise PipelineProtocolError(
            f"window holds {win.fs.shape[0]} nodes, weights need {w.shape[0]}"
        )
    if not (0 <= win.new_index < w.shape[0] and 0 <= win.old_index < w.shape[0]):
        raise PipelineProtocolError("window indices out of range")
    fn_eta = ivp.eval_nonstiff(t_n, eta_n)
    return _correct_core(
        ivp, solver, t_n, dt, eta_n, fn_eta, win.fs, win.fn,
        win.new_index, win.old_index, w, level, -1, True,
    )


# ---------------------------------------------------------------------------
# serial executor

def _serial_interval(ivp, solver, ta, dt, steps, levels, tables, state0,
                     traj: Optional[list]):
    n = ivp.dimension
    fs0 = solver.stiff_value(ivp, ta, state0)
    fn0 = ivp.eval_nonstiff(ta, state0)
    prev_fs = prev_fn = None
    finals = []
    for j in range(levels):
        top = j == levels - 1
        want_fs = not top
        if not top:
            cur_fs = np.empty((steps + 1, n))
            cur_fn = np.empty((steps + 1, n))
            cur_fs[0] = fs0
            cur_fn[0] = fn0
        eta = np.array(state0)
        fn_cur = fn0
        for target in range(1, steps + 1):
            t_prev = ta + (target - 1) * dt
            if j == 0:
                eta, fs_new, fn_new = _predict_core(
                    ivp, solver, t_prev, dt, eta, fn_cur, j, target, want_fs
                )
            else:
                lo, hi, regime = _window_span(j, target)
                fs_win, fn_win, i_new, i_old = _orient(
                    prev_fs[lo:hi + 1], prev_fn[lo:hi + 1], regime, target
                )
                eta, fs_new, fn_new = _correct_core(
                    ivp, solver, t_prev, dt, eta, fn_cur, fs_win, fn_win,
                    i_new, i_old, tables.for_step(j, target), j, target, want_fs,
                )
            if not top:
                cur_fs[target] = fs_new
                cur_fn[target] = fn_new
            fn_cur = fn_new
            if top and traj is not None:
                traj.append(eta.copy())
        finals.append(eta)
        if not top:
            prev_fs, prev_fn = cur_fs, cur_fn
    return finals


# ---------------------------------------------------------------------------
# pipelined executor

class LevelBuffer:
    """Bounded sliding window of one level's published steps.

    Single writer (the owning level), single reader (the level above). Holds
    ``level + 2`` slots: exactly the reader's stencil plus the one step the
    writer may run ahead. All methods must be called with the engine's shared
    condition lock held.
    """

    def __init__(self, level: int, dim: int):
        self.level = level
        self.capacity = level + 2
        self._states = np.empty((self.capacity, dim))
        self._fs = np.empty((self.capacity, dim))
        self._fn = np.empty((self.capacity, dim))
        self.watermark = -1   # highest published step
        self.released = 0     # steps below this are reclaimable

    def can_publish(self, step: int) -> bool:
        return step - self.released < self.capacity

    def publish(self, step: int, state, fs, fn) -> None:
        if step != self.watermark + 1:
            raise PipelineProtocolError(
                f"level {self.level} published step {step} after {self.watermark}"
            )
        if not self.can_publish(step):
            raise PipelineProtocolError(
                f"level {self.level} overran its buffer at step {step}"
            )
        slot = step % self.capacity
        self._states[slot] = state
        self._fs[slot] = fs
        self._fn[slot] = fn
        self.watermark = step

    def claim_rows(self, lo: int, hi: int):
        """Copy published steps lo..hi (ascending). Caller checked the watermark."""
        if hi > self.watermark or lo <= self.watermark - self.capacity:
            raise PipelineProtocolError(
                f"level {self.level} window [{lo}, {hi}] unavailable "
                f"(watermark {self.watermark}, released {self.released})"
            )
        idx = [s % self.capacity for s in range(lo, hi + 1)]
        return self._fs[idx], self._fn[idx]

    def release_through(self, below: int) -> None:
        self.released = max(self.released, below)


class _Cancelled(Exception):
    pass


class _LevelRun:
    __slots__ = ("j", "eta", "fn_cur", "next_target", "done")

    def __init__(self, j: int, eta: np.ndarray, fn0: np.ndarray):
        self.j = j
        self.eta = eta
        self.fn_cur = fn0
        self.next_target = 1
        self.done = False


def _pipelined_interval(ivp, solver, ta, dt, steps, cfg, tables, state0,
                        traj: Optional[list], trace: Optional[list]):
    levels = cfg.levels
    top = levels - 1
    fs0 = solver.stiff_value(ivp, ta, state0)
    fn0 = ivp.eval_nonstiff(ta, state0)

    cond = threading.Condition()
    buffers = [LevelBuffer(j, ivp.dimension) for j in range(levels - 1)]
    for buf in buffers:
        buf.publish(0, state0, fs0, fn0)  # step 0: initial data on every level
    runs = [_LevelRun(j, np.array(state0), fn0) for j in range(levels)]
    failures: list[BaseException] = []

    def _ready(run: _LevelRun) -> bool:
        target = run.next_target
        if run.j > 0:
            _, hi, _ = _window_span(run.j, target)
            if buffers[run.j - 1].watermark < hi:
                return False
        if run.j < top and not buffers[run.j].can_publish(target):
            return False
        return True

    def _attempt(run: _LevelRun) -> bool:
        with cond:
            if failures:
                raise _Cancelled
            if run.done or not _ready(run):
                return False
            target = run.next_target
            if run.j > 0:
                lo, hi, regime = _window_span(run.j, target)
                fs_rows, fn_rows = buffers[run.j - 1].claim_rows(lo, hi)
                # steps below the next window's low edge are dead for us
                buffers[run.j - 1].release_through(max(0, target + 1 - run.j))
                cond.notify_all()
        t_prev = ta + (target - 1) * dt
        want_fs = run.j < top
        if run.j == 0:
            eta_new, fs_new, fn_new = _predict_core(
                ivp, solver, t_prev, dt, run.eta, run.fn_cur, run.j, target, want_fs
            )
        else:
            fs_win, fn_win, i_new, i_old = _orient(fs_rows, fn_rows, regime, target)
            eta_new, fs_new, fn_new = _correct_core(
                ivp, solver, t_prev, dt, run.eta, run.fn_cur, fs_win, fn_win,
                i_new, i_old, tables.for_step(run.j, target), run.j, target, want_fs,
            )
        with cond:
            if run.j < top:
                buffers[run.j].publish(target, eta_new, fs_new, fn_new)
            elif traj is not None:
                traj.append(eta_new.copy())
            if trace is not None:
                trace.append((len(trace), run.j, target))
            run.eta = eta_new
            run.fn_cur = fn_new
            run.next_target += 1
            if run.next_target > steps:
                run.done = True
            cond.notify_all()
        return True

    def _worker(owned):
        try:
            while True:
                progressed = False
                alive = False
                for run in owned:
                    if run.done:
                        continue
                    alive = True
                    if _attempt(run):
                        progressed = True
                if not alive:
                    return
                if not progressed:
                    with cond:
                        if failures:
                            return
                        if any(not r.done and _ready(r) for r in owned):
                            continue
                        if not cond.wait(timeout=cfg.watchdog_seconds):
                            raise PipelineProtocolError(
                                "pipeline made no progress within "
                                f"{cfg.watchdog_seconds}s; waiting levels: "
                                + ", ".join(
                                    f"{r.j}@{r.next_target}" for r in owned if not r.done
                                )
                            )
        except _Cancelled:
            return
        except BaseException as exc:
            with cond:
                failures.append(exc)
                cond.notify_all()

    owned_by = [[runs[j] for j in range(levels) if j % cfg.workers == w]
                for w in range(cfg.workers)]
    threads = [
        threading.Thread(target=_worker, args=(owned,), name=f"ridc-worker-{w}")
        for w, owned in enumerate(owned_by)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if failures:
        raise failures[0]
    return [run.eta for run in runs]


# ---------------------------------------------------------------------------
# run drivers

def _prepare(ivp: SplitIVP, cfg: RidcConfig, solver: Optional[ImplicitSolver]):
    if solver is None:
        solver = ImplicitSolver(cfg.newton_tol, cfg.newton_max_iter)
    dt = (ivp.t_end - ivp.t_start) / cfg.steps
    if ivp.stiff_linear_operator is not None and not solver.force_newton:
        solver.prepare(ivp.stiff_linear_operator, [dt])
    tables = _WeightTables(cfg.levels, dt)
    parts = restart_partition(ivp.t_start, ivp.t_end, cfg.restarts, cfg.steps)
    return solver, dt, tables, parts


def run_serial(ivp: SplitIVP, config: RidcConfig,
               solver: Optional[ImplicitSolver] = None) -> RidcSolution:
    """Reference executor: level by level over each interval, one thread."""
    solver, dt, tables, parts = _prepare(ivp, config, solver)
    traj = [ivp.initial_state.copy()] if config.record_trajectory else None
    state = np.array(ivp.initial_state)
    t0 = time.perf_counter()
    finals = None
    for ta, _tb, steps in parts:
        finals = _serial_interval(ivp, solver, ta, dt, steps, config.levels,
                                  tables, state, traj)
        state = finals[-1]
    wall = time.perf_counter() - t0
    return RidcSolution(
        final_state=state,
        level_finals=finals,
        wall_seconds=wall,
        trajectory=np.array(traj) if traj is not None else None,
    )


def run_pipelined(ivp: SplitIVP, config: RidcConfig,
                  solver: Optional[ImplicitSolver] = None) -> RidcSolution:
    """Concurrent executor: one worker per level (or levels shared round-robin).

    Bitwise identical to :func:`run_serial` for every worker count; each
    level's arithmetic depends only on published immutable slots, never on
    timing.
    """
    solver, dt, tables, parts = _prepare(ivp, config, solver)
    traj = [ivp.initial_state.copy()] if config.record_trajectory else None
    trace = [] if config.trace else None
    state = np.array(ivp.initial_state)
    t0 = time.perf_counter()
    finals = None
    for ta, _tb, steps in parts:
        finals = _pipelined_interval(ivp, solver, ta, dt, steps, config, tables,
                                     state, traj, trace)
        state = finals[-1]
    wall = time.perf_counter() - t0
    return RidcSolution(
        final_state=state,
        level_finals=finals,
        wall_seconds=wall,
        trajectory=np.array(traj) if traj is not None else None,
        trace=trace,
    )
