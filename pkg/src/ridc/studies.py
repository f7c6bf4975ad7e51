"""Benchmark studies: convergence sweeps, strong scaling, restart trends.

Every study integrates one of the method-of-lines problems, measures errors
against a heavily refined fourth-order reference, and reports rows that can
be rendered as a table or emitted as CSV. Speedup tables are published only
after the bitwise serial/pipelined equivalence gate passes for every worker
count; a mismatch is a hard failure, not a warning.
"""

import csv
import os
import re
import statistics
import time
from dataclasses import dataclass, field
from math import log
from typing import Optional

import numpy as np

from . import kernels
from .engine import RidcConfig, run_pipelined, run_serial
from .errors import ConfigError, DeterminismError, SOLVER_FAILURES
from .problems import (
    AdvectionDiffusionSpec,
    BurgersSpec,
    build_advection_diffusion,
    build_burgers,
    error_norms,
    reference_solution,
)
from .steppers import ImplicitSolver, integrate_ark
from .tableaus import imex3_tableau, imex4_tableau

__all__ = [
    "StudyConfig",
    "ResultRow",
    "SpeedupRow",
    "CSV_HEADER",
    "available_parallelism",
    "make_system",
    "scheme_levels",
    "integrate_scheme",
    "run_convergence",
    "run_speedup",
    "run_restart_study",
    "emit_csv",
    "fit_order",
]

PROBLEMS = ("adv-diff", "burgers")
_RIDC_RE = re.compile(r"^ridc-(\d+)$")
CSV_HEADER = "scheme,steps,dt,error_inf,error_l2,wall_ms,workers,restarts,observed_order"

# desk-scale defaults keep the full study suite within minutes
_DESK = {
    "adv-diff": {"dx": 1.0 / 200, "t_end": 4.0},
    "burgers": {"dx": 1.0 / 500, "t_end": 1.0},
}
_PAPER = {
    "adv-diff": {"dx": 1.0 / 1000, "t_end": 40.0},
    "burgers": {"dx": 1.0 / 1000, "t_end": 1.0},
}


def scheme_levels(scheme: str) -> Optional[int]:
    """Correction-level count for pipelined schemes, None for the ARK references."""
    if scheme == "fbe":
        return 1
    if scheme == "ridc4-fbe":
        return 4
    m = _RIDC_RE.match(scheme)
    if m:
        p = int(m.group(1))
        if not 2 <= p <= 12:
            raise ConfigError(f"ridc order must be in 2..12, got {p}")
        return p
    if scheme in ("imex3", "imex4"):
        return None
    raise ConfigError(f"unknown scheme {scheme!r}")


@dataclass
class StudyConfig:
    problem: str = "adv-diff"
    scheme: str = "ridc4-fbe"
    step_counts: tuple = (100, 200, 400, 800)
    workers: int = 1
    restarts: int = 1
    norm: str = "inf"
    dx: Optional[float] = None
    t_end: Optional[float] = None
    paper_scale: bool = False
    out: Optional[str] = None
    refinement: int = 8
    reps: int = 3

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(f"unknown problem {self.problem!r}; pick from {PROBLEMS}")
        scheme_levels(self.scheme)  # validates
        counts = tuple(int(s) for s in self.step_counts)
        if not counts or any(b <= a for a, b in zip(counts, counts[1:])):
            raise ConfigError("step counts must be non-empty and strictly increasing")
        self.step_counts = counts
        if self.norm not in ("inf", "l2"):
            raise ConfigError(f"norm must be 'inf' or 'l2', got {self.norm!r}")
        if self.workers < 1 or self.restarts < 1 or self.reps < 1:
            raise ConfigError("workers, restarts and reps must be positive")


@dataclass
class ResultRow:
    scheme: str
    steps: int
    dt: float
    error_inf: float
    error_l2: float
    wall_ms: float
    workers: int
    restarts: int
    observed_order: Optional[float] = None


@dataclass
class SpeedupRow:
    workers: int
    wall_ms: float
    speedup: float


def available_parallelism() -> int:
    """Detected core count; RIDC_FORCE_PARALLELISM overrides it (CI smoke runs)."""
    env = os.environ.get("RIDC_FORCE_PARALLELISM", "").strip()
    if env:
        try:
            forced = int(env)
        except ValueError as exc:
            raise ConfigError(f"RIDC_FORCE_PARALLELISM={env!r} is not an integer") from exc
        if forced < 1:
            raise ConfigError("RIDC_FORCE_PARALLELISM must be positive")
        return forced
    return os.cpu_count() or 1


def make_system(cfg: StudyConfig):
    base = (_PAPER if cfg.paper_scale else _DESK)[cfg.problem]
    dx = cfg.dx if cfg.dx is not None else base["dx"]
    t_end = cfg.t_end if cfg.t_end is not None else base["t_end"]
    if cfg.problem == "adv-diff":
        return build_advection_diffusion(AdvectionDiffusionSpec(dx=dx, t_end=t_end))
    return build_burgers(BurgersSpec(dx=dx, t_end=t_end))


def integrate_scheme(system, scheme: str, steps: int, workers: int = 1,
                     restarts: int = 1, solver: Optional[ImplicitSolver] = None):
    """Integrate to the system's end time; returns (final_state, wall_seconds).

    Wall time covers the marching only; factorizations are prepared first.
    """
    ivp = system.ivp
    if solver is None:
        solver = ImplicitSolver()
    levels = scheme_levels(scheme)
    if levels is not None:
        cfg = RidcConfig(levels=levels, steps=steps, restarts=restarts,
                         workers=min(workers, levels))
        sol = run_pipelined(ivp, cfg, solver) if cfg.workers > 1 else run_serial(ivp, cfg, solver)
        return sol.final_state, sol.wall_seconds
    tab = imex3_tableau() if scheme == "imex3" else imex4_tableau()
    dt = (ivp.t_end - ivp.t_start) / steps
    if ivp.stiff_linear_operator is not None:
        coeffs = {aii * dt for aii in np.diag(tab.a_implicit) if aii != 0.0}
        solver.prepare(ivp.stiff_linear_operator, sorted(coeffs))
    t0 = time.perf_counter()
    final = integrate_ark(ivp, tab, ivp.t_start, np.array(ivp.initial_state),
                          ivp.t_end, steps, solver)
    return final, time.perf_counter() - t0


def _study_reference(system, cfg: StudyConfig, solver: ImplicitSolver,
                     base_steps: int) -> np.ndarray:
    return reference_solution(system, system.ivp.t_end, cfg.refinement,
                              base_steps, solver)


def run_convergence(cfg: StudyConfig, system=None, reference=None) -> list[ResultRow]:
    """Error and wall time per step count, with pairwise observed orders."""
    if system is None:
        system = make_system(cfg)
    solver = ImplicitSolver()
    kernels.warmup()
    if reference is None:
        reference = _study_reference(system, cfg, solver, max(cfg.step_counts))
    span = system.ivp.t_end - system.ivp.t_start
    rows: list[ResultRow] = []
    prev: Optional[tuple[int, float]] = None
    for steps in cfg.step_counts:
        dt = span / steps
        try:
            final, wall = integrate_scheme(system, cfg.scheme, steps,
                                           cfg.workers, cfg.restarts, solver)
        except SOLVER_FAILURES:
            rows.append(ResultRow(cfg.scheme, steps, dt, float("nan"), float("nan"),
                                  float("nan"), cfg.workers, cfg.restarts))
            prev = None
            continue
        e_inf, e_l2 = error_norms(final, reference, system.dx)
        err = e_inf if cfg.norm == "inf" else e_l2
        order = None
        if prev is not None and err > 0.0 and prev[1] > 0.0:
            order = log(prev[1] / err) / log(steps / prev[0])
        rows.append(ResultRow(cfg.scheme, steps, dt, e_inf, e_l2, wall * 1e3,
                              cfg.workers, cfg.restarts, order))
        prev = (steps, err)
    return rows


def fit_order(rows: list[ResultRow], norm: str = "inf") -> float:
    """Least-squares slope of log(error) vs log(dt) over the successful rows."""
    pts = [
        (log(r.dt), log(r.error_inf if norm == "inf" else r.error_l2))
        for r in rows
        if np.isfinite(r.error_inf) and (r.error_inf if norm == "inf" else r.error_l2) > 0.0
    ]
    if len(pts) < 2:
        raise ValueError("need at least two finite error points to fit an order")
    xs, ys = zip(*pts)
    slope = np.polyfit(xs, ys, 1)[0]
    return float(slope)


def run_speedup(cfg: StudyConfig, worker_counts, system=None) -> list[SpeedupRow]:
    """Strong-scaling table at fixed (problem, steps, restarts).

    Every pipelined output must equal the serial output bitwise before any
    timing is reported; BLAS pools are pinned to one thread while timing so
    worker scaling is the only parallelism measured.
    """
    levels = scheme_levels(cfg.scheme)
    if levels is None:
        raise ConfigError("speedup studies need a pipelined scheme (fbe or ridc-*)")
    counts = sorted({int(w) for w in worker_counts})
    if not counts or counts[0] != 1:
        raise ConfigError("worker counts must include 1 (the speedup baseline)")
    if counts[-1] > levels:
        raise ConfigError(f"cannot use more workers ({counts[-1]}) than levels ({levels})")
    avail = available_parallelism()
    if counts[-1] > avail:
        raise ConfigError(
            f"requested {counts[-1]} workers but only {avail} cores are available "
            "(set RIDC_FORCE_PARALLELISM to override for smoke tests)"
        )
    if system is None:
        system = make_system(cfg)
    steps = cfg.step_counts[-1]
    solver = ImplicitSolver()
    kernels.warmup()

    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        from contextlib import nullcontext as threadpool_limits

    with threadpool_limits(limits=1):
        base = RidcConfig(levels=levels, steps=steps, restarts=cfg.restarts, workers=1)
        serial = run_serial(system.ivp, base, solver)
        rows = []
        for w in counts:
            rcfg = RidcConfig(levels=levels, steps=steps, restarts=cfg.restarts, workers=w)
            walls = []
            for _ in range(cfg.reps):
                sol = run_pipelined(system.ivp, rcfg, solver)
                if not np.array_equal(sol.final_state, serial.final_state):
                    raise DeterminismError(
                        f"pipelined output with {w} workers differs from the serial run"
                    )
                walls.append(sol.wall_seconds)
            rows.append(SpeedupRow(workers=w, wall_ms=statistics.median(walls) * 1e3,
                                   speedup=0.0))
    base_wall = rows[0].wall_ms
    for row in rows:
        row.speedup = base_wall / row.wall_ms
    return rows


def run_restart_study(cfg: StudyConfig, restart_counts, system=None) -> list[ResultRow]:
    """Error at the final time for a fixed step budget, per restart count."""
    counts = [int(r) for r in restart_counts]
    steps = cfg.step_counts[-1]
    levels = scheme_levels(cfg.scheme)
    if levels is None:
        raise ConfigError("restart studies need a pipelined scheme (fbe or ridc-*)")
    for r in counts:
        if r < 1 or steps % r:
            raise ConfigError(f"restart count {r} must divide the step count {steps}")
        RidcConfig(levels=levels, steps=steps, restarts=r)  # validates pipeline fill
    if system is None:
        system = make_system(cfg)
    solver = ImplicitSolver()
    kernels.warmup()
    reference = _study_reference(system, cfg, solver, steps)
    span = system.ivp.t_end - system.ivp.t_start
    rows = []
    for r in counts:
        final, wall = integrate_scheme(system, cfg.scheme, steps, cfg.workers, r, solver)
        e_inf, e_l2 = error_norms(final, reference, system.dx)
        rows.append(ResultRow(cfg.scheme, steps, span / steps, e_inf, e_l2,
                              wall * 1e3, cfg.workers, r))
    return rows


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def emit_csv(rows: list[ResultRow], path: str) -> None:
    """Write result rows with the fixed 9-column header, 17 significant digits."""
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER.split(","))
            for r in rows:
                writer.writerow([
                    r.scheme, r.steps, _fmt(r.dt), _fmt(r.error_inf), _fmt(r.error_l2),
                    _fmt(r.wall_ms), r.workers, r.restarts, _fmt(r.observed_order),
                ])
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path!r}: {exc}") from exc
