"""Method-of-lines benchmark problems.

Two 1-d systems, both splitting diffusion into the stiff (implicit) part:

* constant-coefficient advection-diffusion on [0, 1] with periodic
  boundaries: u_t = c u_x + d u_xx, u(x, 0) = 2 + sin(2 pi x). Advection is
  the first-order upwind (forward) difference, diffusion the central second
  difference; both become dense matrices so each step is matrix-vector work.
* viscous Burgers on [0, 1] with homogeneous Dirichlet boundaries:
  u_t + (u^2/2)_x = eps u_xx, u(x, 0) = sin(2 pi x) + sin(pi x)/2. The
  hyperbolic term uses the centered numerical flux
  f_{i+1/2} = ((u_{i+1})^2 + (u_i)^2)/2, the diffusion a Dirichlet Laplacian
  on the interior unknowns.

Fine spatial grids keep the spatial error below the temporal error, so time
integrators can be compared against a heavily refined reference run.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .errors import ConfigError
from .ivp import SplitIVP
from .steppers import ImplicitSolver, integrate_ark
from .tableaus import imex4_tableau

__all__ = [
    "AdvectionDiffusionSpec",
    "BurgersSpec",
    "AdvectionDiffusionSystem",
    "BurgersSystem",
    "build_advection_diffusion",
    "build_burgers",
    "reference_solution",
    "error_norms",
    "adv_diff_desk",
    "adv_diff_paper",
    "burgers_desk",
    "burgers_paper",
]


def _grid_count(dx: float) -> int:
    m = round(1.0 / dx)
    if m < 3 or abs(m * dx - 1.0) > 1e-12:
        raise ConfigError(f"dx={dx} must evenly divide the unit interval")
    return m


@dataclass(frozen=True)
class AdvectionDiffusionSpec:
    c: float = 0.1
    d: float = 1e-3
    dx: float = 1e-3
    t_end: float = 40.0

    def __post_init__(self):
        if self.c <= 0 or self.d <= 0:
            raise ConfigError("advection speed and diffusivity must be positive")
        _grid_count(self.dx)


@dataclass(frozen=True)
class BurgersSpec:
    eps: float = 1e-3
    dx: float = 1e-3
    t_end: float = 1.0

    def __post_init__(self):
        if self.eps <= 0:
            raise ConfigError("viscosity must be positive")
        _grid_count(self.dx)


@dataclass(frozen=True)
class AdvectionDiffusionSystem:
    spec: AdvectionDiffusionSpec
    ivp: SplitIVP
    advection_matrix: np.ndarray
    diffusion_matrix: np.ndarray

    @property
    def name(self) -> str:
        return "adv-diff"

    @property
    def dx(self) -> float:
        return self.spec.dx


@dataclass(frozen=True)
class BurgersSystem:
    spec: BurgersSpec
    ivp: SplitIVP
    diffusion_matrix: np.ndarray

    @property
    def name(self) -> str:
        return "burgers"

    @property
    def dx(self) -> float:
        return self.spec.dx


def build_advection_diffusion(spec: AdvectionDiffusionSpec) -> AdvectionDiffusionSystem:
    """Periodic grid of M = 1/dx unknowns at x_i = i*dx."""
    m = _grid_count(spec.dx)
    x = np.arange(m) * spec.dx
    u0 = 2.0 + np.sin(2.0 * np.pi * x)

    adv = np.zeros((m, m))
    dif = np.zeros((m, m))
    ca = spec.c / spec.dx
    cd = spec.d / spec.dx ** 2
    for i in range(m):
        adv[i, i] = -ca
        adv[i, (i + 1) % m] = ca            # forward difference: upwind for c > 0
        dif[i, i] = -2.0 * cd
        dif[i, (i - 1) % m] = cd
        dif[i, (i + 1) % m] = cd
    adv.setflags(write=False)
    dif.setflags(write=False)

    ivp = SplitIVP(
        dimension=m,
        t_start=0.0,
        t_end=spec.t_end,
        initial_state=u0,
        eval_nonstiff=lambda t, u: kernels.mat_vec(adv, u),
        eval_stiff=lambda t, u: kernels.mat_vec(dif, u),
        stiff_linear_operator=dif,
    )
    return AdvectionDiffusionSystem(spec=spec, ivp=ivp,
                                    advection_matrix=adv, diffusion_matrix=dif)


def build_burgers(spec: BurgersSpec) -> BurgersSystem:
    """Interior unknowns u_1..u_{M-1}; boundary values are eliminated zeros."""
    m = _grid_count(spec.dx)
    n = m - 1
    x = (np.arange(n) + 1) * spec.dx
    u0 = np.sin(2.0 * np.pi * x) + 0.5 * np.sin(np.pi * x)

    dif = np.zeros((n, n))
    cd = spec.eps / spec.dx ** 2
    for i in range(n):
        dif[i, i] = -2.0 * cd
        if i > 0:
            dif[i, i - 1] = cd
        if i < n - 1:
            dif[i, i + 1] = cd
    dif.setflags(write=False)

    scale = 1.0 / (4.0 * spec.dx)
    ivp = SplitIVP(
        dimension=n,
        t_start=0.0,
        t_end=spec.t_end,
        initial_state=u0,
        eval_nonstiff=lambda t, u: kernels.burgers_flux(u, scale),
        eval_stiff=lambda t, u: kernels.mat_vec(dif, u),
        stiff_linear_operator=dif,
    )
    return BurgersSystem(spec=spec, ivp=ivp, diffusion_matrix=dif)


def reference_solution(problem, t_end: float, refinement: int, base_steps: int,
                       solver: Optional[ImplicitSolver] = None) -> np.ndarray:
    """Error baseline: the same semi-discrete system marched with the
    fourth-order pair at ``refinement``-times the finest study step count."""
    if refinement < 8:
        raise ConfigError(f"refinement must be >= 8, got {refinement}")
    if base_steps < 1:
        raise ConfigError("base_steps must be positive")
    ivp = problem.ivp
    if solver is None:
        solver = ImplicitSolver()
    return integrate_ark(
        ivp, imex4_tableau(), ivp.t_start, np.array(ivp.initial_state),
        t_end, refinement * base_steps, solver,
    )


def error_norms(u: np.ndarray, ref: np.ndarray, dx: float) -> tuple[float, float]:
    """(max norm, dx-weighted discrete 2-norm) of u - ref."""
    diff = u - ref
    inf = float(np.abs(diff).max())
    l2 = float(np.sqrt(dx * np.dot(diff, diff)))
    return inf, l2


# study-scale presets: desk sizes keep the full acceptance run in minutes,
# the paper-scale variants reproduce the published configuration

def adv_diff_desk() -> AdvectionDiffusionSystem:
    return build_advection_diffusion(AdvectionDiffusionSpec(dx=1.0 / 200, t_end=4.0))


def adv_diff_paper() -> AdvectionDiffusionSystem:
    return build_advection_diffusion(AdvectionDiffusionSpec())


def burgers_desk() -> BurgersSystem:
    return build_burgers(BurgersSpec(dx=1.0 / 500))


def burgers_paper() -> BurgersSystem:
    return build_burgers(BurgersSpec())
