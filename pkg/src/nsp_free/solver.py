"""Lagrangian free-boundary solver in mass coordinates.

Staggered layout: radii and velocities live on mass edges ``x_0 = 0 < ... <
x_N = M/omega_n``; densities live in the N mass cells between them. Cell
densities are tied to the edge radii by ``rho_c = dx_c / V_c`` with
``V_c = (r_{c+1}^n - r_c^n)/n``, which makes the semi-discrete continuity
equation ``rho_tau = -rho^2 (r^{n-1} u)_x`` an identity and mass
conservation structural.

The momentum update at edge j is

    u_tau = -r^{n-1} sigma_x - kappa x / r^{n-1} - (n-1) eps r^{n-2} rho_x u

with cell stresses ``sigma = p - eps rho^2 (r^{n-1} u)_x``. The inner edge is
a rigid wall (u = 0) and the outer edge is traction free (sigma = 0 beyond
the last cell), which gives the boundary-cell law ``rho_tau ~ -(a0/eps)
rho^gamma``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import PchipInterpolator

from nsp_free import _kernels
from nsp_free.constants import ModelParams

log = logging.getLogger(__name__)


class StepRejected(RuntimeError):
    """A step produced a non-positive density, broken ordering or NaN."""


class SimulationHalted(RuntimeError):
    """Step retries were exhausted; carries the last good state."""

    def __init__(self, message: str, state: "LagrangianState"):
        super().__init__(message)
        self.state = state


@dataclass(frozen=True)
class LagrangianState:
    tau: float
    x_edges: np.ndarray
    r_edges: np.ndarray
    u_edges: np.ndarray
    rho_cells: np.ndarray
    params: ModelParams

    @property
    def N(self) -> int:
        return self.rho_cells.size

    @property
    def a(self) -> float:
        return float(self.r_edges[0])

    @property
    def b_of_t(self) -> float:
        return float(self.r_edges[-1])

    @property
    def dx(self) -> np.ndarray:
        return np.diff(self.x_edges)

    @property
    def mass(self) -> float:
        """Total mass omega_n * x_N; constant by construction."""
        return self.params.omega_n * float(self.x_edges[-1])

    @property
    def rho_boundary(self) -> float:
        return float(self.rho_cells[-1])

    def node_masses(self) -> np.ndarray:
        return node_masses(self.dx)


@dataclass(frozen=True)
class StepReport:
    dt_used: float
    max_wave_speed: float
    viscous_limit: float
    boundary_density: float
    boundary_radius: float


def node_masses(dx: np.ndarray) -> np.ndarray:
    m = np.empty(dx.size + 1)
    m[1:-1] = 0.5 * (dx[:-1] + dx[1:])
    m[0] = 0.5 * dx[0]
    m[-1] = 0.5 * dx[-1]
    return m


def cell_densities(r: np.ndarray, dx: np.ndarray, n: int) -> np.ndarray:
    vol = (r[1:] ** n - r[:-1] ** n) / n
    return dx / vol


def edge_density_gradient(rho: np.ndarray, dx: np.ndarray) -> np.ndarray:
    """rho_x on edges: centred in the interior, one-sided at both ends."""
    g = np.empty(rho.size + 1)
    g[1:-1] = (rho[1:] - rho[:-1]) / (0.5 * (dx[:-1] + dx[1:]))
    g[0] = g[1]
    g[-1] = g[-2]
    return g


def cell_stress(r, u, rho, dx, params: ModelParams) -> np.ndarray:
    n = params.n
    flux = r ** (n - 1) * u
    div = np.diff(flux) / dx
    return params.pressure(rho) - params.eps * rho**2 * div


def stress(state: LagrangianState, j: Optional[int] = None):
    """Total stress sigma = p - eps rho^2 (r^{n-1}u)_x on mass edges.

    Interior edges use the centred difference of r^{n-1}u across the two
    adjacent cells; edge 0 takes the one-sided value of the first cell and the
    outer edge is zero by the traction-free closure.
    """
    p = state.params
    n = p.n
    r, u, x = state.r_edges, state.u_edges, state.x_edges
    flux = r ** (n - 1) * u
    rho_e = np.empty(r.size)
    rho_e[1:-1] = 0.5 * (state.rho_cells[:-1] + state.rho_cells[1:])
    rho_e[0] = state.rho_cells[0]
    rho_e[-1] = state.rho_cells[-1]
    div = np.empty(r.size)
    div[1:-1] = (flux[2:] - flux[:-2]) / (x[2:] - x[:-2])
    div[0] = (flux[1] - flux[0]) / (x[1] - x[0])
    sig = p.pressure(rho_e) - p.eps * rho_e**2 * div
    sig[-1] = 0.0
    sig[0] = p.pressure(state.rho_cells[0]) - p.eps * state.rho_cells[0] ** 2 * div[0]
    return sig if j is None else float(sig[j])


def acceleration(r, u, x, dx, m, params: ModelParams):
    """Right-hand side du/dtau on edges plus the cell densities used."""
    n, eps, kappa = params.n, params.eps, params.kappa
    rho = cell_densities(r, dx, n)
    sig = cell_stress(r, u, rho, dx, params)
    jump = np.empty(r.size)
    jump[1:-1] = sig[1:] - sig[:-1]
    jump[-1] = 0.0 - sig[-1]
    jump[0] = 0.0
    rn1 = r ** (n - 1)
    rho_x = edge_density_gradient(rho, dx)
    acc = -rn1 * jump / m - kappa * x / rn1 - (n - 1) * eps * r ** (n - 2) * rho_x * u
    acc[0] = 0.0
    return acc, rho


def _check(r, rho) -> None:
    if not np.all(np.isfinite(r)) or not np.all(np.isfinite(rho)):
        raise StepRejected("non-finite state")
    if np.any(np.diff(r) <= 0.0):
        raise StepRejected("radius ordering broken")
    if np.any(rho <= 0.0):
        raise StepRejected("non-positive density")


def stability_limits(state: LagrangianState) -> tuple[float, float, float]:
    """(acoustic limit, viscous limit, max wave speed) of a state.

    The acoustic limit is min dr/(|u| + c_s). The viscous limit uses the
    kinematic viscosity eps (shear coefficient eps*rho divided by rho):
    dr^2 / (2 eps).
    """
    p = state.params
    return _kernels.stability(state.r_edges, state.u_edges, state.rho_cells, p.gamma, p.eps, p.a0)


def cfl_dt(state: LagrangianState, cfl: float = 0.4, limits=None) -> float:
    acoustic, viscous, _ = limits if limits is not None else stability_limits(state)
    return cfl * min(acoustic, viscous)


_REASONS = {1: "non-finite state", 2: "radius ordering broken", 3: "non-positive density"}


def step(state: LagrangianState, dt: float, limits=None, grid=None):
    """Advance one two-stage SSP (Heun) step of size dt.

    The compiled kernel evaluates the same right-hand side as
    ``acceleration``.
    """
    p = state.params
    dx, m = grid if grid is not None else (state.dx, state.node_masses())
    r2, u2, rho2, code = _kernels.heun(
        state.r_edges, state.u_edges, state.x_edges, dx, m, dt,
        p.n, p.gamma, float(p.kappa), p.eps, p.a0,
    )
    if code:
        raise StepRejected(_REASONS[code])
    new = replace(state, tau=state.tau + dt, r_edges=r2, u_edges=u2, rho_cells=rho2)
    _, visc, wave = limits if limits is not None else stability_limits(state)
    return new, StepReport(dt, wave, visc, float(rho2[-1]), float(r2[-1]))


def step_reference(state: LagrangianState, dt: float) -> LagrangianState:
    """Plain numpy version of ``step`` used to cross-check the kernel."""
    p = state.params
    x, dx = state.x_edges, state.dx
    m = node_masses(dx)
    r0, u0 = state.r_edges, state.u_edges
    a0, _ = acceleration(r0, u0, x, dx, m, p)
    r1 = r0 + dt * u0
    u1 = u0 + dt * a0
    _check(r1, cell_densities(r1, dx, p.n))
    a1, _ = acceleration(r1, u1, x, dx, m, p)
    r2 = 0.5 * (r0 + r1 + dt * u1)
    u2 = 0.5 * (u0 + u1 + dt * a1)
    r2[0] = r0[0]
    u2[0] = 0.0
    rho2 = cell_densities(r2, dx, p.n)
    _check(r2, rho2)
    return replace(state, tau=state.tau + dt, r_edges=r2, u_edges=u2, rho_cells=rho2)


Observer = Callable[[LagrangianState, Optional[LagrangianState], float], None]


def run(
    state: LagrangianState,
    T: float,
    observer: Optional[Observer] = None,
    cfl: float = 0.4,
    dt_fixed: Optional[float] = None,
    max_retries: int = 8,
    max_steps: Optional[int] = None,
) -> LagrangianState:
    """Integrate until tau >= T.

    ``observer(new, old, dt)`` is called once with ``old=None`` for the
    initial state and then after every accepted step. With ``dt_fixed`` the
    step size is fixed (the last step is shortened to land on T); otherwise
    it follows ``cfl_dt``. Rejected steps are retried with halved dt; after
    ``max_retries`` halvings ``SimulationHalted`` carries the last good state.
    """
    if observer is not None:
        observer(state, None, 0.0)
    t_end = state.tau + T
    steps = 0
    grid = (state.dx, state.node_masses())
    while state.tau < t_end * (1 - 1e-15) and T > 0:
        if max_steps is not None and steps >= max_steps:
            break
        lim = stability_limits(state)
        dt = dt_fixed if dt_fixed is not None else cfl_dt(state, cfl, lim)
        dt = min(dt, t_end - state.tau)
        for attempt in range(max_retries + 1):
            try:
                new, _ = step(state, dt, lim, grid)
                break
            except StepRejected as exc:
                if attempt == max_retries:
                    raise SimulationHalted(
                        f"step rejected at tau={state.tau:.6g} after {max_retries} halvings: {exc}", state
                    ) from exc
                dt *= 0.5
        if observer is not None:
            observer(new, state, dt)
        state = new
        steps += 1
    return state


def _place_edges(r_nodes, cum, N: int, grid_rule: str):
    if N < 16:
        raise ValueError("N must be at least 16 cells")
    if grid_rule == "mass":
        x = np.linspace(0.0, cum[-1], N + 1)
        if np.all(np.diff(cum) > 0):
            r = PchipInterpolator(cum, r_nodes)(x)
        else:
            r = np.interp(x, cum, r_nodes)
    elif grid_rule == "radius":
        r = np.linspace(r_nodes[0], r_nodes[-1], N + 1)
        x = np.interp(r, r_nodes, cum)
    else:
        raise ValueError(f"unknown grid rule {grid_rule!r}")
    r[0], r[-1] = r_nodes[0], r_nodes[-1]
    x[0], x[-1] = 0.0, cum[-1]
    return x, r


def state_from_profile(
    params: ModelParams,
    r_nodes: np.ndarray,
    rho_nodes: np.ndarray,
    u_nodes: np.ndarray,
    N: int,
    grid_rule: str = "mass",
) -> LagrangianState:
    """Build a Lagrangian state from radial samples on [a, b].

    The cumulative mass x(r) = int_a^r rho z^{n-1} dz is integrated with
    Simpson's rule on the samples; edge radii are placed at equal mass
    increments (``grid_rule='mass'``) or equal radius increments
    (``grid_rule='radius'``), and cell densities follow from the exact
    geometric relation.
    """
    n = params.n
    r_nodes = np.asarray(r_nodes, float)
    cum = cumulative_simpson(np.asarray(rho_nodes, float) * r_nodes ** (n - 1), x=r_nodes, initial=0.0)
    x, r = _place_edges(r_nodes, cum, N, grid_rule)
    u = np.interp(r, r_nodes, u_nodes)
    u[0] = 0.0
    return LagrangianState(0.0, x, r, u, cell_densities(r, np.diff(x), n), params)


def uniform_state(params: ModelParams, b: float, N: int, rho0: float = 1.0, grid_rule: str = "mass") -> LagrangianState:
    """Uniform density rho0 on [1/b, b] at rest; edge radii placed exactly."""
    if N < 16:
        raise ValueError("N must be at least 16 cells")
    n = params.n
    a = 1.0 / b
    xN = rho0 * (b**n - a**n) / n
    if grid_rule == "mass":
        x = np.linspace(0.0, xN, N + 1)
        r = (a**n + n * x / rho0) ** (1.0 / n)
    elif grid_rule == "radius":
        r = np.linspace(a, b, N + 1)
        x = rho0 * (r**n - a**n) / n
    else:
        raise ValueError(f"unknown grid rule {grid_rule!r}")
    r[0], r[-1] = a, b
    x[0], x[-1] = 0.0, xN
    u = np.zeros(N + 1)
    return LagrangianState(0.0, x, r, u, cell_densities(r, np.diff(x), n), params)


def init_state(data, N: int, params: ModelParams, grid_rule: str = "mass", mass_rtol: float = 1e-8) -> LagrangianState:
    """Lagrangian state from constructed initial data (needs r, rho0_eb, u0_eb, M).

    The cumulative mass is integrated with Simpson's rule and rescaled so
    that x_N = M / omega_n exactly; a mismatch above ``mass_rtol`` is rejected.
    """
    n = params.n
    r = np.asarray(data.r, float)
    cum = cumulative_simpson(np.asarray(data.rho0_eb, float) * r ** (n - 1), x=r, initial=0.0)
    xN = data.M / params.omega_n
    if abs(cum[-1] / xN - 1.0) > mass_rtol:
        raise ValueError(f"initial data mass {params.omega_n * cum[-1]:.12g} differs from M={data.M:.12g}")
    x, re = _place_edges(r, cum * (xN / cum[-1]), N, grid_rule)
    x[-1] = xN
    u = np.interp(re, r, np.asarray(data.u0_eb, float))
    u[0] = 0.0
    return LagrangianState(0.0, x, re, u, cell_densities(re, np.diff(x), n), params)
