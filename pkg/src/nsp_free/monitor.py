"""Run diagnostics: energy and BD balances, boundary oracle, integrability.

Balances are accumulated at every accepted step with trapezoidal weights in
time, while full reports (including slice-level checks) are kept at a
configurable cadence. Lagrangian integrals are reported multiplied by
omega_n so they carry the same units as the Eulerian energies.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from nsp_free import _kernels, fields
from nsp_free.constants import ModelParams
from nsp_free.solver import LagrangianState, edge_density_gradient

LEDGER_FIELDS = (
    "tau", "mass", "E_kin", "E_int", "E_field", "E_balance_residual",
    "bd_functional", "rho_boundary", "rho_boundary_oracle", "b_of_t",
)

DEFAULT_DELTA_FRACTIONS = (0.01, 0.02, 0.05, 0.1)


@dataclass
class DiagnosticsReport:
    tau: float
    mass: float
    E_kin: float
    E_int: float
    E_field: float
    E_balance_residual: float
    bd_functional: float
    rho_boundary: float
    rho_boundary_oracle: float
    b_of_t: float
    higher_int_density: float = 0.0
    higher_int_velocity: float = 0.0
    concentration: dict = field(default_factory=dict)
    bd_residual: float = 0.0
    energy: float = 0.0
    dissipation: float = 0.0
    bd_rate: float = 0.0
    field_identity_error: float = 0.0
    phi_bound_excess: float = 0.0

    def ledger_record(self) -> dict:
        return {k: getattr(self, k) for k in LEDGER_FIELDS}

    def as_dict(self) -> dict:
        return asdict(self)


def _edge_rho(state: LagrangianState) -> np.ndarray:
    rho = state.rho_cells
    e = np.empty(rho.size + 1)
    e[1:-1] = 0.5 * (rho[1:] + rho[:-1])
    e[0], e[-1] = rho[0], rho[-1]
    return e


def energy_functional(state: LagrangianState) -> float:
    """omega_n [int(u^2/2 + e) dx - kappa/(n-2) int x r^{2-n} dx]."""
    p = state.params
    n = p.n
    m = state.node_masses()
    val = (np.sum(0.5 * state.u_edges**2 * m) + np.sum(p.internal_energy(state.rho_cells) * state.dx)
           - p.kappa / (n - 2) * np.sum(m * state.x_edges / state.r_edges ** (n - 2)))
    return p.omega_n * float(val)


def dissipation_rate(state: LagrangianState) -> float:
    """Viscous dissipation plus the boundary flux term of the energy identity."""
    p = state.params
    n, eps = p.n, p.eps
    r, u, dx = state.r_edges, state.u_edges, state.dx
    m = state.node_masses()
    ux = np.diff(u) / dx
    rbar = 0.5 * (r[1:] ** (n - 1) + r[:-1] ** (n - 1))
    val = (eps * np.sum(state.rho_cells**2 * (rbar * ux) ** 2 * dx)
           + eps * (n - 1) * np.sum(m * u**2 / r**2)
           + eps * (n - 1) * state.rho_cells[-1] * u[-1] ** 2 * r[-1] ** (n - 2))
    return p.omega_n * float(val)


def bd_quantity(state: LagrangianState) -> float:
    """BD functional with the effective velocity u + eps r^{n-1} rho_x."""
    p = state.params
    n, eps = p.n, p.eps
    r, u = state.r_edges, state.u_edges
    m = state.node_masses()
    gx = edge_density_gradient(state.rho_cells, state.dx)
    val = (np.sum(0.5 * (u + eps * r ** (n - 1) * gx) ** 2 * m)
           + np.sum(p.internal_energy(state.rho_cells) * state.dx)
           - p.kappa / (n - 2) * np.sum(m * state.x_edges / r ** (n - 2))
           + p.pressure(state.rho_cells[-1]) * r[-1] ** n / n)
    return p.omega_n * float(val)


def bd_rate(state: LagrangianState) -> float:
    """Dissipation minus source terms of the BD balance; d/dt BD + rate = 0."""
    p = state.params
    n, eps, kappa = p.n, p.eps, p.kappa
    r = state.r_edges
    m = state.node_masses()
    gx = edge_density_gradient(state.rho_cells, state.dx)
    re = _edge_rho(state)
    dp = p.gamma * p.a0 * re ** (p.gamma - 1)
    rN = state.rho_cells[-1]
    dpN = p.gamma * p.a0 * rN ** (p.gamma - 1)
    val = (eps * np.sum(dp * gx**2 * r ** (2 * n - 2) * m)
           + p.pressure(rN) * dpN * r[-1] ** n / (n * eps)
           - eps * kappa * np.sum(state.rho_cells * state.dx)
           + eps * kappa * state.x_edges[-1] * rN)
    return p.omega_n * float(val)


def boundary_oracle(rho_b0: float, t: float, params: ModelParams) -> float:
    """Closed-form solution of rho_tau = -(a0/eps) rho^gamma."""
    g = params.gamma
    e0 = float(params.internal_energy(rho_b0))
    return rho_b0 * (1.0 + (g - 1) ** 2 / params.eps * e0 * t) ** (-1.0 / (g - 1))


def _overlap_integrals(state: LagrangianState, K: tuple[float, float]):
    """int_K rho^{gamma+1} dr and int_K (rho|u|^3 + rho^{gamma+theta}) r^{n-1} dr."""
    p = state.params
    n = p.n
    d, D = K
    r = state.r_edges
    lo = np.clip(r[:-1], d, D)
    hi = np.clip(r[1:], d, D)
    rho = state.rho_cells
    u = 0.5 * (state.u_edges[1:] + state.u_edges[:-1])
    dens = float(np.sum(rho ** (p.gamma + 1) * (hi - lo)))
    vol = (hi**n - lo**n) / n
    vel = float(np.sum((rho * np.abs(u) ** 3 + rho ** (p.gamma + p.theta)) * vol))
    return dens, vel


def step_functionals(state: LagrangianState, K: tuple[float, float]) -> tuple:
    """Compiled evaluation of (energy, dissipation, BD, BD rate, K-integrals).

    Equal to ``energy_functional``, ``dissipation_rate``, ``bd_quantity``,
    ``bd_rate`` and the K overlap integrals up to rounding.
    """
    p = state.params
    dx = state.dx
    E, D, B, R, hd, hv = _kernels.functionals(
        state.r_edges, state.u_edges, state.x_edges, dx, state.node_masses(), state.rho_cells,
        p.n, p.gamma, float(p.kappa), p.eps, p.a0, K[0], K[1],
    )
    w = p.omega_n
    return w * E, w * D, w * B, w * R, hd, hv


def energy_balance(prev: DiagnosticsReport, state: LagrangianState, dt: float) -> tuple[float, float, float]:
    """Updated cumulative residual of the energy identity.

    Returns (residual, energy, dissipation) so the caller can carry the
    current values into the next increment.
    """
    E = energy_functional(state)
    D = dissipation_rate(state)
    res = prev.E_balance_residual + (E - prev.energy) + 0.5 * dt * (D + prev.dissipation)
    return res, E, D


def bd_balance(prev: DiagnosticsReport, state: LagrangianState, dt: float) -> tuple[float, float, float]:
    B = bd_quantity(state)
    R = bd_rate(state)
    res = prev.bd_residual + (B - prev.bd_functional) + 0.5 * dt * (R + prev.bd_rate)
    return res, B, R


def concentration_probe(sl: fields.EulerianSlice, delta_ladder: Iterable[float]) -> dict:
    """omega_n int_0^delta rho r^{n-1} dr for each delta."""
    deltas = np.asarray(list(delta_ladder), float)
    vals = sl.params.omega_n * sl.cumulative_mass(deltas)
    return {float(d): float(v) for d, v in zip(deltas, vals)}


@dataclass(frozen=True)
class DomainCheck:
    ratio: float
    flagged: bool


def domain_check(history: Sequence, b: float) -> DomainCheck:
    """min_t b(t)/b over reports (or raw radii); flagged when below 1/2."""
    vals = [h.b_of_t if hasattr(h, "b_of_t") else float(h) for h in history]
    ratio = min(vals) / b
    return DomainCheck(ratio, ratio < 0.5)


def slice_checks(sl: fields.EulerianSlice) -> tuple[float, float]:
    """Relative defect of the field identity and the worst excess of
    |r^{n-1} Phi_r| over M/omega_n (<= 0 means the bound holds)."""
    p = sl.params
    en = fields.energies(sl)
    target = en["E_field"] / (2.0 * p.kappa)
    err = abs(en["E_grav_coupling"] - target) / max(abs(target), 1e-300)
    phir = fields.potential_gradient(sl)
    bound = sl.mass / p.omega_n
    excess = float(np.max(np.abs(sl.r ** (p.n - 1) * phir)) - bound)
    return err, excess / bound


class Monitor:
    """Observer for ``solver.run`` producing DiagnosticsReports.

    Balances are updated every step; reports are stored at ``cadence``
    intervals in tau (every step when cadence is None) and at the end via
    ``finalize``. ``sink`` receives each stored report.
    """

    def __init__(
        self,
        cadence: Optional[float] = None,
        K: Optional[tuple[float, float]] = None,
        delta_ladder: Optional[Sequence[float]] = None,
        sink: Optional[Callable[[DiagnosticsReport], None]] = None,
        slice_checks: bool = True,
    ):
        self.cadence = cadence
        self._K = K
        self._deltas = delta_ladder
        self.sink = sink
        self.check_slices = slice_checks
        self.reports: list[DiagnosticsReport] = []
        self.min_b = math.inf
        self.tau0 = 0.0
        self.mass0: Optional[float] = None
        self.rho_b0: Optional[float] = None
        self.E0: Optional[float] = None
        self.bd0: Optional[float] = None
        self._next_due = 0.0
        self._pending: Optional[LagrangianState] = None
        # running values: functionals of the latest state and accumulators
        self._now = None
        self.E_residual = 0.0
        self.bd_residual = 0.0
        self.hi_density = 0.0
        self.hi_velocity = 0.0

    def _functionals(self, state: LagrangianState):
        p = state.params
        E, D, B, R, hd, hv = _kernels.functionals(
            state.r_edges, state.u_edges, state.x_edges, self._dx, self._m, state.rho_cells,
            p.n, p.gamma, float(p.kappa), p.eps, p.a0, self._K[0], self._K[1],
        )
        w = p.omega_n
        return w * E, w * D, w * B, w * R, hd, hv

    def report(self, state: LagrangianState) -> DiagnosticsReport:
        """Full report for ``state`` using the current accumulators."""
        p = state.params
        E, D, B, R, _, _ = self._now
        rep = DiagnosticsReport(
            state.tau, state.mass,
            p.omega_n * float(np.sum(0.5 * state.u_edges**2 * self._m)),
            p.omega_n * float(np.sum(p.internal_energy(state.rho_cells) * self._dx)),
            0.0, self.E_residual, B, state.rho_boundary,
            boundary_oracle(self.rho_b0, state.tau - self.tau0, p), state.b_of_t,
            higher_int_density=self.hi_density, higher_int_velocity=self.hi_velocity,
            bd_residual=self.bd_residual, energy=E, dissipation=D, bd_rate=R,
        )
        sl = fields.cell_slice(state)
        rep.E_field = fields.energies(sl)["E_field"]
        rep.concentration = concentration_probe(sl, self._deltas)
        if self.check_slices:
            rep.field_identity_error, rep.phi_bound_excess = slice_checks(sl)
        return rep

    def __call__(self, new: LagrangianState, old: Optional[LagrangianState], dt: float) -> None:
        if old is None:
            self._start(new)
            return
        prev = self._now
        self._now = now = self._functionals(new)
        self.E_residual += (now[0] - prev[0]) + 0.5 * dt * (now[1] + prev[1])
        self.bd_residual += (now[2] - prev[2]) + 0.5 * dt * (now[3] + prev[3])
        self.hi_density += 0.5 * dt * (now[4] + prev[4])
        self.hi_velocity += 0.5 * dt * (now[5] + prev[5])
        b = new.r_edges[-1]
        if b < self.min_b:
            self.min_b = float(b)
        self._pending = new
        if self.cadence is None or new.tau >= self._next_due - 1e-12:
            self._store(new)
            if self.cadence:
                while self._next_due <= new.tau + 1e-12:
                    self._next_due += self.cadence

    def _start(self, state: LagrangianState) -> None:
        p = state.params
        b = state.b_of_t
        self._dx = state.dx
        self._m = state.node_masses()
        if self._K is None:
            self._K = (0.1 * b, 0.9 * b)
        if self._deltas is None:
            self._deltas = [f * b for f in DEFAULT_DELTA_FRACTIONS]
        self.tau0 = state.tau
        self.mass0 = state.mass
        self.rho_b0 = state.rho_boundary
        self._now = self._functionals(state)
        self.E0 = p.omega_n * float(np.sum(0.5 * state.u_edges**2 * self._m)
                                    + np.sum(p.internal_energy(state.rho_cells) * self._dx))
        self.bd0 = self._now[2]
        self.min_b = b
        self._next_due = state.tau + (self.cadence or 0.0)
        self._store(state)

    def _store(self, state: LagrangianState) -> None:
        rep = self.report(state)
        self.reports.append(rep)
        self._pending = None
        if self.sink is not None:
            self.sink(rep)

    def finalize(self) -> None:
        """Store the latest state if the cadence skipped it."""
        if self._pending is not None:
            self._store(self._pending)

    @property
    def current(self) -> DiagnosticsReport:
        return self.reports[-1]

    @property
    def relative_energy_residual(self) -> float:
        return self.E_residual / self.E0

    @property
    def relative_bd_residual(self) -> float:
        return self.bd_residual / abs(self.bd0)

    def summary(self) -> dict:
        return summarize(self.reports)


def summarize(reports: Sequence[DiagnosticsReport]) -> dict:
    """min/max/final of every scalar report field."""
    out = {}
    if not reports:
        return out
    for key, val in reports[0].as_dict().items():
        if isinstance(val, dict):
            continue
        col = [getattr(r, key) for r in reports]
        out[key] = {"min": min(col), "max": max(col), "final": col[-1]}
    out["concentration_final"] = {str(k): v for k, v in reports[-1].concentration.items()}
    return out


def write_ndjson(reports: Iterable[DiagnosticsReport], fh) -> None:
    for rep in reports:
        fh.write(json.dumps(rep.ledger_record()) + "\n")
