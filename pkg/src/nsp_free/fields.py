"""Eulerian reconstruction, potential gradient and energies.

A slice stores node samples on a radial grid together with the support
interval ``[lo_i, hi_i]`` on which each density sample is held constant.
For a remapped slice these are the dual cells of the grid clipped to
``[a, b(t)]`` and the sample is the exact mass average over that interval, so
the slice carries the total mass without quadrature error. All radial
integrals below are evaluated in closed form for that piecewise-constant
density, which keeps the field identity exact up to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from nsp_free.constants import ModelParams
from nsp_free.solver import LagrangianState


@dataclass(frozen=True)
class EulerianSlice:
    r: np.ndarray
    rho: np.ndarray
    u: np.ndarray
    m: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    t: float
    a: float
    b: float
    params: ModelParams

    @property
    def mass(self) -> float:
        n = self.params.n
        return self.params.omega_n * float(np.sum(self.rho * (self.hi**n - self.lo**n) / n))

    def cumulative_mass(self, r) -> np.ndarray:
        """int_a^r rho z^{n-1} dz for the piecewise-constant density."""
        n = self.params.n
        r = np.atleast_1d(np.asarray(r, float))
        before, seg = _cumulative_at_nodes(self.rho, self.lo, self.hi, n)
        # intervals are contiguous and sorted, so locate r by its upper end
        k = np.clip(np.searchsorted(self.hi, r, side="left"), 0, self.hi.size - 1)
        top = np.clip(r, self.lo[k], self.hi[k])
        part = self.rho[k] * (top**n - self.lo[k] ** n) / n
        out = before[k] + part
        out = np.where(r >= self.hi[-1], before[-1] + seg[-1], out)
        return np.where(r <= self.lo[0], 0.0, out)


def _cumulative_at_nodes(sl_rho, lo, hi, n):
    seg = sl_rho * (hi**n - lo**n) / n
    before = np.concatenate([[0.0], np.cumsum(seg)[:-1]])
    return before, seg


def _cumulative_mass_function(state: LagrangianState):
    n = state.params.n
    r, x, rho = state.r_edges, state.x_edges, state.rho_cells

    def X(s):
        s = np.clip(np.asarray(s, float), r[0], r[-1])
        c = np.clip(np.searchsorted(r, s, side="right") - 1, 0, rho.size - 1)
        return x[c] + rho[c] * (s**n - r[c] ** n) / n

    return X


def resample(state: LagrangianState, r_grid) -> EulerianSlice:
    """Remap a Lagrangian state onto ``r_grid``.

    Densities are conservative averages over the grid's dual cells clipped to
    [a, b(t)]; velocities are linearly interpolated between edge radii. Both
    vanish at nodes outside [a, b(t)] (zero extension).
    """
    p = state.params
    n = p.n
    r_grid = np.asarray(r_grid, float)
    a, b = state.a, state.b_of_t
    mid = 0.5 * (r_grid[1:] + r_grid[:-1])
    lo = np.concatenate([[r_grid[0]], mid])
    hi = np.concatenate([mid, [r_grid[-1]]])
    lo = np.clip(lo, a, b)
    hi = np.clip(hi, a, b)
    X = _cumulative_mass_function(state)
    vol = (hi**n - lo**n) / n
    mass = X(hi) - X(lo)
    rho = np.where(vol > 0.0, mass / np.where(vol > 0.0, vol, 1.0), 0.0)
    inside = (r_grid >= a) & (r_grid <= b)
    u = np.where(inside, np.interp(r_grid, state.r_edges, state.u_edges), 0.0)
    rho = np.where(vol > 0.0, rho, 0.0)
    return EulerianSlice(r_grid, rho, u, rho * u, lo, hi, state.tau, a, b, p)


def cell_slice(state: LagrangianState) -> EulerianSlice:
    """Slice whose support intervals are the Lagrangian cells themselves."""
    r = state.r_edges
    mid = 0.5 * (r[1:] + r[:-1])
    u = 0.5 * (state.u_edges[1:] + state.u_edges[:-1])
    rho = state.rho_cells
    return EulerianSlice(mid, rho.copy(), u, rho * u, r[:-1].copy(), r[1:].copy(), state.tau,
                         state.a, state.b_of_t, state.params)


def potential_gradient(sl: EulerianSlice, params: ModelParams | None = None) -> np.ndarray:
    """Phi_r at the slice nodes: 0 inside a, kappa c(r)/r^{n-1} beyond."""
    p = params or sl.params
    n = p.n
    c = sl.cumulative_mass(sl.r)
    return np.where(sl.r <= sl.a, 0.0, p.kappa * c / np.maximum(sl.r, sl.a) ** (n - 1))


def potential(sl: EulerianSlice, params: ModelParams | None = None) -> np.ndarray:
    """Phi at the slice nodes, integrating Phi_r inward from Phi(inf) = 0."""
    p = params or sl.params
    n = p.n
    A, B = _segment_coefficients(sl)

    def prim(z):
        return A * z ** (2 - n) / (2 - n) + B * z**2 / 2.0

    whole = prim(sl.hi) - prim(sl.lo)
    # integral of c z^{1-n} from hi_i to the outer end of the support
    above = np.concatenate([np.cumsum(whole[::-1])[::-1][1:], [0.0]])
    Mtot = sl.mass / p.omega_n
    r = np.maximum(sl.r, sl.a)
    outside = -Mtot * np.maximum(r, sl.b) ** (2 - n) / (n - 2)
    k = np.clip(np.searchsorted(sl.hi, r, side="left"), 0, sl.hi.size - 1)
    rr = np.clip(r, sl.lo[k], sl.hi[k])
    inner = (A[k] * (sl.hi[k] ** (2 - n) - rr ** (2 - n)) / (2 - n)
             + B[k] * (sl.hi[k] ** 2 - rr**2) / 2.0) + above[k]
    inner = np.where(r >= sl.b, 0.0, inner)
    return p.kappa * (outside - inner)


def _segment_coefficients(sl: EulerianSlice):
    """Write c(r) = A_i + B_i r^n on each support interval."""
    n = sl.params.n
    before, _ = _cumulative_at_nodes(sl.rho, sl.lo, sl.hi, n)
    B = sl.rho / n
    A = before - B * sl.lo**n
    return A, B


def energies(sl: EulerianSlice, params: ModelParams | None = None) -> dict:
    """Kinetic, internal, field and coupling energies of a slice.

    E_grav_coupling = kappa omega_n/(n-2) int c(r) rho r dr, so that the
    field identity reads E_grav_coupling = E_field / (2 kappa).
    """
    p = params or sl.params
    n, w = p.n, p.omega_n
    vol = (sl.hi**n - sl.lo**n) / n
    E_kin = w * float(np.sum(0.5 * sl.rho * sl.u**2 * vol))
    E_int = w * float(np.sum(sl.rho * p.internal_energy(sl.rho) * vol))
    A, B = _segment_coefficients(sl)
    lo, hi = sl.lo, sl.hi
    # int (A + B r^n)^2 r^{1-n} dr and int (A + B r^n) rho r dr in closed form
    sq = (A**2 * (hi ** (2 - n) - lo ** (2 - n)) / (2 - n)
          + A * B * (hi**2 - lo**2)
          + B**2 * (hi ** (n + 2) - lo ** (n + 2)) / (n + 2))
    cr = sl.rho * (A * (hi**2 - lo**2) / 2.0 + B * (hi ** (n + 2) - lo ** (n + 2)) / (n + 2))
    Mtot = sl.mass / w
    tail = Mtot**2 / ((n - 2) * sl.b ** (n - 2))
    E_field = w * (float(np.sum(sq)) + tail)
    E_coup = p.kappa * w / (n - 2) * float(np.sum(cr))
    return {"E_kin": E_kin, "E_int": E_int, "E_field": E_field, "E_grav_coupling": E_coup}


def field_tail(M: float, b: float, params: ModelParams) -> float:
    """omega_n int_b^inf |Phi_r|^2 r^{n-1} dr outside the gas."""
    n, w = params.n, params.omega_n
    return (M / w) ** 2 * w / ((n - 2) * b ** (n - 2))
