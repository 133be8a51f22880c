"""Weak entropy pairs of the 1-D isentropic Euler system.

With the substitution s = u + rho^theta sigma the kernel
[rho^{2 theta} - (s-u)^2]_+^b becomes rho^{2 theta b}(1 - sigma^2)^b and
theta(2b + 1) = 1 turns the Jacobian into an exact factor rho. Every pair is
therefore a Gauss-Jacobi sum in sigma, normalised by c_norm so that psi = 1
gives eta = rho.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from nsp_free.constants import ModelParams
from nsp_free.quadrature import gauss_jacobi, gauss_legendre


@dataclass(frozen=True)
class KernelParams:
    gamma: float
    theta: float
    frakb: float
    c_norm: float
    nodes: np.ndarray
    weights: np.ndarray  # normalised: sum = 1
    half_nodes: np.ndarray  # Jacobi(0, b) rule for one-sided pieces
    half_weights: np.ndarray
    nq: int

    @property
    def second_moment(self) -> float:
        return float(np.sum(self.weights * self.nodes**2))


def kernel_params(params_or_gamma: Union[ModelParams, float], nq: int = 64) -> KernelParams:
    gamma = params_or_gamma.gamma if isinstance(params_or_gamma, ModelParams) else float(params_or_gamma)
    if gamma <= 1:
        raise ValueError("gamma must exceed 1")
    theta = 0.5 * (gamma - 1)
    b = (3 - gamma) / (2 * (gamma - 1))
    c = math.gamma(b + 1.5) / (math.sqrt(math.pi) * math.gamma(b + 1))
    x, w = gauss_jacobi(nq, b, b)
    t, W = gauss_jacobi(nq, 0.0, b)
    return KernelParams(gamma, theta, b, c, x, c * w, t, c * W, nq)


@dataclass(frozen=True)
class EntropyEval:
    eta: float
    q: float
    eta_rho: float = float("nan")
    eta_m: float = float("nan")


def _check_rho(rho):
    if np.any(np.asarray(rho) < 0):
        raise ValueError("density must be non-negative")


def _piece_rule(lo: float, hi: float, kp: KernelParams):
    """Nodes and normalised weights for int_lo^hi f(sigma)(1-sigma^2)^b."""
    b = kp.frakb
    if lo == -1.0 and hi == 1.0:
        return kp.nodes, kp.weights
    if lo == -1.0:
        h = 0.5 * (hi + 1.0)
        s = -1.0 + h * (kp.half_nodes + 1.0)
        return s, kp.half_weights * h ** (b + 1) * (1.0 - s) ** b
    if hi == 1.0:
        h = 0.5 * (1.0 - lo)
        s = 1.0 - h * (kp.half_nodes + 1.0)
        return s, kp.half_weights * h ** (b + 1) * (1.0 + s) ** b
    t, W = gauss_legendre(kp.nq)
    h = 0.5 * (hi - lo)
    s = lo + h * (t + 1.0)
    return s, kp.c_norm * W * h * (1.0 - s * s) ** b


def eval_pair(psi: Callable, rho: float, u: float, kp: KernelParams, kinks: Sequence[float] = ()) -> EntropyEval:
    """(eta, q) generated by the test function psi at (rho, u).

    ``kinks`` lists s-values where psi is not smooth; the sigma interval is
    split there and each piece gets its own rule with the correct endpoint
    behaviour.
    """
    _check_rho(rho)
    if rho == 0:
        return EntropyEval(0.0, 0.0)
    rt = rho**kp.theta
    cuts = sorted((k - u) / rt for k in kinks if -1.0 < (k - u) / rt < 1.0)
    edges = [-1.0, *cuts, 1.0]
    eta = q = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        s, w = _piece_rule(lo, hi, kp)
        vals = psi(u + rt * s)
        eta += float(np.sum(w * vals))
        q += float(np.sum(w * (u + kp.theta * rt * s) * vals))
    return EntropyEval(rho * eta, rho * q)


def mechanical_pair(rho, u, params: Union[ModelParams, KernelParams]):
    """Closed-form energy density and flux (eta*, q*)."""
    gamma = params.gamma
    a0 = (gamma - 1) ** 2 / (4 * gamma)
    rho = np.asarray(rho, float)
    u = np.asarray(u, float)
    _check_rho(rho)
    m = rho * u
    rhoe = a0 / (gamma - 1) * rho**gamma
    eta = 0.5 * m * u + rhoe
    q = 0.5 * m * u * u + m * a0 * gamma / (gamma - 1) * rho ** (gamma - 1)
    return eta, q


def abs_moments(rho, u, kp: KernelParams, kmax: int = 2) -> np.ndarray:
    """J_k = c int sigma^k |u + rho^theta sigma| (1-sigma^2)^b dsigma, k <= kmax.

    Vectorised over (rho, u). The integrand is a polynomial on each side of
    sigma* = -u/rho^theta; J_k is the one-sided polynomial moment (closed
    form) plus twice the integral over the shorter side of sigma*, which
    touches only one singular endpoint and is done with a mapped
    Gauss-Jacobi rule.
    """
    rho, u = np.broadcast_arrays(np.asarray(rho, float), np.asarray(u, float))
    shape = rho.shape
    rho, u = rho.ravel(), u.ravel()
    # J_k(rho, -u) = (-1)^k J_k(rho, u): work with |u| and restore the sign
    sgn = np.sign(u)
    u = np.abs(u)
    rt = rho**kp.theta
    E2 = kp.second_moment
    # normalised moments of the weight: 1, 0, E2, 0, ...
    mom = np.array([1.0, 0.0, E2, 0.0, float(np.sum(kp.weights * kp.nodes**4))])
    out = np.zeros((kmax + 1,) + rho.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        star = np.where(rt > 0, -u / np.where(rt > 0, rt, 1.0), -np.sign(u) * np.inf)
    star = np.where((rt == 0) & (u == 0), np.inf, star)
    full = np.array([u * mom[k] + rt * mom[k + 1] for k in range(kmax + 1)])
    # v < 0 left of sigma*, v > 0 right of it
    inside = (star > -1.0) & (star < 1.0)
    out[:] = np.where(star <= -1.0, full, -full)
    if np.any(inside):
        si = star[inside]
        ri = rt[inside]
        ui = u[inside]
        left = si < 0.0
        # short side: [-1, s*] when s* < 0, otherwise [s*, 1] mirrored to [-1, -s*]
        end = np.where(left, si, -si)
        h = 0.5 * (end + 1.0)
        tau = -1.0 + h[:, None] * (kp.half_nodes[None, :] + 1.0)
        wts = kp.half_weights[None, :] * h[:, None] ** (kp.frakb + 1) * (1.0 - tau) ** kp.frakb
        sig = np.where(left[:, None], tau, -tau)
        v = ui[:, None] + ri[:, None] * sig
        for k in range(kmax + 1):
            piece = np.sum(wts * sig**k * v, axis=1)
            fk = full[k][inside]
            # left: J = F - 2 int_{-1}^{s*}; right: J = -F + 2 int_{s*}^{1}
            out[k][inside] = np.where(left, fk - 2.0 * piece, -fk + 2.0 * piece)
    out[1::2] *= sgn
    return out.reshape((kmax + 1,) + shape)


@dataclass(frozen=True)
class SharpEval:
    eta: np.ndarray
    q: np.ndarray
    eta_m: np.ndarray
    eta_rho: np.ndarray


def sharp_pair(rho, u, kp: KernelParams) -> SharpEval:
    """eta#, q#, eta#_m, eta#_rho for psi(s) = s|s|/2 (vectorised)."""
    _check_rho(rho)
    rho, u = np.broadcast_arrays(np.asarray(rho, float), np.asarray(u, float))
    J = abs_moments(rho, u, kp, 2)
    rt = rho**kp.theta
    L0 = u * J[0] + rt * J[1]
    L1 = u * J[1] + rt * J[2]
    eta = 0.5 * rho * L0
    q = 0.5 * rho * (u * L0 + kp.theta * rt * L1)
    eta_m = J[0]
    eta_rho = -0.5 * u * J[0] + (kp.theta + 0.5) * rt * J[1]
    zero = rho == 0
    return SharpEval(*(np.where(zero, 0.0, a) for a in (eta, q, eta_m, eta_rho)))


@dataclass(frozen=True)
class Cancellation:
    I1: np.ndarray
    I2: np.ndarray
    bound: np.ndarray

    @property
    def difference(self) -> np.ndarray:
        return self.I1 + self.I2

    @property
    def ratio(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.bound > 0, np.abs(self.difference) / self.bound, 0.0)


def cancellation(rho, u, kp: KernelParams) -> Cancellation:
    """q# - u eta# split as I1 + I2, with the bound rho^gamma|u| + rho^{gamma+theta}."""
    _check_rho(rho)
    rho, u = np.broadcast_arrays(np.asarray(rho, float), np.asarray(u, float))
    J = abs_moments(rho, u, kp, 2)
    th = kp.theta
    I1 = 0.5 * th * rho ** (1 + 2 * th) * J[2]
    I2 = 0.5 * th * rho ** (1 + th) * u * J[1]
    bound = rho**kp.gamma * np.abs(u) + rho ** (kp.gamma + th)
    return Cancellation(I1, I2, bound)


def cancellation_constant(kp: KernelParams) -> float:
    """Analytic constant with |q# - u eta#| <= C (rho^gamma|u| + rho^{gamma+theta}).

    |I1| <= theta/2 (|u| rho^gamma + rho^{gamma+theta}) since the normalised
    second and third absolute moments are at most 1. For |u| >= rho^theta,
    J_1 = sign(u) rho^theta E[sigma^2] so |I2| <= theta/2 rho^gamma |u|; for
    |u| < rho^theta, |J_1| <= |u| + rho^theta < 2 rho^theta so
    |I2| <= theta rho^gamma |u|. Hence C = 3 theta / 2.
    """
    return 1.5 * kp.theta


def _pair_arrays(psi, rho, u, kp: KernelParams):
    """Vectorised eta, q for smooth psi on the full-interval rule."""
    rt = rho**kp.theta
    s = u[..., None] + rt[..., None] * kp.nodes
    vals = psi(s)
    eta = rho * np.sum(kp.weights * vals, axis=-1)
    q = rho * np.sum(kp.weights * (u[..., None] + kp.theta * rt[..., None] * kp.nodes) * vals, axis=-1)
    return eta, q


@dataclass(frozen=True)
class DissipationField:
    t: np.ndarray
    r: np.ndarray
    residual: np.ndarray
    proxy_norm: float


def dissipation_field(history, psi, window, kp: KernelParams) -> DissipationField:
    """Centred-difference samples of eta_t + q_r on a (t, r) window.

    ``history`` is a sequence of Eulerian slices on a common radial grid at
    uniform time cadence. ``psi`` is ``"sharp"``, ``"mechanical"`` or a
    smooth callable. The proxy norm weights the squared Fourier transform of
    the bump-localised residual by (1 + |k|^2)^{-1}, a discrete stand-in for
    the H^{-1} norm.
    """
    (t0, t1), (r0, r1) = window
    times = np.array([sl.t for sl in history])
    tm = (times >= t0 - 1e-12) & (times <= t1 + 1e-12)
    if tm.sum() < 3:
        raise ValueError("window outside recorded data")
    r = history[0].r
    rm = (r >= r0) & (r <= r1)
    if rm.sum() < 3:
        raise ValueError("window outside recorded data")
    sel = [sl for sl, keep in zip(history, tm) if keep]
    rho = np.array([sl.rho[rm] for sl in sel])
    u = np.array([sl.u[rm] for sl in sel])
    if psi == "sharp":
        ev = sharp_pair(rho, u, kp)
        eta, q = ev.eta, ev.q
    elif psi == "mechanical":
        eta, q = mechanical_pair(rho, u, kp)
    else:
        eta, q = _pair_arrays(psi, rho, u, kp)
    tt = times[tm]
    rr = r[rm]
    res = np.gradient(eta, tt, axis=0) + np.gradient(q, rr, axis=1)
    return DissipationField(tt, rr, res, _negative_sobolev_proxy(res, tt, rr))


def _bump(z):
    out = np.zeros_like(z)
    inside = np.abs(z) < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - z[inside] ** 2))
    return out


def _negative_sobolev_proxy(field: np.ndarray, t: np.ndarray, r: np.ndarray) -> float:
    nt, nr = field.shape
    dt = (t[-1] - t[0]) / max(nt - 1, 1)
    dr = (r[-1] - r[0]) / max(nr - 1, 1)
    zt = np.linspace(-1, 1, nt + 2)[1:-1]
    zr = np.linspace(-1, 1, nr + 2)[1:-1]
    f = field * _bump(zt)[:, None] * _bump(zr)[None, :]
    F = np.fft.fft2(f) * dt * dr
    Lt, Lr = nt * dt, nr * dr
    kt = 2 * np.pi * np.fft.fftfreq(nt, d=dt)
    kr = 2 * np.pi * np.fft.fftfreq(nr, d=dr)
    k2 = kt[:, None] ** 2 + kr[None, :] ** 2
    return float(np.sqrt(np.sum(np.abs(F) ** 2 / (1.0 + k2)) / (Lt * Lr)))


def tabulate(rho_values, u_values, kp: KernelParams):
    """Rows (rho, u, eta, q, eta_rho, eta_m) of the sharp pair on a grid."""
    R, U = np.meshgrid(np.asarray(rho_values, float), np.asarray(u_values, float), indexing="ij")
    ev = sharp_pair(R, U, kp)
    return np.column_stack([R.ravel(), U.ravel(), ev.eta.ravel(), ev.q.ravel(),
                            ev.eta_rho.ravel(), ev.eta_m.ravel()])
