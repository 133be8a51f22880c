"""Approximate initial data on [1/b, b] from a raw radial profile.

Pipeline: mollify sqrt(rho0) in R^n (delta = sqrt(eps)) and add
eps e^{-r^2}; renormalise to mass M; taper to the boundary value
b^{-(n-alpha)} over [b-1, b-1/2]; renormalise again on [1/b, b]; build the
velocity from the mollified truncated m0/sqrt(rho0) (delta = 1/b) plus a
boundary correction that makes the stress vanish at r = b.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy import integrate, special
from scipy.interpolate import PchipInterpolator

from nsp_free.constants import ModelParams, ParameterError, sphere_area
from nsp_free.quadrature import gauss_legendre

MIN_B = 4.0


@dataclass(frozen=True)
class InitialProfile:
    """Raw data rho0(r), m0(r) on r >= 0, zero beyond the last sample."""

    r_samples: np.ndarray
    rho0: np.ndarray
    m0: np.ndarray
    M: float
    n: int
    rho_fn: Callable = field(repr=False, compare=False)
    m_fn: Callable = field(repr=False, compare=False)
    breaks: tuple = ()

    @property
    def support(self) -> float:
        return float(self.r_samples[-1])


def _mass(rho_fn, R, n, breaks=()) -> float:
    pts = sorted(p for p in breaks if 0 < p < R)
    val, _ = integrate.quad(lambda r: rho_fn(r) * r ** (n - 1), 0.0, R, points=pts or None,
                            limit=400, epsabs=0.0, epsrel=1e-13)
    return sphere_area(n) * val


def _from_functions(rho_fn, m_fn, R, n, samples=2001, breaks=()) -> InitialProfile:
    r = np.linspace(0.0, R, samples)
    rho = np.asarray(rho_fn(r), float)
    m = np.asarray(m_fn(r), float)
    return InitialProfile(r, rho, m, _mass(rho_fn, R, n, breaks), n, rho_fn, m_fn, tuple(breaks))


def _zero_m(r):
    return np.zeros_like(np.asarray(r, float))


def uniform_ball(M: float, R: float, n: int = 3, velocity: Optional[Callable] = None) -> InitialProfile:
    """Constant density on the ball of radius R carrying mass M."""
    c = n * M / (sphere_area(n) * R**n)

    def rho_fn(r):
        r = np.asarray(r, float)
        return np.where(r <= R, c, 0.0)

    m_fn = _zero_m if velocity is None else (lambda r: rho_fn(r) * velocity(np.asarray(r, float)))
    return _from_functions(rho_fn, m_fn, R, n, breaks=(R,))


def gaussian(M: float, width: float = 1.0, n: int = 3, velocity: Optional[Callable] = None,
             cutoff: float = 8.0) -> InitialProfile:
    """c exp(-r^2/width^2), truncated at cutoff*width (below 1e-27 there)."""
    R = cutoff * width
    base = sphere_area(n) * 0.5 * width**n * math.gamma(n / 2)
    c = M / base

    def rho_fn(r):
        r = np.asarray(r, float)
        return np.where(r <= R, c * np.exp(-(r / width) ** 2), 0.0)

    m_fn = _zero_m if velocity is None else (lambda r: rho_fn(r) * velocity(np.asarray(r, float)))
    return _from_functions(rho_fn, m_fn, R, n, breaks=(R,))


def polytrope(M: float, R: float, k: float = 1.0, n: int = 3, velocity: Optional[Callable] = None) -> InitialProfile:
    """c (1 - r^2/R^2)_+^k, a truncated power-law star."""
    # int_0^R (1 - r^2/R^2)^k r^{n-1} dr = R^n B(n/2, k+1)/2
    c = M / (sphere_area(n) * 0.5 * R**n * special.beta(n / 2, k + 1))

    def rho_fn(r):
        r = np.asarray(r, float)
        return c * np.clip(1.0 - (r / R) ** 2, 0.0, None) ** k

    m_fn = _zero_m if velocity is None else (lambda r: rho_fn(r) * velocity(np.asarray(r, float)))
    return _from_functions(rho_fn, m_fn, R, n, breaks=(R,))


PRESETS = {"uniform_ball": uniform_ball, "gaussian": gaussian, "polytrope": polytrope}


def profile_from_table(r, rho0, m0, n: int = 3) -> InitialProfile:
    """Sampled profile interpolated monotone-cubically, zero past the end."""
    r = np.asarray(r, float)
    rho0 = np.asarray(rho0, float)
    m0 = np.asarray(m0, float)
    if r.ndim != 1 or r.size < 4 or np.any(np.diff(r) <= 0):
        raise ParameterError("table radii must be strictly increasing with at least 4 rows")
    if not (np.all(np.isfinite(rho0)) and np.all(np.isfinite(m0))):
        raise ParameterError("table contains non-finite samples")
    if np.any(rho0 < 0):
        raise ParameterError("density samples must be non-negative")
    if np.any((rho0 == 0) & (m0 != 0)):
        raise ParameterError("momentum must vanish where the density does")
    ip_rho = PchipInterpolator(r, rho0, extrapolate=False)
    ip_m = PchipInterpolator(r, m0, extrapolate=False)
    R = r[-1]

    def rho_fn(s):
        s = np.asarray(s, float)
        v = ip_rho(np.clip(s, r[0], None))
        return np.where((s <= R), np.nan_to_num(np.clip(v, 0.0, None)), 0.0)

    def m_fn(s):
        s = np.asarray(s, float)
        v = ip_m(np.clip(s, r[0], None))
        return np.where((s <= R), np.nan_to_num(v), 0.0)

    M = _mass(rho_fn, R, n, breaks=tuple(r))
    if not M > 0:
        raise ParameterError("profile has zero mass")
    return InitialProfile(r, rho0, m0, M, n, rho_fn, m_fn, (float(R),))


def read_table(path, n: int = 3) -> InitialProfile:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    try:
        cols = {k: np.array([float(row[k]) for row in rows]) for k in ("r", "rho0", "m0")}
    except KeyError as exc:
        raise ParameterError(f"profile table needs columns r,rho0,m0 (missing {exc})") from None
    return profile_from_table(cols["r"], cols["rho0"], cols["m0"], n)


# ---------------------------------------------------------------- mollifier


def bump(z):
    """exp(-1/(1-z^2)) on |z| < 1, unnormalised."""
    z = np.asarray(z, float)
    out = np.zeros_like(z)
    inside = np.abs(z) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - z[inside] ** 2))
    return out


@lru_cache(maxsize=None)
def mollifier_constant(n: int) -> float:
    """c with c int_{R^n} exp(-1/(1-|x|^2)) dx = 1."""
    val, _ = integrate.quad(lambda y: math.exp(-1.0 / (1.0 - y * y)) * y ** (n - 1), 0.0, 1.0,
                            epsabs=0.0, epsrel=1e-13, limit=200)
    return 1.0 / (sphere_area(n) * val)


def _F(z):
    """Antiderivative of exp(-1/z) on z > 0 with F(0) = 0."""
    z = np.asarray(z, float)
    out = np.zeros_like(z)
    pos = z > 0
    zp = z[pos]
    out[pos] = zp * np.exp(-1.0 / zp) - special.exp1(1.0 / zp)
    return out


def _G(t, n):
    """int_0^t c exp(-1/(1-y^2)) y dy for t in [0, 1]."""
    t = np.clip(t, 0.0, 1.0)
    return 0.5 * mollifier_constant(n) * (_F(np.ones_like(t)) - _F(1.0 - t * t))


def cutoff(z):
    """Smooth monotone step: 0 for z <= 0, 1 for z >= 1."""
    z = np.asarray(z, float)

    def sig(x):
        out = np.zeros_like(x)
        pos = x > 0
        out[pos] = np.exp(-1.0 / x[pos])
        return out

    a, b = sig(z), sig(1.0 - z)
    return a / (a + b)


def _kernel_weighted(r, s, delta, n, vector):
    """K(r, s) s^{n-1} for the radialised n-D mollifier J_delta.

    Scalar: the sphere average of J_delta(r e - s w). Vector: the same with
    the extra factor (e . w), giving the radial component of a mollified
    radial vector field.
    """
    r = np.asarray(r, float)
    s = np.asarray(s, float)
    lo = np.abs(r - s)
    hi = np.minimum(r + s, delta)
    valid = hi > lo
    out = np.zeros(np.broadcast(r, s).shape)
    if n == 3 and not vector:
        with np.errstate(divide="ignore", invalid="ignore"):
            val = 2.0 * np.pi * s / (r * delta) * (_G(hi / delta, n) - _G(np.minimum(lo, delta) / delta, n))
        out = np.where(valid, val, 0.0)
    else:
        t, w = gauss_legendre(48)
        rr, ss = np.broadcast_arrays(r, s)
        L, H = np.broadcast_to(lo, rr.shape), np.broadcast_to(hi, rr.shape)
        # d = L + (H - L)(1 - cos phi)/2 absorbs the square-root endpoint
        # behaviour of (1 - c^2)^{(n-3)/2} at d = |r - s| and d = r + s
        phi = 0.5 * np.pi * (t + 1.0)
        h = 0.25 * np.pi * (H - L)
        d = L[..., None] + 0.5 * (H - L)[..., None] * (1.0 - np.cos(phi))
        jac = np.sin(phi)
        with np.errstate(divide="ignore", invalid="ignore"):
            c = (rr[..., None] ** 2 + ss[..., None] ** 2 - d**2) / (2 * rr[..., None] * ss[..., None])
            c = np.clip(c, -1.0, 1.0)
            integrand = mollifier_constant(n) * delta**-n * bump(d / delta) * d * (1 - c * c) ** ((n - 3) / 2)
            if vector:
                integrand = integrand * c
            val = sphere_area(n - 1) * ss ** (n - 2) / rr * np.sum(w * jac * integrand, axis=-1) * h
        out = np.where(valid, val, 0.0)
    # r -> 0: the sphere average collapses to J_delta(s) (zero for the vector kernel)
    tiny = r < 1e-9 * delta
    if np.any(tiny):
        at0 = 0.0 if vector else sphere_area(n) * mollifier_constant(n) * delta**-n * bump(s / delta) * s ** (n - 1)
        out = np.where(tiny, at0, out)
    return np.nan_to_num(out)


def radial_convolve(f: Callable, r, delta: float, n: int, vector: bool = False, ns: int = 401,
                    breaks=()) -> np.ndarray:
    """(f * J_delta)(r) for a radial f (or radial field f(r) x/r when ``vector``).

    The s-integral over [max(0, r-delta), r+delta] uses composite Simpson
    with ``ns`` points per panel; the kernel itself is smooth in s, and
    ``breaks`` (radii where f jumps or kinks) split the range into panels.
    """
    r = np.atleast_1d(np.asarray(r, float))
    br = np.sort(np.asarray(breaks, float).ravel())
    out = np.empty(r.size)
    chunk = max(1, 200_000 // (ns * (br.size + 1)))
    u = np.linspace(0.0, 1.0, ns)
    # f is sampled just inside each panel so a jump at a break contributes
    # its one-sided limits
    u_in = u.copy()
    u_in[0], u_in[-1] = 1e-12, 1.0 - 1e-12
    for i0 in range(0, r.size, chunk):
        rc = r[i0:i0 + chunk]
        lo = np.maximum(rc - delta, 0.0)
        hi = rc + delta
        cuts = np.column_stack([lo, np.clip(br[None, :], lo[:, None], hi[:, None]), hi])
        acc = np.zeros(rc.size)
        for j in range(cuts.shape[1] - 1):
            a, b = cuts[:, j], cuts[:, j + 1]
            live = b > a
            if not np.any(live):
                continue
            s = a[live, None] + (b - a)[live, None] * u[None, :]
            s_in = a[live, None] + (b - a)[live, None] * u_in[None, :]
            integrand = f(s_in) * _kernel_weighted(rc[live, None], s, delta, n, vector)
            acc[live] += integrate.simpson(integrand, x=s, axis=1)
        out[i0:i0 + chunk] = acc
    return out


def mollify_density(profile: InitialProfile, params: ModelParams, r) -> np.ndarray:
    """((sqrt(rho0) * J_delta)(r) + eps e^{-r^2})^2 with delta = sqrt(eps)."""
    eps = params.eps
    if not eps > 0:
        raise ParameterError("eps must be positive")
    if not np.all(np.isfinite(profile.rho0)):
        raise ParameterError("profile contains non-finite samples")
    delta = math.sqrt(eps)
    r = np.asarray(r, float)
    conv = radial_convolve(lambda s: np.sqrt(profile.rho_fn(s)), r, delta, params.n, breaks=profile.breaks)
    return (conv + eps * np.exp(-r * r)) ** 2


def radial_mass(r, density, n: int) -> float:
    """omega_n int rho r^{n-1} dr by composite Simpson on the samples."""
    return sphere_area(n) * float(integrate.simpson(np.asarray(density) * r ** (n - 1), x=r))


def renormalize_mass(r, density, M: float, n: int) -> tuple[np.ndarray, float]:
    """Scale ``density`` to carry mass M on the grid r; returns (density, scale)."""
    m = radial_mass(r, density, n)
    if not m > 0:
        raise ParameterError("cannot renormalise a zero-mass density")
    scale = M / m
    return np.asarray(density) * scale, scale


def boundary_alpha(params: ModelParams) -> float:
    return min(0.5, (1.0 - 1.0 / params.gamma) * params.n)


def _check_b(b: float) -> None:
    if not b >= MIN_B:
        raise ParameterError(f"b must be at least {MIN_B:g} (got {b:g})")


def taper_boundary(r, density, b: float, params: ModelParams) -> np.ndarray:
    """Blend sqrt(density) into b^{-(n-alpha)/2} across [b-1, b-1/2]."""
    _check_b(b)
    n = params.n
    S = cutoff(2.0 * (np.asarray(r) - (b - 1.0)))
    target = b ** (-(n - boundary_alpha(params)) / 2.0)
    blended = (np.sqrt(density) * (1.0 - S) + target * S) ** 2
    return np.where(S > 0.0, blended, density)


@dataclass
class ApproxData:
    a: float
    b: float
    r: np.ndarray
    rho0_eb: np.ndarray
    u0_eb: np.ndarray
    E0_eb: float
    E1_eb: float
    alpha: float
    M: float
    eps: float
    renorm_scale: float = 1.0
    u_tilde: Optional[np.ndarray] = None
    _velocity_fn: Optional[Callable] = field(default=None, repr=False)

    def velocity(self, r) -> np.ndarray:
        """u0 at arbitrary radii: the pipeline formula when available,
        otherwise monotone interpolation of the stored samples."""
        if self._velocity_fn is not None:
            return self._velocity_fn(np.asarray(r, float))
        return PchipInterpolator(self.r, self.u0_eb)(np.asarray(r, float))

    def density(self, r) -> np.ndarray:
        return PchipInterpolator(self.r, self.rho0_eb)(np.asarray(r, float))


def build_velocity(profile: InitialProfile, r, density_eb, b: float, params: ModelParams,
                   nr_fine: int = 0):
    """Velocity samples on r plus a callable evaluating the same formula.

    Returns (u, u_tilde, u_fn).
    """
    _check_b(b)
    r = np.asarray(r, float)
    density_eb = np.asarray(density_eb, float)
    if np.any(density_eb <= 0) or not np.all(np.isfinite(density_eb)):
        raise ParameterError("density must be strictly positive on [1/b, b]")
    n, eps = params.n, params.eps
    lo, hi = 4.0 / b, b - 2.0

    def g(s):
        rho = profile.rho_fn(s)
        m = profile.m_fn(s)
        with np.errstate(divide="ignore", invalid="ignore"):
            v = np.where(rho > 0, m / np.sqrt(np.where(rho > 0, rho, 1.0)), 0.0)
        return np.where((s >= lo) & (s <= hi), v, 0.0)

    has_momentum = np.any(profile.m0 != 0)
    dens_ip = PchipInterpolator(r, density_eb)

    def tilde(x):
        if not has_momentum:
            return np.zeros_like(x)
        return radial_convolve(g, x, 1.0 / b, n, vector=True, breaks=(lo, hi) + profile.breaks) / np.sqrt(dens_ip(x))

    # f = p(rho)/rho; w(r) = r^{1-n} int_r^b f z^{n-1} dz
    f = params.a0 * density_eb ** (params.gamma - 1.0)
    cum = integrate.cumulative_simpson(f * r ** (n - 1), x=r, initial=0.0)
    w = (cum[-1] - cum) / r ** (n - 1)
    S = cutoff(4.0 * (r - (b - 0.5)))
    ut = tilde(r)
    u = ut - S * w / eps

    t, wq = gauss_legendre(32)

    def u_fn(x):
        x = np.atleast_1d(x)
        out = np.empty(x.size)
        for i, xi in enumerate(x):
            h = 0.5 * (b - xi)
            z = xi + h * (t + 1.0)
            integral = h * np.sum(wq * params.a0 * dens_ip(z) ** (params.gamma - 1.0) * z ** (n - 1))
            out[i] = -cutoff(np.array([4.0 * (xi - (b - 0.5))]))[0] * integral / xi ** (n - 1) / eps
        return tilde(x) + out

    return u, ut, u_fn


def seed_energies(data: ApproxData, params: ModelParams) -> tuple[float, float]:
    """(E0, E1): energy seed (field term for kappa = -1) and BD seed."""
    r, rho, u = data.r, data.rho0_eb, data.u0_eb
    n, w = params.n, params.omega_n
    dens = rho * (0.5 * u * u + params.internal_energy(rho))
    if params.kappa == -1:
        cum = integrate.cumulative_simpson(rho * r ** (n - 1), x=r, initial=0.0)
        dens = dens + 0.5 * cum**2 / r ** (2 * (n - 1))
    E0 = w * float(integrate.simpson(dens * r ** (n - 1), x=r))
    sq = np.sqrt(rho)
    d = np.gradient(sq, r, edge_order=2)
    E1 = params.eps**2 * w * float(integrate.simpson(d * d * r ** (n - 1), x=r))
    return E0, E1


def build(profile: InitialProfile, params: ModelParams, b: float, nr: int = 4001) -> ApproxData:
    """Full pipeline on a uniform grid of ``nr`` points over [1/b, b]."""
    _check_b(b)
    if profile.n != params.n:
        raise ParameterError("profile dimension differs from params.n")
    n = params.n
    a = 1.0 / b
    delta = math.sqrt(params.eps)
    if nr % 2 == 0:
        nr += 1
    # first renormalisation is over all of R^n
    R = max(b, profile.support + delta) + 6.0
    rg = np.linspace(0.0, R, 2 * int(R * 200) + 1)
    tilde_all = mollify_density(profile, params, rg)
    _, s1 = renormalize_mass(rg, tilde_all, profile.M, n)
    r = np.linspace(a, b, nr)
    rho_eps = s1 * mollify_density(profile, params, r)
    tapered = taper_boundary(r, rho_eps, b, params)
    rho_eb, s2 = renormalize_mass(r, tapered, profile.M, n)
    u, ut, u_fn = build_velocity(profile, r, rho_eb, b, params)
    data = ApproxData(a, b, r, rho_eb, u, 0.0, 0.0, boundary_alpha(params), profile.M, params.eps,
                      renorm_scale=s2, u_tilde=ut, _velocity_fn=u_fn)
    data.E0_eb, data.E1_eb = seed_energies(data, params)
    return data


@dataclass(frozen=True)
class Compatibility:
    residual_u_inner: float
    residual_stress: float


def verify_compatibility(data: ApproxData, params: ModelParams, h: float = 1e-3) -> Compatibility:
    """|u(a)| and p(rho) - eps rho (u_r + (n-1)u/r) at r = b.

    u_r at b uses the fourth-order one-sided difference on b - k h,
    k = 0..4, evaluated through ``data.velocity``.
    """
    b, n = data.b, params.n
    pts = b - h * np.arange(5)
    uv = data.velocity(pts)
    ur = (25 * uv[0] - 48 * uv[1] + 36 * uv[2] - 16 * uv[3] + 3 * uv[4]) / (12 * h)
    rho_b = float(data.rho0_eb[-1])
    res = params.pressure(rho_b) - params.eps * rho_b * (ur + (n - 1) * uv[0] / b)
    return Compatibility(abs(float(data.u0_eb[0])), abs(float(res)))


def write_outputs(data: ApproxData, params: ModelParams, csv_path, json_path) -> dict:
    import json

    comp = verify_compatibility(data, params)
    with open(csv_path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["r", "rho", "u"])
        for row in zip(data.r, data.rho0_eb, data.u0_eb):
            wr.writerow([repr(float(v)) for v in row])
    side = {
        "M": data.M, "E0": data.E0_eb, "E1": data.E1_eb, "alpha": data.alpha, "eps": data.eps,
        "b": data.b, "residual_stress": comp.residual_stress, "residual_u_inner": comp.residual_u_inner,
    }
    with open(json_path, "w") as fh:
        json.dump(side, fh, indent=2)
    return side
