"""Compiled inner loops for the solver step and the per-step diagnostics.

These mirror the numpy reference functions in ``solver`` and ``monitor``
(tests compare them to rounding) but fuse the work into single passes.
"""

from __future__ import annotations

import numba
import numpy as np

_jit = numba.njit(cache=True, fastmath=False)


@_jit
def densities(r, dx, n):
    N = dx.size
    rho = np.empty(N)
    for c in range(N):
        rho[c] = dx[c] * n / (r[c + 1] ** n - r[c] ** n)
    return rho


@_jit
def accel(r, u, x, dx, m, n, gamma, kappa, eps, a0, acc, rho):
    N = dx.size
    rn = np.empty(N + 1)
    for j in range(N + 1):
        rn[j] = r[j] ** (n - 1)
    for c in range(N):
        rho[c] = dx[c] * n / (rn[c + 1] * r[c + 1] - rn[c] * r[c])
    # cell stresses consumed on the fly; sigma vanishes beyond the last cell
    sig_prev = 0.0
    for c in range(N + 1):
        if c < N:
            div = (rn[c + 1] * u[c + 1] - rn[c] * u[c]) / dx[c]
            sig = a0 * rho[c] ** gamma - eps * rho[c] * rho[c] * div
        else:
            sig = 0.0
        if c > 0:
            k = min(c, N - 1)
            gx = (rho[k] - rho[k - 1]) / (0.5 * (dx[k - 1] + dx[k]))
            acc[c] = (-rn[c] * (sig - sig_prev) / m[c] - kappa * x[c] / rn[c]
                      - (n - 1) * eps * rn[c] / r[c] * gx * u[c])
        sig_prev = sig
    acc[0] = 0.0


@_jit
def _valid(r, rho):
    for i in range(r.size):
        if not np.isfinite(r[i]):
            return 1
    for i in range(r.size - 1):
        if r[i + 1] <= r[i]:
            return 2
    for c in range(rho.size):
        if not np.isfinite(rho[c]):
            return 1
        if rho[c] <= 0.0:
            return 3
    return 0


@_jit
def heun(r0, u0, x, dx, m, dt, n, gamma, kappa, eps, a0):
    """Two-stage SSP step. Returns (r, u, rho, code); code 0 means valid."""
    M = r0.size
    acc = np.empty(M)
    rho = np.empty(M - 1)
    accel(r0, u0, x, dx, m, n, gamma, kappa, eps, a0, acc, rho)
    r1 = r0 + dt * u0
    u1 = u0 + dt * acc
    rho1 = densities(r1, dx, n)
    code = _valid(r1, rho1)
    if code != 0:
        return r1, u1, rho1, code
    accel(r1, u1, x, dx, m, n, gamma, kappa, eps, a0, acc, rho)
    r2 = 0.5 * (r0 + r1 + dt * u1)
    u2 = 0.5 * (u0 + u1 + dt * acc)
    r2[0] = r0[0]
    u2[0] = 0.0
    rho2 = densities(r2, dx, n)
    return r2, u2, rho2, _valid(r2, rho2)


@_jit
def stability(r, u, rho, gamma, eps, a0):
    """(acoustic step limit, viscous step limit dr^2/(2 eps), max wave speed)."""
    acoustic = np.inf
    viscous = np.inf
    wave = 0.0
    for c in range(rho.size):
        dr = r[c + 1] - r[c]
        s = max(abs(u[c]), abs(u[c + 1])) + np.sqrt(gamma * a0 * rho[c] ** (gamma - 1.0))
        acoustic = min(acoustic, dr / s)
        viscous = min(viscous, dr * dr / (2.0 * eps))
        wave = max(wave, s)
    return acoustic, viscous, wave


@_jit
def functionals(r, u, x, dx, m, rho, n, gamma, kappa, eps, a0, d, D):
    """(energy, dissipation, bd, bd_rate, int_K rho^{g+1} dr, velocity integral),
    all in Lagrangian units (without the omega_n factor)."""
    N = rho.size
    e_coef = a0 / (gamma - 1.0)
    theta = 0.5 * (gamma - 1.0)
    E = 0.0
    Dis = 0.0
    B = 0.0
    R = 0.0
    src = 0.0
    for j in range(N + 1):
        if j == 0:
            gx = (rho[1] - rho[0]) / (0.5 * (dx[0] + dx[1]))
            re = rho[0]
        elif j == N:
            gx = (rho[N - 1] - rho[N - 2]) / (0.5 * (dx[N - 2] + dx[N - 1]))
            re = rho[N - 1]
        else:
            gx = (rho[j] - rho[j - 1]) / (0.5 * (dx[j - 1] + dx[j]))
            re = 0.5 * (rho[j] + rho[j - 1])
        grav = kappa / (n - 2) * m[j] * x[j] / r[j] ** (n - 2)
        E += 0.5 * u[j] ** 2 * m[j] - grav
        Dis += eps * (n - 1) * m[j] * u[j] ** 2 / r[j] ** 2
        w = u[j] + eps * r[j] ** (n - 1) * gx
        B += 0.5 * w * w * m[j] - grav
        R += eps * gamma * a0 * re ** (gamma - 1.0) * gx * gx * r[j] ** (2 * n - 2) * m[j]
    hd = 0.0
    hv = 0.0
    for c in range(N):
        ec = e_coef * rho[c] ** (gamma - 1.0) * dx[c]
        E += ec
        B += ec
        ux = (u[c + 1] - u[c]) / dx[c]
        rbar = 0.5 * (r[c + 1] ** (n - 1) + r[c] ** (n - 1))
        Dis += eps * rho[c] ** 2 * (rbar * ux) ** 2 * dx[c]
        src += rho[c] * dx[c]
        lo = min(max(r[c], d), D)
        hi = min(max(r[c + 1], d), D)
        if hi > lo:
            uc = 0.5 * (u[c] + u[c + 1])
            hd += rho[c] ** (gamma + 1.0) * (hi - lo)
            hv += (rho[c] * abs(uc) ** 3 + rho[c] ** (gamma + theta)) * (hi**n - lo**n) / n
    rN = rho[N - 1]
    pN = a0 * rN**gamma
    dpN = gamma * a0 * rN ** (gamma - 1.0)
    Dis += eps * (n - 1) * rN * u[N] ** 2 * r[N] ** (n - 2)
    B += pN * r[N] ** n / n
    R += pN * dpN * r[N] ** n / (n * eps) - eps * kappa * src + eps * kappa * x[N] * rN
    return E, Dis, B, R, hd, hv

