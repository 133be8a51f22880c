"""Gauss-Jacobi and Gauss-Legendre rules by the Golub-Welsch method."""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np


def jacobi_recurrence(nq: int, alpha: float, beta: float):
    """Monic recurrence coefficients (a_k, b_k) for (1-x)^alpha (1+x)^beta.

    Returns ``a`` of length nq and ``b`` of length nq-1 (b_1 ... b_{nq-1}).
    """
    if alpha <= -1 or beta <= -1:
        raise ValueError("Jacobi exponents must exceed -1")
    k = np.arange(nq, dtype=float)
    s = alpha + beta
    a = np.empty(nq)
    with np.errstate(invalid="ignore", divide="ignore"):
        a[:] = (beta**2 - alpha**2) / ((2 * k + s) * (2 * k + s + 2))
    a[0] = (beta - alpha) / (s + 2)
    kk = np.arange(1, nq, dtype=float)
    b = (4 * kk * (kk + alpha) * (kk + beta) * (kk + s)
         / ((2 * kk + s) ** 2 * (2 * kk + s + 1) * (2 * kk + s - 1)))
    if nq > 1:
        # k = 1 written without the removable 0/0 at alpha + beta = -1
        b[0] = 4 * (1 + alpha) * (1 + beta) / ((2 + s) ** 2 * (3 + s))
    return a, b


def jacobi_mass(alpha: float, beta: float) -> float:
    """int_{-1}^{1} (1-x)^alpha (1+x)^beta dx."""
    return math.exp(
        (alpha + beta + 1) * math.log(2.0)
        + math.lgamma(alpha + 1) + math.lgamma(beta + 1) - math.lgamma(alpha + beta + 2)
    )


@lru_cache(maxsize=64)
def gauss_jacobi(nq: int, alpha: float, beta: float) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the nq-point Gauss rule for (1-x)^alpha (1+x)^beta."""
    a, b = jacobi_recurrence(nq, alpha, beta)
    J = np.diag(a) + np.diag(np.sqrt(b), 1) + np.diag(np.sqrt(b), -1)
    x, V = np.linalg.eigh(J)
    w = jacobi_mass(alpha, beta) * V[0, :] ** 2
    if alpha == beta:
        # exact symmetry of the rule
        x = 0.5 * (x - x[::-1])
        w = 0.5 * (w + w[::-1])
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def gauss_legendre(nq: int) -> tuple[np.ndarray, np.ndarray]:
    return gauss_jacobi(nq, 0.0, 0.0)
