"""Model parameters and closed-form constants.

All quantities are dimensionless model units: the pressure constant is fixed
to ``a0 = (gamma-1)^2 / (4 gamma)`` and the coupling sign ``kappa`` is +1 for
gaseous stars and -1 for plasmas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


class ParameterError(ValueError):
    """Raised when model parameters violate a precondition."""


def sphere_area(n: int) -> float:
    """Surface area of the unit sphere in R^n, 2 pi^(n/2) / Gamma(n/2)."""
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def sobolev_constant(n: int) -> float:
    """Sharp constant A_n of ||f||^2_{L^{2n/(n-2)}} <= A_n ||grad f||^2_{L^2}."""
    if int(n) != n or n < 3:
        raise ParameterError(f"n must be an integer >= 3, got {n}")
    return 4.0 / (n * (n - 2)) * sphere_area(n + 1) ** (-2.0 / n)


@dataclass(frozen=True)
class ModelParams:
    n: int
    gamma: float
    kappa: int
    eps: float
    a0: float = field(init=False)
    theta: float = field(init=False)
    frakb: float = field(init=False)
    omega_n: float = field(init=False)
    A_n: float = field(init=False)

    def __post_init__(self):
        n, gamma, kappa, eps = self.n, self.gamma, self.kappa, self.eps
        if isinstance(n, bool) or int(n) != n or n < 3:
            raise ParameterError(f"n must be an integer >= 3, got {n}")
        if not gamma > 1.0:
            raise ParameterError(f"gamma must exceed 1, got {gamma}")
        if kappa not in (1, -1):
            raise ParameterError(f"kappa must be +1 or -1, got {kappa}")
        if not (0.0 < eps <= 1.0):
            raise ParameterError(f"eps must lie in (0, 1], got {eps}")
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "kappa", int(kappa))
        object.__setattr__(self, "a0", (gamma - 1.0) ** 2 / (4.0 * gamma))
        object.__setattr__(self, "theta", (gamma - 1.0) / 2.0)
        object.__setattr__(self, "frakb", (3.0 - gamma) / (2.0 * (gamma - 1.0)))
        object.__setattr__(self, "omega_n", sphere_area(n))
        object.__setattr__(self, "A_n", sobolev_constant(n))

    # constitutive relations
    def pressure(self, rho):
        return self.a0 * rho**self.gamma

    def internal_energy(self, rho):
        """Specific internal energy e(rho) = a0/(gamma-1) rho^(gamma-1)."""
        return self.a0 / (self.gamma - 1.0) * rho ** (self.gamma - 1.0)

    def sound_speed(self, rho):
        return (self.gamma * self.a0 * rho ** (self.gamma - 1.0)) ** 0.5

    @property
    def critical_gamma(self) -> float:
        """2(n-1)/n, the upper end of the conditional (critical-mass) range."""
        return 2.0 * (self.n - 1) / self.n

    @property
    def lower_gamma(self) -> float:
        """2n/(n+2), below which the gravitational estimate is unavailable."""
        return 2.0 * self.n / (self.n + 2)

    def with_eps(self, eps: float) -> "ModelParams":
        return ModelParams(self.n, self.gamma, self.kappa, eps)

    def as_dict(self) -> dict:
        return {
            "n": self.n, "gamma": self.gamma, "kappa": self.kappa, "eps": self.eps,
            "a0": self.a0, "theta": self.theta, "frakb": self.frakb,
            "omega_n": self.omega_n, "A_n": self.A_n,
        }


def derive(n: int, gamma: float, kappa: int, eps: float) -> ModelParams:
    return ModelParams(n, gamma, kappa, eps)


def _is_critical(params: ModelParams) -> bool:
    return math.isclose(params.gamma, params.critical_gamma, rel_tol=1e-14, abs_tol=0.0)


def _require_star(params: ModelParams, what: str) -> None:
    if params.kappa != 1:
        raise ParameterError(f"{what} is defined for gaseous stars (kappa=+1) only")


def B_coefficient(params: ModelParams) -> float:
    """B_{n,gamma}, the constant in the gravitational-energy bound.

    ``2/(n(n-2)) (a0/(gamma-1))^(-(n-2)/(n(gamma-1)))
    omega_n^((2(n-1)-n gamma)/(n(gamma-1))) omega_{n+1}^(-2/n)``
    """
    _require_star(params, "B_{n,gamma}")
    n, g = params.n, params.gamma
    if not g > params.lower_gamma:
        raise ParameterError(f"gamma must exceed 2n/(n+2)={params.lower_gamma}, got {g}")
    ng1 = n * (g - 1.0)
    return (
        2.0 / (n * (n - 2))
        * (params.a0 / (g - 1.0)) ** (-(n - 2) / ng1)
        * params.omega_n ** ((2.0 * (n - 1) - n * g) / ng1)
        * sphere_area(n + 1) ** (-2.0 / n)
    )


def critical_mass(params: ModelParams, E0: float | None = None) -> float:
    """Critical mass M_c(gamma) for gaseous stars.

    At gamma = 2(n-1)/n the value is B^(-n/2) and ``E0`` is ignored; for
    gamma in (2n/(n+2), 2(n-1)/n) the total initial energy ``E0`` is required.
    """
    _require_star(params, "critical mass")
    n, g = params.n, params.gamma
    if not (params.lower_gamma < g <= params.critical_gamma) and not _is_critical(params):
        raise ParameterError(
            f"critical mass is defined for gamma in ({params.lower_gamma}, {params.critical_gamma}], got {g}"
        )
    B = B_coefficient(params)
    if _is_critical(params):
        return B ** (-n / 2.0)
    if E0 is None or not E0 > 0:
        raise ParameterError("E0 > 0 is required below the critical gamma")
    denom = (n + 2) * g - 2.0 * n
    gap = 2.0 * (n - 1) - n * g
    first = ((n - 2) * B / (n * (g - 1.0))) ** (-n * (g - 1.0) / denom)
    second = ((n - 2) * E0 / gap) ** (-gap / denom)
    return first * second


def gamma_coefficient(params: ModelParams, M: float) -> float:
    """C_gamma of the conditional energy estimate; must be positive."""
    _require_star(params, "C_gamma")
    n, g = params.n, params.gamma
    if not (params.lower_gamma < g <= params.critical_gamma) and not _is_critical(params):
        raise ParameterError(f"C_gamma is defined for gamma in ({params.lower_gamma}, {params.critical_gamma}]")
    if _is_critical(params):
        value = 1.0 - B_coefficient(params) * M ** (2.0 / n)
    else:
        value = (2.0 * (n - 1) - n * g) / (n - 2)
    if not value > 0:
        raise ParameterError(f"C_gamma = {value} <= 0: mass {M} is not below the critical mass")
    return value
