import math

import mpmath as mp
import pytest
from hypothesis import given, strategies as st

from nsp_free.constants import (
    ModelParams,
    ParameterError,
    B_coefficient,
    critical_mass,
    derive,
    gamma_coefficient,
    sobolev_constant,
    sphere_area,
)

mp.mp.dps = 50


def mp_sphere(n):
    return 2 * mp.pi ** (mp.mpf(n) / 2) / mp.gamma(mp.mpf(n) / 2)


def mp_B(n, gamma):
    g = mp.mpf(gamma)
    a0 = (g - 1) ** 2 / (4 * g)
    ng1 = n * (g - 1)
    return (mp.mpf(2) / (n * (n - 2)) * (a0 / (g - 1)) ** (-(n - 2) / ng1)
            * mp_sphere(n) ** ((2 * (n - 1) - n * g) / ng1) * mp_sphere(n + 1) ** (mp.mpf(-2) / n))


def test_derive_reference_values():
    p = derive(3, 2.0, 1, 0.1)
    assert p.a0 == 0.125 and p.theta == 0.5 and p.frakb == 0.5
    assert abs(p.omega_n / (4 * math.pi) - 1) < 1e-14


def test_derive_five_thirds():
    p = derive(3, 5 / 3, -1, 0.01)
    assert p.theta == pytest.approx(1 / 3, rel=1e-15)
    assert p.frakb == pytest.approx(1.0, rel=1e-14)


def test_frakb_vanishes_at_gamma_three():
    assert derive(3, 3.0, 1, 1.0).frakb == 0.0


@pytest.mark.parametrize("bad", [(2, 2.0, 1, 0.1), (3, 1.0, 1, 0.1), (3, 2.0, 0, 0.1), (3, 2.0, 1, 0.0), (3, 2.0, 1, 1.5)])
def test_derive_rejects(bad):
    with pytest.raises(ParameterError):
        derive(*bad)


@given(st.floats(1.0001, 10.0), st.integers(3, 8))
def test_exponent_identities(gamma, n):
    p = ModelParams(n, gamma, 1, 0.5)
    assert p.theta > 0 and p.frakb > -0.5
    assert p.theta * (2 * p.frakb + 1) == pytest.approx(1.0, rel=1e-12)
    assert p.a0 / (gamma - 1) == pytest.approx((gamma - 1) / (4 * gamma), rel=1e-14)
    assert p.a0 == (gamma - 1) ** 2 / (4 * gamma)
    assert ModelParams(n, gamma, 1, 0.5) == p


@pytest.mark.parametrize("n", range(3, 11))
def test_sphere_area_against_mpmath(n):
    assert sphere_area(n) == pytest.approx(float(mp_sphere(n)), rel=1e-14)


def test_sobolev_constant_values():
    assert sobolev_constant(3) == pytest.approx(4 / 3 * (2 * math.pi**2) ** (-2 / 3), rel=1e-14)
    assert sobolev_constant(3) == pytest.approx(0.18255, abs=5e-6)
    assert sobolev_constant(4) == pytest.approx(0.5 * (8 * math.pi**2 / 3) ** -0.5, rel=1e-14)
    for n in (3, 5, 7):
        assert sobolev_constant(n) * n * (n - 2) / 4 == pytest.approx(sphere_area(n + 1) ** (-2 / n), rel=1e-14)


def test_B_at_critical_gamma_closed_form():
    B = B_coefficient(ModelParams(3, 4 / 3, 1, 1.0))
    assert B == pytest.approx(2 / 3 * 16 * (2 * math.pi**2) ** (-2 / 3), rel=1e-13)
    assert B == pytest.approx(1.4604, abs=1e-4)


@pytest.mark.parametrize("n,gamma", [(3, 1.25), (3, 1.3), (3, 2.0), (4, 1.4), (5, 1.5)])
def test_B_against_arbitrary_precision(n, gamma):
    assert B_coefficient(ModelParams(n, gamma, 1, 1.0)) == pytest.approx(float(mp_B(n, gamma)), rel=1e-13)


def test_B_rejects_plasma_and_low_gamma():
    with pytest.raises(ParameterError):
        B_coefficient(ModelParams(3, 4 / 3, -1, 1.0))
    with pytest.raises(ParameterError):
        B_coefficient(ModelParams(3, 1.1, 1, 1.0))


def test_critical_mass_at_critical_gamma():
    p = ModelParams(3, 4 / 3, 1, 1.0)
    Mc = critical_mass(p)
    assert Mc == pytest.approx(0.5666, abs=1e-4)
    assert critical_mass(p, E0=123.0) == Mc


def test_critical_mass_decreases_in_E0():
    p = ModelParams(3, 1.3, 1, 1.0)
    assert critical_mass(p, 2.0) < critical_mass(p, 1.0)


def test_critical_mass_one_sided_limit():
    crit = critical_mass(ModelParams(3, 4 / 3, 1, 1.0))
    errs = [abs(critical_mass(ModelParams(3, 4 / 3 - h, 1, 1.0), 1.0) / crit - 1) for h in (1e-6, 1e-9, 1e-12)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-9


def test_critical_mass_rejects_out_of_range():
    with pytest.raises(ParameterError):
        critical_mass(ModelParams(3, 1.5, 1, 1.0))
    with pytest.raises(ParameterError):
        critical_mass(ModelParams(3, 1.3, 1, 1.0))  # E0 missing


def test_gamma_coefficient():
    assert gamma_coefficient(ModelParams(3, 1.25, 1, 1.0), 1.0) == pytest.approx(0.25, rel=1e-14)
    p = ModelParams(3, 4 / 3, 1, 1.0)
    Mc, B = critical_mass(p), B_coefficient(p)
    assert gamma_coefficient(p, Mc / 2) == pytest.approx(1 - B * (Mc / 2) ** (2 / 3), rel=1e-14)
    assert gamma_coefficient(p, Mc * (1 - 1e-9)) < 1e-8
    with pytest.raises(ParameterError):
        gamma_coefficient(p, Mc * 1.01)
