from __future__ import annotations

import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kfading import specfun
from kfading.specfun import (
    AccuracyTarget,
    ConditioningError,
    DomainError,
    PoleError,
)

from .conftest import db, rel


# --------------------------------------------------------------------------
# trivial identities


def test_gamma_known_values():
    assert specfun.gamma_fn(1.0) == 1.0
    assert specfun.gamma_fn(0.5) == pytest.approx(math.sqrt(math.pi), rel=1e-15)


@pytest.mark.parametrize("x", [0.0, -1.0, -7.0])
def test_gamma_poles(x):
    with pytest.raises(PoleError):
        specfun.gamma_fn(x)


@pytest.mark.parametrize("x", [0.1, 1.3, 7.0])
def test_gamma_upper_of_one_is_exponential(x):
    assert specfun.gamma_upper(1.0, x) == pytest.approx(math.exp(-x), rel=1e-14)


def test_gamma_upper_at_zero_is_gamma():
    assert specfun.gamma_upper(2.7, 0.0) == pytest.approx(math.gamma(2.7), rel=1e-15)


def test_gamma_upper_domain():
    with pytest.raises(DomainError):
        specfun.gamma_upper(1.0, -0.1)
    with pytest.raises(DomainError):
        specfun.gamma_upper(-1.5, 0.0)


def test_bessel_iv_at_zero():
    assert specfun.bessel_iv(0.0, 0.0) == 1.0
    assert specfun.bessel_iv(1.3, 0.0) == 0.0


@pytest.mark.parametrize("x", [0.05, 1.0, 9.0, 40.0])
def test_bessel_kv_half_order_closed_form(x):
    assert specfun.bessel_kv(0.5, x) == pytest.approx(math.sqrt(math.pi / (2 * x)) * math.exp(-x), rel=1e-12)


@pytest.mark.parametrize("v,x", [(0.3, 0.7), (1.4, 2.0), (3.7, 12.0)])
def test_bessel_kv_symmetry_exact(v, x):
    assert specfun.bessel_kv(-v, x) == specfun.bessel_kv(v, x)


def test_bessel_kv_domain():
    with pytest.raises(DomainError):
        specfun.bessel_kv(1.0, 0.0)


@pytest.mark.parametrize("a,z", [(0.4, 0.3), (2.5, 3.0), (-1.2, 5.0)])
def test_kummer_m_equal_parameters_is_exponential(a, z):
    assert specfun.kummer_m(a, a, z) == pytest.approx(math.exp(z), rel=1e-13)


def test_kummer_m_zero_numerator():
    assert specfun.kummer_m(0.0, 2.3, 4.0) == 1.0


@pytest.mark.parametrize("z", [0.2, 1.0, 6.0, 30.0])
def test_whittaker_w_reduces_to_exponential(z):
    assert specfun.whittaker_w(0.0, 0.5, z) == pytest.approx(math.exp(-z / 2), rel=1e-12)


def test_whittaker_m_small_argument_leading_order():
    lam, mu, z = 0.3, 0.8, 1e-8
    assert specfun.whittaker_m(lam, mu, z) / z ** (mu + 0.5) == pytest.approx(1.0, rel=1e-6)


def test_pochhammer_values():
    assert specfun.pochhammer(3.2, 0) == 1.0
    assert specfun.pochhammer(1.0, 6) == math.factorial(6)
    assert specfun.pochhammer(2.5, 3) == 39.375


def test_accuracy_target_validation():
    with pytest.raises(ValueError):
        AccuracyTarget(abs_tol=0.0, rel_tol=0.0)
    with pytest.raises(ValueError):
        AccuracyTarget(max_iterations=0)


def test_guard_noninteger():
    assert specfun.guard_noninteger(2.0) == (2.0 + specfun.INTEGER_GUARD, True)
    assert specfun.guard_noninteger(2.5) == (2.5, False)


# --------------------------------------------------------------------------
# frozen quadrature oracles


def test_gamma_against_euler_integral(derived):
    d = derived["gamma_fn"]
    assert rel(specfun.gamma_fn(d["x"]), d["value"]) < 1e-12


def test_gamma_upper_against_integral(derived):
    d = derived["gamma_upper"]
    assert rel(specfun.gamma_upper(d["a"], d["x"]), d["value"]) < 1e-12


def test_bessel_iv_against_integral(derived):
    d = derived["bessel_iv"]
    assert rel(specfun.bessel_iv(d["v"], d["x"]), d["value"]) < 1e-12


def test_bessel_kv_against_integral(derived):
    d = derived["bessel_kv"]
    assert rel(specfun.bessel_kv(d["v"], d["x"]), d["value"]) < 1e-12


def test_kummer_u_against_integral(derived):
    d = derived["kummer_u"]
    assert rel(specfun.kummer_u(d["a"], d["b"], d["z"]), d["value"]) < 1e-10


def test_whittaker_w_against_integral(derived):
    d = derived["whittaker_w"]
    assert rel(specfun.whittaker_w(d["lam"], d["mu"], d["z"]), d["value"]) < 1e-10


def test_meijer_instance_against_pdf_quadrature(derived):
    d = derived["meijer_instance"]
    assert rel(specfun.meijer_g_cdf_instance(d["L"], d["k"], d["x"]), d["value"]) < 1e-9


def test_meijer_instance_guard():
    with pytest.raises(ConditioningError):
        specfun.meijer_g_cdf_instance(3.0, 2.0, 1.0)


# --------------------------------------------------------------------------
# grid properties


@pytest.mark.parametrize("v", [0.0, 0.3, 1.5, 4.2, 10.7])
@pytest.mark.parametrize("x", [0.01, 0.8, 5.0, 60.0, 300.0])
def test_bessel_wronskian(v, x):
    # I_v K_{v+1} + I_{v+1} K_v = 1/x, in scaled form to avoid overflow
    lhs = specfun.bessel_iv_scaled(v, x) * specfun.bessel_kv_scaled(v + 1, x) + specfun.bessel_iv_scaled(
        v + 1, x
    ) * specfun.bessel_kv_scaled(v, x)
    assert lhs * x == pytest.approx(1.0, rel=1e-8)


@pytest.mark.parametrize("v,x", [(0.0, 0.5), (2.3, 7.0), (0.7, 150.0), (5.5, 0.02)])
def test_bessel_against_mpmath(v, x):
    assert rel(specfun.bessel_iv(v, x), float(mp.besseli(v, x))) < 1e-12
    assert rel(specfun.bessel_kv(v, x), float(mp.besselk(v, x))) < 1e-11


_U_A = [0.2, 0.9, 1.7, 3.1, 5.0]
_U_B = [-2.7, -1.3, -0.4, 0.6, 1.5, 2.8]
_U_Z = [0.1, 0.7, 2.5, 8.0, 20.0]


def _u_integral(a, b, z):
    # t = u^(1/a) removes the t^(a-1) endpoint singularity
    with mp.workdps(25):
        def f(u):
            t = u ** (1 / mp.mpf(a))
            return mp.e ** (-z * t) * (1 + t) ** (b - a - 1)

        edges = [0] + [mp.mpf(c) ** a for c in (0.1, 1, 10, 100)] + [mp.inf]
        return float(mp.quad(f, edges) / (a * mp.gamma(a)))


@pytest.mark.parametrize("a", _U_A)
@pytest.mark.parametrize("b", _U_B)
def test_kummer_u_against_integral_grid(a, b):
    for z in _U_Z:
        assert rel(specfun.kummer_u(a, b, z), _u_integral(a, b, z)) < 1e-7, (a, b, z)


@pytest.mark.filterwarnings("error")
@pytest.mark.parametrize("a,b", [(4.0, 2.0), (4.0, 3.0), (1.5, 0.7), (3.2, 1.2)])
@pytest.mark.parametrize("z", [1e-9, 1e-7, 1e-4])
def test_kummer_u_tiny_argument(a, b, z):
    # integer b takes the quadrature path, whose last piece sits deep in the tail
    assert rel(specfun.kummer_u(a, b, z), float(mp.hyperu(a, b, z))) < 1e-10


@pytest.mark.parametrize("lam,mu,z", [(-0.75, 0.25, 1.5), (0.4, 1.3, 3.0), (-1.6, 0.35, 0.4), (1.2, 2.05, 9.0)])
def test_whittaker_consistent_with_kummer(lam, mu, z):
    w = specfun.whittaker_w(lam, mu, z)
    via_u = math.exp(-z / 2) * z ** (mu + 0.5) * specfun.kummer_u(mu - lam + 0.5, 1 + 2 * mu, z)
    assert w == pytest.approx(via_u, rel=1e-14)
    m = specfun.whittaker_m(lam, mu, z)
    via_m = math.exp(-z / 2) * z ** (mu + 0.5) * specfun.kummer_m(mu - lam + 0.5, 1 + 2 * mu, z)
    assert m == pytest.approx(via_m, rel=1e-14)


@pytest.mark.parametrize("lam,mu,z", [(-0.75, 0.25, 1.5), (0.4, 1.3, 3.0), (1.2, 2.05, 9.0)])
def test_whittaker_against_mpmath(lam, mu, z):
    assert rel(specfun.whittaker_w(lam, mu, z), float(mp.whitw(lam, mu, z))) < 1e-10
    assert rel(specfun.whittaker_m(lam, mu, z), float(mp.whitm(lam, mu, z))) < 1e-12


def test_determinism():
    args = (1.37, -0.42, 2.9)
    assert specfun.kummer_u(*args) == specfun.kummer_u(*args)
    assert specfun.meijer_g_cdf_instance(3.0, 1.7, 2.2) == specfun.meijer_g_cdf_instance(3.0, 1.7, 2.2)


@settings(max_examples=60, deadline=None)
@given(
    a=st.floats(0.3, 4.0),
    b=st.floats(-2.5, 2.5).filter(lambda b: abs(b - round(b)) > 0.05),
    z=st.floats(0.2, 15.0),
)
def test_kummer_u_recurrence(a, b, z):
    # U(a, b, z) - a U(a+1, b, z) - U(a, b-1, z) = 0
    u = specfun.kummer_u(a, b, z)
    lhs = u - a * specfun.kummer_u(a + 1, b, z) - specfun.kummer_u(a, b - 1, z)
    scale = abs(u) + abs(a * specfun.kummer_u(a + 1, b, z)) + abs(specfun.kummer_u(a, b - 1, z))
    assert abs(lhs) <= 1e-9 * scale


@settings(max_examples=40, deadline=None)
@given(L=st.integers(1, 6), k=st.floats(0.3, 5.0).filter(lambda k: abs(k - round(k)) > 1e-3), x=st.floats(0.01, 60.0))
def test_corr_cdf_matches_mpmath_meijer(L, k, x):
    # G^{2,1}_{1,3}(x | 1 - (L+k)/2 ; (L-k)/2, (k-L)/2, -(L+k)/2)
    with mp.workdps(30):
        g = mp.meijerg([[1 - (L + k) / 2], []], [[(L - k) / 2, (k - L) / 2], [-(L + k) / 2]], x)
        ref = float(x ** ((L + k) / 2) * g / (mp.gamma(L) * mp.gamma(k)))
    assert abs(specfun.corr_sum_cdf(L, k, x) - ref) < 1e-10
