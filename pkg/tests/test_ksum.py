from __future__ import annotations

import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kfading import ksum
from kfading.ksum import (
    CombinatorialCostError,
    InterferenceProfile,
    TruncationPolicy,
)
from kfading.quadrature import integrate_log

from .conftest import db, rel, within_mc
from .oracles import laplace


def squared_k_pdf(x: float, k: float, inr: float) -> float:
    b = mp.mpf(k) / inr
    return float(2 * b ** ((k + 1) / 2) * mp.mpf(x) ** ((k - 1) / 2) * mp.besselk(k - 1, 2 * mp.sqrt(b * x)) / mp.gamma(k))


PROFILES = {
    "ind_decay": lambda: ksum.exponential_decay_profile(2.0, db(5), 3),
    "ind_mixed": lambda: InterferenceProfile.ind([(0.7, db(0)), (1.8, db(6)), (3.4, db(2))]),
    "iid": lambda: InterferenceProfile.iid(1.5, db(5), 4),
}


@pytest.fixture(params=sorted(PROFILES))
def series_profile(request) -> InterferenceProfile:
    return PROFILES[request.param]()


# --------------------------------------------------------------------------
# construction


def test_profile_validation():
    with pytest.raises(ValueError):
        InterferenceProfile.iid(-1.0, 1.0, 2)
    with pytest.raises(ValueError):
        InterferenceProfile.corr(1.5, 0.0, 2)
    with pytest.raises(ValueError):
        InterferenceProfile.iid(1.5, 1.0, 0)
    with pytest.raises(CombinatorialCostError):
        InterferenceProfile.iid(1.5, 1.0, ksum.MAX_INTERFERERS + 1)


def test_integer_shape_is_guarded():
    prof = InterferenceProfile.iid(2.0, 3.0, 2)
    assert ksum.FLAG_GUARD in prof.flags
    assert prof.k == pytest.approx(2.0 + 1e-6)
    assert not InterferenceProfile.iid(2.5, 3.0, 2).flags


def test_policy_validation():
    with pytest.raises(ValueError):
        TruncationPolicy(tol=0.0)
    with pytest.raises(ValueError):
        TruncationPolicy(max_terms=0)


def test_exponential_decay_profile():
    prof = ksum.exponential_decay_profile(3.0, 10.0, 3)
    assert prof.shapes == pytest.approx((2.7, 2.4, 2.1))
    assert prof.inrs == pytest.approx((10.0, 10.0 * math.exp(-0.1), 10.0 * math.exp(-0.2)))


# --------------------------------------------------------------------------
# reductions and oracles


@pytest.mark.parametrize("variant", ["ind", "iid", "corr"])
@pytest.mark.parametrize("x", [0.05, 1.0, 7.5, 40.0])
def test_single_interferer_is_squared_k(variant, x):
    k, inr = 1.7, db(5)
    prof = InterferenceProfile.ind([(k, inr)]) if variant == "ind" else getattr(InterferenceProfile, variant)(k, inr, 1)
    assert rel(float(ksum.interference_pdf(prof, x)), squared_k_pdf(x, k, inr)) < 1e-9


@pytest.mark.parametrize("x", [0.1, 1.0, 5.0, 20.0, 80.0])
def test_series_against_laplace_inversion(series_profile, x):
    prof = series_profile
    assert rel(ksum.interference_pdf(prof, x), laplace.sum_pdf(x, prof.shapes, prof.inrs)) < 1e-9
    assert rel(ksum.interference_cdf(prof, x), laplace.sum_cdf(x, prof.shapes, prof.inrs)) < 1e-9


def test_decay_profile_against_monte_carlo(derived, decay_profile):
    d = derived["decay_sum"]
    pdf = ksum.pdf_sum_ind(decay_profile, d["gamma"])
    cdf = ksum.cdf_sum_ind(decay_profile, d["gamma"])
    assert within_mc(pdf.value, d["pdf"], d["pdf_se"])
    assert within_mc(cdf.value, d["cdf"], d["cdf_se"])


def test_iid_against_monte_carlo(derived):
    d = derived["iid_sum"]
    prof = InterferenceProfile.iid(d["k"], db(d["inr_db"]), d["L"])
    assert within_mc(ksum.pdf_sum_iid(prof, d["gamma"]).value, d["pdf"], d["pdf_se"])
    assert within_mc(ksum.cdf_sum_iid(prof, d["gamma"]).value, d["cdf"], d["cdf_se"])


def test_corr_pdf_against_monte_carlo(derived):
    d = derived["corr_sum"]
    prof = InterferenceProfile.corr(d["k"], db(d["inr_db"]), d["L"])
    assert within_mc(float(ksum.pdf_sum_corr(prof, d["gamma"])), d["pdf"], d["pdf_se"])


def test_corr_cdf_against_quadrature(derived):
    d = derived["corr_cdf"]
    prof = InterferenceProfile.corr(d["k"], db(d["inr_db"]), d["L"])
    assert rel(float(ksum.cdf_sum_corr(prof, d["gamma"])), d["value"]) < 1e-9


def test_corr_mgf_against_quadrature(derived):
    d = derived["corr_mgf"]
    prof = InterferenceProfile.corr(d["k"], db(d["inr_db"]), d["L"])
    assert rel(float(ksum.mgf_sum_corr(prof, d["s"])), d["value"]) < 1e-9


def test_corr_mgf_limits():
    prof = InterferenceProfile.corr(1.5, 2.0, 3)
    s = np.array([1e-8, 0.01, 0.1, 1.0, 10.0])
    m = np.asarray(ksum.mgf_sum_corr(prof, s))
    assert m[0] == pytest.approx(1.0, abs=1e-6)
    assert np.all(np.diff(m) < 0)


@pytest.mark.parametrize("x", [0.3, 2.0, 9.0, 35.0])
def test_equal_ind_matches_iid(x):
    k, inr, L = 2.3, db(4), 4
    iid = InterferenceProfile.iid(k, inr, L)
    ind = InterferenceProfile.ind([(k, inr)] * L)
    assert rel(ksum.interference_pdf(ind, x), ksum.interference_pdf(iid, x)) < 1e-8
    assert rel(ksum.interference_cdf(ind, x), ksum.interference_cdf(iid, x)) < 1e-8


@pytest.mark.parametrize("k", [0.6, 1.5, 2.7])
def test_iid_streams_match_power_recursion(k):
    # c_0 = a_0^i, c_h = (1/(h a_0)) sum_t (t i - h + t) a_t c_{h-t}, a_t = (-1)^t/(t!(1-k+t));
    # the package streams carry an extra b^h
    L, H, dps = 4, 40, 80
    prof = InterferenceProfile.iid(k, 3.0, L)
    coef = ksum.series_coefficients(prof)
    _, streams = coef.mp_coefficients(dps, H)
    with mp.workdps(dps):
        kk = mp.mpf(prof.k)
        b = kk / mp.mpf(prof.inr)
        a = [(-1) ** t / (mp.factorial(t) * (1 - kk + t)) for t in range(H)]
        for i in range(1, L + 1):
            c = [a[0] ** i]
            for h in range(1, H):
                c.append(mp.fsum((t * i - h + t) * a[t] * c[h - t] for t in range(1, h + 1)) / (h * a[0]))
            for h in range(H):
                assert mp.almosteq(streams[i][h], b**h * c[h], rel_eps=mp.mpf(10) ** -40)


# --------------------------------------------------------------------------
# distribution properties


def test_normalization(series_profile):
    prof = series_profile
    total, _ = integrate_log(lambda x: ksum.interference_pdf(prof, x), 1e-10, 60 * prof.mean, panels=24)
    assert total + ksum.interference_cdf(prof, 1e-10) == pytest.approx(1.0, abs=1e-8)


def test_cdf_limits(series_profile):
    prof = series_profile
    assert ksum.interference_cdf(prof, 0.0) == 0.0
    assert ksum.interference_cdf(prof, 200 * prof.mean) == pytest.approx(1.0, abs=1e-9)


def test_cdf_monotone(series_profile):
    x = np.linspace(0.0, 40.0, 81)
    assert np.all(np.diff(ksum.interference_cdf(series_profile, x)) >= -1e-12)


@pytest.mark.parametrize("x", [0.1, 0.7, 3.0, 12.0, 50.0])
def test_cdf_derivative_is_pdf(series_profile, x):
    h = 1e-4 * x
    fd = (ksum.interference_cdf(series_profile, x + h) - ksum.interference_cdf(series_profile, x - h)) / (2 * h)
    assert abs(fd - ksum.interference_pdf(series_profile, x)) < 1e-5


def test_corr_cdf_derivative_is_pdf():
    prof = InterferenceProfile.corr(1.7, db(5), 3)
    for x in [0.1, 1.0, 6.0, 30.0]:
        h = 1e-4 * x
        fd = (ksum.cdf_sum_corr(prof, x + h) - ksum.cdf_sum_corr(prof, x - h)) / (2 * h)
        assert abs(fd - ksum.pdf_sum_corr(prof, x)) < 1e-5


def test_corr_cdf_limits():
    prof = InterferenceProfile.corr(1.7, db(5), 3)
    assert ksum.cdf_sum_corr(prof, 0.0) == 0.0
    assert ksum.cdf_sum_corr(prof, 1e5) == pytest.approx(1.0, abs=1e-12)


# --------------------------------------------------------------------------
# diagnostics


def test_scalar_and_batch_results(series_profile):
    res = ksum._series_stat(series_profile, "pdf", 2.0, ksum.DEFAULT_POLICY)
    assert isinstance(res, ksum.EvalResult)
    assert 0 < res.terms_used <= ksum.DEFAULT_POLICY.max_terms
    assert math.isfinite(res.est_error) and res.est_error >= 0
    batch = ksum._series_stat(series_profile, "pdf", np.array([1.0, 2.0]), ksum.DEFAULT_POLICY)
    assert abs(batch[1].value - res.value) <= res.est_error


def test_term_cap_sets_nonconvergence_flag():
    prof = ksum.exponential_decay_profile(3.0, db(5), 3)
    res = ksum.pdf_sum_ind(prof, 20.0, TruncationPolicy(max_terms=3))
    assert ksum.FLAG_NONCONVERGED in res.flags
    assert res.terms_used <= 3


def test_tighter_tolerance_uses_more_terms():
    prof = ksum.exponential_decay_profile(3.0, db(5), 3)
    loose = ksum.pdf_sum_ind(prof, 10.0, TruncationPolicy(tol=1e-4, rel_tol=0.0))
    tight = ksum.pdf_sum_ind(prof, 10.0, TruncationPolicy(tol=1e-14, rel_tol=0.0))
    assert loose.terms_used < tight.terms_used
    assert abs(loose.value - tight.value) < 1e-4


def test_required_terms_grows_with_gamma():
    prof = ksum.exponential_decay_profile(1.5, db(5), 3)
    counts = [ksum.required_terms(prof, g, policy=TruncationPolicy(max_terms=200)) for g in (1, 5, 20)]
    assert counts == sorted(counts)


@pytest.mark.parametrize("gamma", [0.5, 5.0, 20.0])
def test_truncation_bound_is_majorant(decay_profile, gamma):
    partial = ksum._mp_partials(decay_profile, gamma, 300, 40)
    previous = math.inf
    for H in (0, 1, 3, 5, 10, 20, 40):
        bound = ksum.truncation_bound(decay_profile, gamma, H)
        assert bound >= 0
        assert bound <= previous
        assert float(abs(partial[-1] - partial[H])) <= bound
        previous = bound


def test_truncation_bound_rejects_corr():
    with pytest.raises(ValueError):
        ksum.truncation_bound(InterferenceProfile.corr(1.5, 2.0, 3), 1.0, 5)


# --------------------------------------------------------------------------
# sampler


def test_sampler_mean():
    prof = ksum.exponential_decay_profile(2.0, db(5), 3)
    draws = ksum.sample_gamma_I(prof, np.random.default_rng(1), 2_000_000)
    assert draws.mean() == pytest.approx(prof.mean, rel=0.01)


def test_sampler_large_k_is_exponential():
    prof = InterferenceProfile.iid(200.5, 1.0, 1)
    draws = np.sort(ksum.sample_gamma_I(prof, np.random.default_rng(2), 200_000))
    ecdf = np.arange(1, draws.size + 1) / draws.size
    assert np.max(np.abs(ecdf - (1 - np.exp(-draws)))) < 0.01


def test_sampler_corr_against_cdf():
    prof = InterferenceProfile.corr(2.3, db(5), 4)
    draws = np.sort(ksum.sample_gamma_I(prof, np.random.default_rng(3), 1_000_000))
    grid = np.quantile(draws, np.linspace(0.005, 0.995, 100))
    analytic = np.asarray(ksum.cdf_sum_corr(prof, grid))
    empirical = np.searchsorted(draws, grid, side="right") / draws.size
    assert np.max(np.abs(analytic - empirical)) < 3e-3


def test_sampler_is_reproducible():
    prof = InterferenceProfile.iid(1.5, 2.0, 3)
    a = ksum.sample_gamma_I(prof, np.random.default_rng(9), 100)
    b = ksum.sample_gamma_I(prof, np.random.default_rng(9), 100)
    assert np.array_equal(a, b)


@settings(max_examples=25, deadline=None)
@given(
    k=st.floats(0.4, 4.0).filter(lambda k: abs(k - round(k)) > 1e-3),
    inr_db=st.floats(-3.0, 15.0),
    L=st.integers(1, 4),
    x=st.floats(0.05, 30.0),
)
def test_iid_pdf_positive_and_cdf_bounded(k, inr_db, L, x):
    prof = InterferenceProfile.iid(k, db(inr_db), L)
    assert ksum.interference_pdf(prof, x) > 0
    assert 0.0 <= ksum.interference_cdf(prof, x) <= 1.0 + 1e-12
