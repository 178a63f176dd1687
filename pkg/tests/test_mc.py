from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from scipy.special import erfc

from kfading import ksum, mc, perf
from kfading.ksum import InterferenceProfile
from kfading.perf import ModulationSpec, ReceiverConfig

from .conftest import db

STRONG = ReceiverConfig.build(db(15), 2, InterferenceProfile.corr(2.0, db(10), 3))


@pytest.fixture
def small_config() -> mc.MonteCarloConfig:
    return mc.MonteCarloConfig(STRONG, samples=50_000, seed=7, block_size=8192)


def test_config_validation():
    with pytest.raises(ValueError):
        mc.MonteCarloConfig(STRONG, samples=0)
    with pytest.raises(ValueError):
        mc.MonteCarloConfig(STRONG, bins=0)


def test_same_seed_same_draws(small_config):
    a = mc.simulate_sinr_samples(small_config)
    b = mc.simulate_sinr_samples(small_config)
    assert a.size == small_config.samples
    assert np.array_equal(a, b)
    other = mc.simulate_sinr_samples(mc.MonteCarloConfig(STRONG, samples=50_000, seed=8, block_size=8192))
    assert not np.array_equal(a, other)


def test_estimates_are_bit_identical(small_config):
    assert mc.empirical_op(small_config, 2.0) == mc.empirical_op(small_config, 2.0)
    assert mc.empirical_abep(small_config) == mc.empirical_abep(small_config)


def test_block_streams_are_independent_of_count():
    # the j-th block generator does not depend on how many blocks are requested
    first = [g.random(4) for g in mc.block_generators(99, 3)]
    more = [g.random(4) for g in mc.block_generators(99, 5)]
    for a, b in zip(first, more):
        assert np.array_equal(a, b)


def test_desired_snr_mean():
    # negligible interference leaves the exponential desired SNR
    config = ReceiverConfig.build(db(10), 1, InterferenceProfile.corr(1.5, 1e-12, 1))
    draws = mc.simulate_sinr_samples(mc.MonteCarloConfig(config, samples=2_000_000, seed=3))
    assert draws.mean() == pytest.approx(db(10), rel=0.01)


@pytest.mark.parametrize(
    "prof",
    [ksum.exponential_decay_profile(2.0, db(5), 3), InterferenceProfile.iid(1.5, db(5), 4),
     InterferenceProfile.corr(2.3, db(5), 3)],
    ids=["ind", "iid", "corr"],
)
def test_interference_sampler_mean(prof):
    draws = ksum.sample_gamma_I(prof, np.random.default_rng(4), 1_000_000)
    se = draws.std() / math.sqrt(draws.size)
    assert abs(draws.mean() - prof.mean) < 5 * se


def test_outage_limits(small_config):
    assert mc.empirical_op(small_config, 0.0).value == 0.0
    assert mc.empirical_op(small_config, 1e12).value == 1.0


def test_half_width_scaling():
    small = mc.empirical_op(mc.MonteCarloConfig(STRONG, samples=10_000, seed=1), 3.0)
    large = mc.empirical_op(mc.MonteCarloConfig(STRONG, samples=1_000_000, seed=1), 3.0)
    assert small.half_width / large.half_width == pytest.approx(10.0, rel=0.1)


def test_insufficient_samples_warning(small_config):
    with pytest.warns(mc.InsufficientSamplesWarning):
        mc.empirical_op(small_config, 3.0, tolerance=1e-6)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        mc.empirical_op(small_config, 3.0, tolerance=0.5)


def test_empirical_cdf_and_pdf(small_config):
    draws = np.sort(mc.simulate_sinr_samples(small_config))
    grid = np.array([0.5, 3.0, 30.0])
    expected = np.searchsorted(draws, grid, side="right") / draws.size
    assert np.array_equal(mc.empirical_cdf(small_config, grid), expected)
    centres, density = mc.empirical_pdf(small_config)
    assert centres.size == small_config.bins
    assert float(density.sum() * (centres[1] - centres[0])) == pytest.approx(0.99, abs=2e-3)


def test_bpsk_conditional_error():
    g = np.array([0.0, 0.3, 2.0, 9.0])
    assert np.allclose(mc.conditional_bep(g, ModulationSpec.mpsk(2)), 0.5 * erfc(np.sqrt(g)), rtol=1e-12, atol=0)
    assert np.allclose(mc.conditional_bep(g, ModulationSpec.dbpsk()), 0.5 * np.exp(-g))


def test_abep_bounded_by_alpha(small_config):
    est = mc.empirical_abep(small_config)
    assert 0 < est.value <= 0.5


def test_abep_matches_analytic():
    est = mc.empirical_abep(mc.MonteCarloConfig(STRONG, samples=1_000_000, seed=17))
    assert abs(est.value - perf.abep_mgf(STRONG)) < 4 * est.std_error


def test_mpsk_abep_matches_analytic():
    config = ReceiverConfig.build(db(15), 1, InterferenceProfile.corr(2.0, db(5), 2))
    mod = ModulationSpec.mpsk(4)
    est = mc.empirical_abep(mc.MonteCarloConfig(config, samples=1_000_000, seed=19), mod)
    assert abs(est.value - perf.abep_mgf(config, mod)) < 4 * est.std_error
