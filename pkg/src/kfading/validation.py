"""Self-checks run by ``kfading validate``.

Each check takes a seed and returns ``(passed, detail)``. The checks are
small enough to run in seconds; the test suite covers the same ground more
thoroughly.
"""
from __future__ import annotations

import math
from typing import Callable

import numpy as np

from . import ksum, mc, perf, simo, sinr
from .ksum import InterferenceProfile
from .quadrature import integrate_log, log_panel_nodes

Check = Callable[[int], "tuple[bool, str]"]


def _profiles() -> list[InterferenceProfile]:
    inr = 10 ** 0.5
    return [
        ksum.exponential_decay_profile(2.0, inr, 3),
        InterferenceProfile.iid(1.5, inr, 4),
        InterferenceProfile.corr(2.3, inr, 3),
    ]


def _pdf(prof: InterferenceProfile):
    return lambda x: np.asarray(ksum.interference_pdf(prof, x), dtype=float)


def check_normalization(seed: int) -> tuple[bool, str]:
    worst = 0.0
    for prof in _profiles():
        upper = 60.0 * max(prof.mean, 1.0)
        total, _ = integrate_log(_pdf(prof), 1e-10, upper, panels=24, order=20)
        worst = max(worst, abs(total + float(ksum.interference_cdf(prof, 1e-10)) - 1.0))
    return worst < 1e-6, f"max |integral - 1| = {worst:.2e}"


def check_cdf_derivative(seed: int) -> tuple[bool, str]:
    worst = 0.0
    for prof in _profiles()[:2]:
        x = np.array([0.5, 3.0, 12.0])
        h = 1e-4 * x
        fd = (ksum.interference_cdf(prof, x + h) - ksum.interference_cdf(prof, x - h)) / (2 * h)
        pdf = ksum.interference_pdf(prof, x)
        worst = max(worst, float(np.max(np.abs(fd / pdf - 1.0))))
    return worst < 1e-6, f"max relative gap = {worst:.2e}"


def check_reductions(seed: int) -> tuple[bool, str]:
    inr = 10 ** 0.5
    iid = InterferenceProfile.iid(1.7, inr, 3)
    same = InterferenceProfile.ind([(1.7, inr)] * 3)
    x = np.array([0.3, 2.0, 9.0])
    gap_iid = float(np.max(np.abs(ksum.interference_pdf(iid, x) / ksum.interference_pdf(same, x) - 1)))
    corr = InterferenceProfile.corr(2.0, inr, 3)
    link = sinr.LinkModel(10.0, corr)
    siso = sinr.sinr_cdf(link, x).values
    single = simo.sd_snr_cdf(simo.DesiredProfile.iid(10.0, 1), corr, x)
    gap_simo = float(np.max(np.abs(np.asarray(single) / siso - 1)))
    ok = gap_iid < 1e-8 and gap_simo < 1e-10
    return ok, f"iid vs equal ind {gap_iid:.1e}; one-branch selection vs single link {gap_simo:.1e}"


def check_oracle(seed: int) -> tuple[bool, str]:
    # output CDF against direct integration over the interference density
    worst = 0.0
    snr = 10.0
    for prof in _profiles():
        link = sinr.LinkModel(snr, prof)
        nodes, weights = log_panel_nodes(1e-12, 80.0 * max(prof.mean, 1.0), 32, 20)
        density = weights * _pdf(prof)(nodes)
        for gamma in (0.5, 2.0, 8.0):
            direct = 1.0 - float(density @ np.exp(-gamma * (1 + nodes) / snr))
            worst = max(worst, abs(float(sinr.sinr_cdf(link, gamma).value) / direct - 1.0))
    return worst < 1e-7, f"max relative gap = {worst:.2e}"


def check_monte_carlo(seed: int) -> tuple[bool, str]:
    prof = ksum.exponential_decay_profile(2.0, 10 ** 0.5, 3)
    config = perf.ReceiverConfig.build(10.0, 1, prof)
    n = 200_000
    draws = np.sort(mc.simulate_sinr_samples(mc.MonteCarloConfig(config, samples=n, seed=seed)))
    grid = np.quantile(draws, np.linspace(0.01, 0.99, 60))
    analytic = sinr.sinr_cdf(config.links[0], grid).values
    empirical = np.searchsorted(draws, grid, side="right") / n
    ks = float(np.max(np.abs(analytic - empirical)))
    limit = 1.63 / math.sqrt(n)  # 1% critical value
    return ks < limit, f"KS distance {ks:.2e} (limit {limit:.2e}, seed {seed})"


def check_asymptotics(seed: int) -> tuple[bool, str]:
    prof = InterferenceProfile.corr(2.0, 10 ** 0.5, 4)
    ratios = []
    for N in (1, 2, 3):
        config = perf.ReceiverConfig.build(1e4, N, prof)
        ratios.append(float(perf.outage_probability(config, 1.0)) / perf.op_high_snr(config, 1.0).approximation)
    worst = max(abs(r - 1) for r in ratios)
    return worst < 0.05, "exact/asymptotic OP at 40 dB: " + ", ".join(f"{r:.4f}" for r in ratios)


def check_abep_routes(seed: int) -> tuple[bool, str]:
    prof = InterferenceProfile.corr(2.0, 10 ** 0.5, 4)
    worst = 0.0
    for N in (1, 2):
        config = perf.ReceiverConfig.build(10 ** 1.5, N, prof)
        a, b = perf.abep_mgf(config), perf.abep_cdf(config)
        worst = max(worst, abs(a / b - 1))
    return worst < 1e-6, f"MGF vs CDF route relative gap {worst:.2e}"


def check_truncation_bound(seed: int) -> tuple[bool, str]:
    prof = ksum.exponential_decay_profile(2.0, 10 ** 0.5, 3)
    failures = 0
    total = 0
    for gamma in (0.5, 5.0, 20.0):
        # extended-precision partial sums; a float reference would swamp the smaller tails
        partial = ksum._mp_partials(prof, gamma, 300, 40, "pdf")
        for H in (1, 5, 20):
            total += 1
            if float(abs(partial[-1] - partial[H])) > ksum.truncation_bound(prof, gamma, H):
                failures += 1
    return failures == 0, f"{total - failures}/{total} truncation errors under the bound"


CHECKS: dict[str, Check] = {
    "normalization": check_normalization,
    "cdf_derivative": check_cdf_derivative,
    "reductions": check_reductions,
    "oracle": check_oracle,
    "monte_carlo": check_monte_carlo,
    "asymptotics": check_asymptotics,
    "abep_routes": check_abep_routes,
    "truncation_bound": check_truncation_bound,
}
