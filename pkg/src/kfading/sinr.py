"""Single-antenna output SINR and SIR statistics.

The desired SNR is exponential with mean ``desired_snr``. Conditioning on the
interference sum ``g`` gives, with ``p = gamma / desired_snr`` and ``M`` the
Laplace transform of ``g``:

* SINR: ``F(gamma) = 1 - exp(-p) M(p)``, ``f(gamma) = exp(-p) (M(p) - M'(p)) / desired_snr``
* SIR:  ``F(gamma) = 1 - M(p)``,          ``f(gamma) = -M'(p) / desired_snr``

For independent interferers ``M`` is the series of :mod:`kfading.ksum` in
powers of ``1/p``. Each of its terms ``exp(S/p) p^-v`` is a Whittaker-M
function in disguise, ``exp(-z/2) z^(-v/2) M_{-v/2,(v-1)/2}(z)`` with
``z = S/p``, and the derivative terms reduce to ``M_{-v/2-1,(v-1)/2}``. The
series cancels like ``exp(z)``; above ``SERIES_MAX_Z`` the same quantity is
taken from the closed per-interferer product ``prod z_i^k U(k, k, z_i)``.

Fully-correlated interference has closed forms in the Whittaker-W function,
``1 - F = exp(-p + z/2) z^((L+k-1)/2) W_{(1-L-k)/2,(L-k)/2}(z)`` for SINR
with ``z = k desired_snr / (inr gamma)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import ksum, specfun
from .ksum import (
    DEFAULT_POLICY,
    FLAG_RESUMMED,
    FLAG_UNDERFLOW,
    BatchResult,
    EvalResult,
    InterferenceProfile,
    TruncationPolicy,
)

__all__ = [
    "SERIES_MAX_Z",
    "UNDERFLOW_GAMMA",
    "LinkModel",
    "sinr_pdf",
    "sinr_cdf",
    "sir_pdf",
    "sir_cdf",
    "sir_mgf_corr",
    "single_interferer_cdf",
    "output_pdf",
    "output_cdf",
]

# largest S/p handed to the alternating series; beyond it the closed product is used
SERIES_MAX_Z = 12.0
# below this threshold the CDF is reported as exactly 0
UNDERFLOW_GAMMA = 1e-8
# relative accuracy of the U-function kernel, reported as est_error for closed forms
KERNEL_REL_ERROR = 1e-11


@dataclass(frozen=True)
class LinkModel:
    """Desired-signal SNR, interference scenario and whether noise is present.

    Attributes
    ----------
    desired_snr : float
        Average SNR of the exponential desired signal (linear).
    interference : InterferenceProfile
    noise : {"sinr", "sir"}
        ``"sir"`` drops the receiver noise.
    """

    desired_snr: float
    interference: InterferenceProfile
    noise: str = "sinr"

    def __post_init__(self) -> None:
        if not self.desired_snr > 0:
            raise ValueError("desired_snr must be positive")
        if self.noise not in ("sinr", "sir"):
            raise ValueError("noise must be 'sinr' or 'sir'")

    def with_noise(self, noise: str) -> "LinkModel":
        return LinkModel(self.desired_snr, self.interference, noise)


def _as_batch(values, terms, errors, flags) -> BatchResult:
    return BatchResult(np.asarray(values, float), np.asarray(terms, int), np.asarray(errors, float), tuple(flags))


def _finish(batch: BatchResult, scalar: bool):
    return batch[0] if scalar else batch


# --------------------------------------------------------------------------
# Independent interferers


_SERIES_KIND = {
    ("sinr", "cdf"): "mgf",
    ("sir", "cdf"): "mgf",
    ("sinr", "pdf"): "shifted",
    ("sir", "pdf"): "slope",
}


def _independent_stat(link: LinkModel, noise: str, stat: str, gamma, policy: TruncationPolicy):
    prof = link.interference
    scalar = np.ndim(gamma) == 0
    g = np.atleast_1d(np.asarray(gamma, dtype=float))
    if np.any(g < 0):
        raise ValueError("gamma must be non-negative")
    n = g.size
    gd = link.desired_snr
    values = np.zeros(n)
    terms = np.zeros(n, dtype=int)
    errors = np.zeros(n)
    base = frozenset(prof.flags)
    flags = [base] * n
    p = g / gd
    S = sum(prof.rates)
    with np.errstate(divide="ignore"):
        z = np.where(p > 0, S / np.where(p > 0, p, 1.0), np.inf)
    tiny = g < UNDERFLOW_GAMMA
    use_series = (~tiny) & (z <= SERIES_MAX_Z)
    if np.any(use_series):
        coef = ksum.series_coefficients(prof)
        idx = np.flatnonzero(use_series)
        batch = ksum.evaluate_series(coef, _SERIES_KIND[noise, stat], p[idx], policy)
        v, e = batch.values, batch.est_error
        damp = np.exp(-p[idx]) if noise == "sinr" else np.ones(idx.size)
        if stat == "cdf":
            values[idx] = 1.0 - damp * v
        else:
            values[idx] = damp * v / gd
            e = e / gd
        errors[idx] = damp * e
        terms[idx] = batch.terms_used
        for j, i in enumerate(idx):
            flags[i] = batch.flags[j]
    for i in np.flatnonzero(~use_series):
        if tiny[i] and stat == "cdf":
            values[i] = 0.0
            flags[i] = base | {FLAG_UNDERFLOW}
            continue
        if p[i] == 0:
            # density limits at the origin: E[1 + g]/gd and E[g]/gd
            values[i] = (prof.mean + (1.0 if noise == "sinr" else 0.0)) / gd
            flags[i] = base
            continue
        m, dm = ksum.independent_mgf_pair(prof, float(p[i]))
        damp = math.exp(-p[i]) if noise == "sinr" else 1.0
        if stat == "cdf":
            values[i] = 1.0 - damp * m
            errors[i] = KERNEL_REL_ERROR * damp * m
        else:
            values[i] = damp * ((m if noise == "sinr" else 0.0) + dm) / gd
            errors[i] = KERNEL_REL_ERROR * abs(values[i])
        flags[i] = base | {FLAG_RESUMMED}
        if tiny[i]:
            flags[i] = flags[i] | {FLAG_UNDERFLOW}
    return _finish(_as_batch(values, terms, errors, flags), scalar)


# --------------------------------------------------------------------------
# Fully-correlated interference


def _corr_parts(prof: InterferenceProfile, p: float) -> tuple[float, float, float]:
    """``(z, z^L U(L, c, z), (L k / p) z^L U(L+1, c, z))`` with ``c = 1 + L - k``.

    The first product is ``exp(z/2) z^((L+k-1)/2) W_{(1-L-k)/2,(L-k)/2}(z)``
    and the second is minus the derivative of the first with respect to ``p``.
    """
    L, k, b = prof.L, prof.k, prof.rates[0]
    z = b / p
    kappa, mu = 0.5 * (1 - L - k), 0.5 * (L - k)
    lead_power = 0.5 * (L + k - 1) * math.log(z)
    survival = math.exp(lead_power) * specfun.whittaker_w_scaled(kappa, mu, z)
    # contiguous Whittaker function: first index lowered by one, mu fixed
    slope = L * k / p * math.exp(lead_power) * specfun.whittaker_w_scaled(kappa - 1.0, mu, z)
    return z, survival, slope


def _corr_stat(link: LinkModel, noise: str, stat: str, gamma):
    prof = link.interference
    scalar = np.ndim(gamma) == 0
    g = np.atleast_1d(np.asarray(gamma, dtype=float))
    if np.any(g < 0):
        raise ValueError("gamma must be non-negative")
    gd = link.desired_snr
    n = g.size
    values = np.zeros(n)
    errors = np.zeros(n)
    base = frozenset(prof.flags)
    flags = [base] * n
    for i, gi in enumerate(g):
        if stat == "cdf" and gi < UNDERFLOW_GAMMA:
            flags[i] = base | {FLAG_UNDERFLOW}
            continue
        p = gi / gd
        if p == 0:
            values[i] = (prof.mean + (1.0 if noise == "sinr" else 0.0)) / gd
            continue
        _, surv, slope = _corr_parts(prof, p)
        damp = math.exp(-p) if noise == "sinr" else 1.0
        if stat == "cdf":
            values[i] = 1.0 - damp * surv
            errors[i] = KERNEL_REL_ERROR * damp * surv
        else:
            values[i] = damp * ((surv if noise == "sinr" else 0.0) + slope) / gd
            errors[i] = KERNEL_REL_ERROR * abs(values[i])
        if gi < UNDERFLOW_GAMMA:
            flags[i] = base | {FLAG_UNDERFLOW}
    return _finish(_as_batch(values, np.zeros(n, dtype=int), errors, flags), scalar)


# --------------------------------------------------------------------------
# Public API


def _dispatch(link: LinkModel, noise: str, stat: str, gamma, policy: TruncationPolicy):
    if link.interference.variant == "corr":
        return _corr_stat(link, noise, stat, gamma)
    return _independent_stat(link, noise, stat, gamma, policy)


def sinr_pdf(link: LinkModel, gamma, policy: TruncationPolicy = DEFAULT_POLICY):
    """Density of the output SINR ``gamma_D / (1 + g)``.

    Scalars give an :class:`~kfading.ksum.EvalResult`, arrays a
    :class:`~kfading.ksum.BatchResult`.
    """
    return _dispatch(link, "sinr", "pdf", gamma, policy)


def sinr_cdf(link: LinkModel, gamma, policy: TruncationPolicy = DEFAULT_POLICY):
    """Distribution function of the output SINR."""
    return _dispatch(link, "sinr", "cdf", gamma, policy)


def sir_pdf(link: LinkModel, gamma, policy: TruncationPolicy = DEFAULT_POLICY):
    """Density of the output SIR ``gamma_D / g`` (receiver noise ignored)."""
    return _dispatch(link, "sir", "pdf", gamma, policy)


def sir_cdf(link: LinkModel, gamma, policy: TruncationPolicy = DEFAULT_POLICY):
    """Distribution function of the output SIR."""
    return _dispatch(link, "sir", "cdf", gamma, policy)


def output_pdf(link: LinkModel, gamma, policy: TruncationPolicy = DEFAULT_POLICY):
    """SINR or SIR density according to ``link.noise``."""
    return _dispatch(link, link.noise, "pdf", gamma, policy)


def output_cdf(link: LinkModel, gamma, policy: TruncationPolicy = DEFAULT_POLICY):
    """SINR or SIR distribution function according to ``link.noise``."""
    return _dispatch(link, link.noise, "cdf", gamma, policy)


def single_interferer_cdf(k: float, inr: float, desired_snr: float, gamma: float) -> float:
    """Output SINR CDF with one squared-K interferer.

    ``1 - exp(-p + z/2) z^(k/2) W_{-k/2,(1-k)/2}(z)`` with ``p = gamma/desired_snr``
    and ``z = k desired_snr / (inr gamma)``.
    """
    k, _ = specfun.guard_noninteger(float(k))
    if gamma < UNDERFLOW_GAMMA:
        return 0.0
    p = gamma / desired_snr
    z = k / inr / p
    surv = math.exp(0.5 * k * math.log(z)) * specfun.whittaker_w_scaled(-0.5 * k, 0.5 * (1 - k), z)
    return 1.0 - math.exp(-p) * surv


def sir_mgf_corr(link: LinkModel, s: float) -> float:
    """``E[exp(-s SIR)]`` for fully-correlated interference by Laplace quadrature.

    The SIR density is integrated against ``exp(-s gamma)`` in the variable
    ``t = log(gamma)`` over panels that straddle the scale ``desired_snr/inr``.
    """
    prof = link.interference
    if prof.variant != "corr":
        raise ValueError("sir_mgf_corr needs a fully-correlated interference profile")
    if s < 0:
        raise ValueError("s must be non-negative")
    if s == 0:
        return 1.0
    sir_link = link.with_noise("sir")

    def integrand(t: float) -> float:
        gi = math.exp(t)
        return math.exp(-s * gi + t) * float(_corr_stat(sir_link, "sir", "pdf", gi).value)

    centre = math.log(link.desired_snr / prof.inr)
    upper = math.log(745.0 / s)
    lo = centre - 60.0
    breaks = [lo] + [x for x in np.arange(centre - 30.0, upper, 3.0) if x > lo] + [upper]
    total = 0.0
    for a, b in zip(breaks[:-1], breaks[1:]):
        val, _ = integrate.quad(integrand, a, b, epsabs=1e-15, epsrel=1e-12, limit=200)
        total += val
    return total
