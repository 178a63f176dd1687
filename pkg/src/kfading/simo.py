"""Selection-diversity receivers with fully-correlated interference.

Two selection rules are covered:

* SNR-based: the branch with the largest desired SNR is picked and then
  divided by ``1 + g`` (or by ``g`` without noise). The interference sum is
  common to the decision, so conditioning on ``g`` gives
  ``F(gamma) = sum_A (-1)^|A| exp(-q_A) M(q_A)`` with ``q_A = gamma * sum_{n in A} 1/snr_n``
  and ``M`` the Laplace transform of ``g``.
* SINR-based: each branch sees its own independent interference, so the
  output CDF is the product of the per-branch SISO CDFs.

The alternating subset sums lose digits when the outage is small (high SNR
or many branches). In that regime the CDF and PDF are evaluated from the
equivalent conditional form ``E_g[prod_n (1 - exp(-gamma (1+g)/snr_n))]`` by
quadrature against the interference density, which has no cancellation.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate

from . import ksum, sinr
from .ksum import InterferenceProfile
from .quadrature import log_panel_nodes

__all__ = [
    "MAX_BRANCHES",
    "DesiredProfile",
    "UnreachableError",
    "sd_snr_cdf",
    "sd_snr_pdf",
    "sd_sir_cdf",
    "sd_sir_pdf",
    "sd_sir_mgf",
    "sd_snr_mgf",
    "sd_snr_mgf_family",
    "sd_sinr_cdf",
    "sd_sinr_pdf",
    "corr_transform",
    "branch_subsets",
]

MAX_BRANCHES = 10
# largest tolerated ratio between the absolute subset sum and the result
_CANCELLATION_LIMIT = 1e3


class UnreachableError(RuntimeError):
    """Raised when a search hits its branch cap without meeting the target."""


@dataclass(frozen=True)
class DesiredProfile:
    """Average desired SNR per receive branch (linear)."""

    branch_snrs: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.branch_snrs:
            raise ValueError("need at least one branch")
        if any(not g > 0 for g in self.branch_snrs):
            raise ValueError("branch SNRs must be positive")
        if len(self.branch_snrs) > MAX_BRANCHES:
            raise ksum.CombinatorialCostError(f"N = {len(self.branch_snrs)} exceeds {MAX_BRANCHES}")

    @classmethod
    def iid(cls, snr: float, N: int) -> "DesiredProfile":
        if int(N) != N or N < 1:
            raise ValueError("N must be a positive integer")
        return cls((float(snr),) * int(N))

    @property
    def N(self) -> int:
        return len(self.branch_snrs)

    @property
    def is_iid(self) -> bool:
        return len(set(self.branch_snrs)) == 1


def branch_subsets(desired: DesiredProfile) -> list[tuple[int, int, float]]:
    """``(sign, multiplicity, rate)`` for every branch subset, empty one included.

    ``rate`` is ``sum_{n in A} 1/snr_n``. Identical branches collapse to the
    binomial form with multiplicity ``C(N, i)``.
    """
    if desired.is_iid:
        inv = 1.0 / desired.branch_snrs[0]
        return [((-1) ** i, math.comb(desired.N, i), i * inv) for i in range(desired.N + 1)]
    out = []
    inv = [1.0 / g for g in desired.branch_snrs]
    for size in range(desired.N + 1):
        for combo in itertools.combinations(range(desired.N), size):
            out.append(((-1) ** size, 1, math.fsum(inv[n] for n in combo)))
    return out


def corr_transform(prof: InterferenceProfile, s: float) -> tuple[float, float]:
    """``(M(s), -M'(s))`` of the fully-correlated interference sum (Whittaker-W form)."""
    if s == 0:
        return 1.0, prof.mean
    _, surv, slope = sinr._corr_parts(prof, s)
    return surv, slope


def _check_corr(prof: InterferenceProfile) -> None:
    if prof.variant != "corr":
        raise ValueError("selection diversity is implemented for fully-correlated interference")


def _closed_terms(desired, prof, gamma: float, noise: str, stat: str) -> tuple[float, float]:
    total, scale = 0.0, 0.0
    for sign, mult, rate in branch_subsets(desired):
        if rate == 0:
            if stat == "cdf":
                total += sign * mult
                scale += mult
            continue
        q = rate * gamma
        m, dm = corr_transform(prof, q)
        damp = math.exp(-q) if noise == "sinr" else 1.0
        if stat == "cdf":
            t = sign * mult * damp * m
        else:
            t = -sign * mult * rate * damp * ((m if noise == "sinr" else 0.0) + dm)
        total += t
        scale += abs(t)
    return total, scale


def _interference_nodes(prof: InterferenceProfile) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature nodes and weights (density included) over the interference sum."""
    key = (prof.shapes, prof.inrs)
    hit = _NODE_CACHE.get(key)
    if hit is not None:
        return hit
    b = prof.rates[0]
    # the density decays like exp(-2 sqrt(b x)); 2 sqrt(b x) = 90 leaves < 1e-30
    hi = (45.0 + 0.5 * (prof.L + prof.k)) ** 2 / b
    lo = 1e-14 / b
    x, w = log_panel_nodes(lo, hi, 48, 24)
    dens = np.array([ksum.pdf_sum_corr(prof, float(v)) for v in x])
    out = (x, w * dens)
    if len(_NODE_CACHE) > 64:
        _NODE_CACHE.clear()
    _NODE_CACHE[key] = out
    return out


_NODE_CACHE: dict = {}


def _conditional(desired, prof, gamma: float, noise: str, stat: str) -> float:
    x, w = _interference_nodes(prof)
    load = (1.0 + x) if noise == "sinr" else x
    rates = np.array([1.0 / g for g in desired.branch_snrs])
    expo = gamma * load[:, None] * rates[None, :]
    miss = -np.expm1(-expo)
    if stat == "cdf":
        return float(w @ np.prod(miss, axis=1))
    # derivative of the product over branches
    dens = load[:, None] * rates[None, :] * np.exp(-expo)
    total = np.zeros_like(x)
    for n in range(desired.N):
        others = np.prod(np.delete(miss, n, axis=1), axis=1) if desired.N > 1 else 1.0
        total += dens[:, n] * others
    return float(w @ total)


def _sd_common(desired: DesiredProfile, prof: InterferenceProfile, gamma, noise: str, stat: str, method: str):
    _check_corr(prof)
    if method not in ("auto", "closed", "conditional"):
        raise ValueError("method must be 'auto', 'closed' or 'conditional'")

    def one(g: float) -> float:
        if g < 0:
            raise ValueError("gamma must be non-negative")
        if g == 0:
            if stat == "cdf":
                return 0.0
            if desired.N > 1:
                return 0.0
            return (prof.mean + (1.0 if noise == "sinr" else 0.0)) / desired.branch_snrs[0]
        if method == "conditional":
            return _conditional(desired, prof, g, noise, stat)
        total, scale = _closed_terms(desired, prof, g, noise, stat)
        if method == "auto" and (desired.N > 1 and (total <= 0 or scale > _CANCELLATION_LIMIT * abs(total))):
            return _conditional(desired, prof, g, noise, stat)
        return total

    if np.ndim(gamma) == 0:
        return one(float(gamma))
    return np.array([one(float(g)) for g in np.asarray(gamma, dtype=float).ravel()]).reshape(np.shape(gamma))


def sd_snr_cdf(desired: DesiredProfile, interference: InterferenceProfile, gamma, noise: str = "sinr", method: str = "auto"):
    """Output CDF of SNR-based selection diversity.

    ``sum_A (-1)^|A| exp(-q_A + z_A/2) z_A^((L+k-1)/2) W_{(1-L-k)/2,(L-k)/2}(z_A)``
    with ``q_A = gamma sum_{n in A} 1/snr_n`` and ``z_A = k / (inr q_A)``;
    the factor ``exp(-q_A)`` is dropped when ``noise="sir"``.

    ``method="closed"`` forces the subset sum, ``"conditional"`` the
    cancellation-free quadrature, ``"auto"`` switches when the subset sum
    would lose more than three digits.
    """
    return _sd_common(desired, interference, gamma, noise, "cdf", method)


def sd_snr_pdf(desired: DesiredProfile, interference: InterferenceProfile, gamma, noise: str = "sinr", method: str = "auto"):
    """Output density of SNR-based selection diversity (derivative of :func:`sd_snr_cdf`).

    Each non-empty subset contributes
    ``(-1)^(|A|+1) r_A exp(-q_A) [M(q_A) - M'(q_A)]`` with ``r_A = sum 1/snr_n``.
    """
    return _sd_common(desired, interference, gamma, noise, "pdf", method)


def sd_sir_cdf(desired: DesiredProfile, interference: InterferenceProfile, gamma, method: str = "auto"):
    """Output SIR CDF of selection diversity (noise ignored)."""
    return _sd_common(desired, interference, gamma, "sir", "cdf", method)


def sd_sir_pdf(desired: DesiredProfile, interference: InterferenceProfile, gamma, method: str = "auto"):
    """Output SIR density of selection diversity.

    Each non-empty subset contributes ``(-1)^(|A|+1) (L k / gamma) z_A^L U(L+1, 1+L-k, z_A)``.
    """
    return _sd_common(desired, interference, gamma, "sir", "pdf", method)


def _laplace_of_density(pdf, s: float, scale: float) -> float:
    """``int_0^inf exp(-s x) pdf(x) dx`` by adaptive quadrature in ``log x``."""

    def integrand(t: float) -> float:
        x = math.exp(t)
        return math.exp(-s * x + t) * pdf(x)

    centre = math.log(scale)
    upper = math.log(745.0 / s)
    lo = centre - 60.0
    breaks = [lo] + [v for v in np.arange(centre - 30.0, upper, 3.0) if v > lo] + [upper]
    total = 0.0
    for a, b in zip(breaks[:-1], breaks[1:]):
        val, _ = integrate.quad(integrand, a, b, epsabs=1e-16, epsrel=1e-12, limit=200)
        total += val
    return total


def sd_sir_mgf(desired: DesiredProfile, interference: InterferenceProfile, s: float) -> float:
    """``E[exp(-s SIR)]`` of selection diversity by Laplace quadrature of the density."""
    _check_corr(interference)
    if s < 0:
        raise ValueError("s must be non-negative")
    if s == 0:
        return 1.0
    scale = min(desired.branch_snrs) / interference.mean
    return _laplace_of_density(lambda x: sd_sir_pdf(desired, interference, x), s, scale)


def _transform_integral(prof: InterferenceProfile, rate: float) -> float:
    """``int_0^inf exp(-rate t) M(t) dt`` for the interference transform ``M``.

    Computed as ``(1/rate) int_0^inf exp(-u) M(u / rate) du`` on a log grid.
    """

    if prof.variant == "corr":
        transform = lambda v: corr_transform(prof, v)[0]
    else:
        transform = lambda v: ksum.independent_mgf_pair(prof, v)[0]

    def integrand(t: float) -> float:
        u = math.exp(t)
        return math.exp(-u + t) * transform(u / rate)

    total = 0.0
    for a, b in ((-40.0, -10.0), (-10.0, -3.0), (-3.0, 0.0), (0.0, 2.0), (2.0, 4.0), (4.0, math.log(745.0))):
        val, _ = integrate.quad(integrand, a, b, epsabs=1e-16, epsrel=1e-12, limit=200)
        total += val
    return total / rate


def _check_mgf_args(desired: DesiredProfile, interference: InterferenceProfile, s: float) -> None:
    if desired.N > 1:
        _check_corr(interference)
    if s < 0:
        raise ValueError("s must be non-negative")


def _mgf_from_transform(desired: DesiredProfile, s: float, shift: float, integral) -> float:
    total = 0.0
    for sign, mult, rate in branch_subsets(desired):
        if rate == 0:
            continue
        ratio = s / rate
        total += -sign * mult * (1.0 - ratio * integral(shift + ratio))
    return total


def sd_snr_mgf(desired: DesiredProfile, interference: InterferenceProfile, s: float, noise: str = "sinr") -> float:
    """``E[exp(-s gamma_out)]`` of SNR-based selection (single branch included).

    Conditioning on the interference, the selected SNR has the exponential
    mixture density of a maximum, which gives
    ``sum_{A != {}} (-1)^(|A|+1) [1 - (s/r_A) int exp(-(c + s/r_A) t) M(t) dt]``
    with ``c = 1`` for SINR and ``c = 0`` for SIR. A single branch accepts
    any interference scenario.
    """
    _check_mgf_args(desired, interference, s)
    if s == 0:
        return 1.0
    shift = 1.0 if noise == "sinr" else 0.0
    return _mgf_from_transform(desired, s, shift, lambda a: _transform_integral(interference, a))


def _transform_table(prof: InterferenceProfile, a_min: float, rtol: float = 1e-10):
    """``a -> int exp(-a t) M(t) dt`` for all ``a >= a_min`` from one table of ``M``.

    ``M`` is tabulated on log-spaced Gauss-Legendre panels up to the point
    where ``exp(-a_min t)`` drops below 1e-16; the density doubles until the
    table reproduces the adaptive integral at ``a_min``.
    """
    if prof.variant == "corr":
        transform = lambda v: corr_transform(prof, v)[0]
    else:
        transform = lambda v: ksum.independent_mgf_pair(prof, v)[0]
    reference = _transform_integral(prof, a_min)
    hi = 16.0 * math.log(10.0) / a_min
    lo = 1e-30
    panels = int(math.ceil(2 * math.log10(hi / lo)))
    while panels <= 2048:
        t, w = log_panel_nodes(lo, hi, panels, 16)
        wM = w * np.array([transform(float(v)) for v in t])

        def integral(a: float, t=t, wM=wM) -> float:
            return float(wM @ np.exp(-a * t))

        if abs(integral(a_min) - reference) <= rtol * reference:
            return integral
        panels *= 2
    raise RuntimeError("transform table did not converge")


def sd_snr_mgf_family(desired: DesiredProfile, interference: InterferenceProfile, s_min: float, noise: str = "sinr"):
    """:func:`sd_snr_mgf` as a function of ``s >= s_min`` sharing one table of the interference transform."""
    _check_mgf_args(desired, interference, s_min)
    if s_min <= 0:
        raise ValueError("s_min must be positive")
    shift = 1.0 if noise == "sinr" else 0.0
    max_rate = max(rate for _, _, rate in branch_subsets(desired))
    integral = _transform_table(interference, shift + s_min / max_rate)

    def mgf(s: float) -> float:
        if s < s_min:
            raise ValueError("s below the tabulated range")
        return _mgf_from_transform(desired, s, shift, integral)

    return mgf


# --------------------------------------------------------------------------
# SINR-based selection


def _check_links(links: Sequence[sinr.LinkModel]) -> None:
    if not links:
        raise ValueError("need at least one branch")
    if len(links) > MAX_BRANCHES:
        raise ksum.CombinatorialCostError(f"N = {len(links)} exceeds {MAX_BRANCHES}")


def sd_sinr_cdf(links: Sequence[sinr.LinkModel], gamma):
    """Output CDF of SINR-based selection: product of the branch CDFs."""
    _check_links(links)
    g = np.asarray(gamma, dtype=float)
    if len(set(links)) == 1:
        out = np.asarray(sinr.output_cdf(links[0], g.ravel()).values) ** len(links)
    else:
        out = np.ones(g.size)
        for link in links:
            out = out * np.asarray(sinr.output_cdf(link, g.ravel()).values)
    return float(out[0]) if g.ndim == 0 else out.reshape(g.shape)


def sd_sinr_pdf(links: Sequence[sinr.LinkModel], gamma):
    """Output density of SINR-based selection, ``sum_n f_n prod_{m != n} F_m``."""
    _check_links(links)
    g = np.asarray(gamma, dtype=float)
    flat = g.ravel()
    N = len(links)
    if len(set(links)) == 1:
        F = np.asarray(sinr.output_cdf(links[0], flat).values)
        f = np.asarray(sinr.output_pdf(links[0], flat).values)
        out = N * f * F ** (N - 1)
    else:
        Fs = [np.asarray(sinr.output_cdf(l, flat).values) for l in links]
        fs = [np.asarray(sinr.output_pdf(l, flat).values) for l in links]
        out = np.zeros(flat.size)
        for n in range(N):
            term = fs[n].copy()
            for m in range(N):
                if m != n:
                    term = term * Fs[m]
            out += term
    return float(out[0]) if g.ndim == 0 else out.reshape(g.shape)
