"""Outage probability, average bit-error probability and high-SNR asymptotics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import ksum, simo, sinr
from .ksum import DEFAULT_POLICY, InterferenceProfile, TruncationPolicy
from .quadrature import log_panel_nodes, panel_nodes
from .simo import DesiredProfile, UnreachableError

__all__ = [
    "ReceiverConfig",
    "ModulationSpec",
    "AsymptoticGains",
    "QuadratureError",
    "interference_moment",
    "outage_probability",
    "op_high_snr",
    "abep_mgf",
    "abep_cdf",
    "abep_high_snr",
    "min_branches",
    "output_mgf",
]

# e^{-beta*gamma_cut} < 1e-16
_CUT_EXPONENT = 16.0 * math.log(10.0)


class QuadratureError(RuntimeError):
    """Raised when an adaptive quadrature does not reach its tolerance."""


@dataclass(frozen=True)
class ReceiverConfig:
    """A receiver: branch SNRs, interference, selection rule and noise model.

    A single branch is the SISO link (any interference scenario). With more
    branches the SNR-based rule needs fully-correlated interference shared by
    the decision; the SINR-based rule gives every branch an independent copy
    of ``interference``.
    """

    desired: DesiredProfile
    interference: InterferenceProfile
    rule: str = "snr"
    noise: str = "sinr"
    policy: TruncationPolicy = field(default=DEFAULT_POLICY, compare=False)

    def __post_init__(self) -> None:
        if self.rule not in ("snr", "sinr"):
            raise ValueError("rule must be 'snr' or 'sinr'")
        if self.noise not in ("sinr", "sir"):
            raise ValueError("noise must be 'sinr' or 'sir'")
        if self.N > 1 and self.rule == "snr" and self.interference.variant != "corr":
            raise ValueError("SNR-based selection is implemented for fully-correlated interference")

    @classmethod
    def build(cls, snr: float, N: int, interference: InterferenceProfile, rule: str = "snr", noise: str = "sinr",
              policy: TruncationPolicy = DEFAULT_POLICY) -> "ReceiverConfig":
        return cls(DesiredProfile.iid(snr, N), interference, rule, noise, policy)

    @property
    def N(self) -> int:
        return self.desired.N

    @property
    def links(self) -> list[sinr.LinkModel]:
        return [sinr.LinkModel(g, self.interference, self.noise) for g in self.desired.branch_snrs]

    def with_snr(self, snr: float) -> "ReceiverConfig":
        """Same receiver with every branch SNR scaled so that the first equals ``snr``."""
        ratio = snr / self.desired.branch_snrs[0]
        return ReceiverConfig(DesiredProfile(tuple(g * ratio for g in self.desired.branch_snrs)),
                              self.interference, self.rule, self.noise, self.policy)

    def cdf(self, gamma):
        """Output CDF at scalar or array ``gamma``."""
        if self.N == 1:
            res = sinr.output_cdf(self.links[0], gamma, self.policy)
            return res.value if np.ndim(gamma) == 0 else res.values
        if self.rule == "snr":
            return simo.sd_snr_cdf(self.desired, self.interference, gamma, self.noise)
        return simo.sd_sinr_cdf(self.links, gamma)

    def pdf(self, gamma):
        """Output density at scalar or array ``gamma``."""
        if self.N == 1:
            res = sinr.output_pdf(self.links[0], gamma, self.policy)
            return res.value if np.ndim(gamma) == 0 else res.values
        if self.rule == "snr":
            return simo.sd_snr_pdf(self.desired, self.interference, gamma, self.noise)
        return simo.sd_sinr_pdf(self.links, gamma)


@dataclass(frozen=True)
class ModulationSpec:
    """Modulation for the ABEP.

    DBPSK has the exponential conditional bit-error probability
    ``alpha exp(-beta gamma)`` with ``alpha = 1/2``, ``beta = 1``. Gray-coded
    M-PSK uses the angular integral of the MGF and has no ``(alpha, beta)``.
    """

    family: str = "dbpsk"
    M: int = 2
    alpha: float | None = 0.5
    beta: float | None = 1.0

    def __post_init__(self) -> None:
        if self.family not in ("dbpsk", "mpsk", "exponential"):
            raise ValueError("family must be 'dbpsk', 'mpsk' or 'exponential'")
        if self.family == "dbpsk" and (self.alpha != 0.5 or self.beta != 1.0):
            raise ValueError("DBPSK fixes alpha = 1/2 and beta = 1")
        if self.family == "mpsk" and (self.M < 2 or self.M & (self.M - 1)):
            raise ValueError("M must be a power of two >= 2")
        if self.family == "exponential" and not (self.alpha and self.beta and self.alpha > 0 and self.beta > 0):
            raise ValueError("exponential family needs positive alpha and beta")

    @classmethod
    def dbpsk(cls) -> "ModulationSpec":
        return cls("dbpsk", 2, 0.5, 1.0)

    @classmethod
    def mpsk(cls, M: int) -> "ModulationSpec":
        return cls("mpsk", int(M), None, None)

    @classmethod
    def parse(cls, text: str) -> "ModulationSpec":
        """``"dbpsk"`` or ``"mpsk:M"``."""
        text = text.strip().lower()
        if text == "dbpsk":
            return cls.dbpsk()
        if text.startswith("mpsk:"):
            return cls.mpsk(int(text.split(":", 1)[1]))
        raise ValueError(f"unknown modulation {text!r}")

    @property
    def is_exponential(self) -> bool:
        return self.family in ("dbpsk", "exponential")

    @property
    def bits(self) -> int:
        return int(round(math.log2(self.M)))


@dataclass(frozen=True)
class AsymptoticGains:
    """High-SNR behaviour ``(G_c snr)^(-G_d)`` and its constant ``D = G_c^(-G_d)``."""

    diversity_gain: float
    coding_gain: float
    d_constant: float
    approximation: float


# --------------------------------------------------------------------------
# Interference moments


def interference_moment(prof: InterferenceProfile, n: int) -> float:
    """``E[g^n]`` of the interference sum."""
    if n == 0:
        return 1.0
    if prof.variant == "corr":
        L, k, inr = prof.L, prof.k, prof.inr
        return math.exp(math.lgamma(L + n) + math.lgamma(k + n) - math.lgamma(L) - math.lgamma(k) + n * math.log(inr / k))
    # raw moments of each squared-K term, combined by the binomial convolution
    total = [1.0] + [0.0] * n
    for k, inr in zip(prof.shapes, prof.inrs):
        single = [math.exp(math.lgamma(m + 1) + math.lgamma(k + m) - math.lgamma(k) + m * math.log(inr / k))
                  for m in range(n + 1)]
        total = [math.fsum(math.comb(m, j) * total[j] * single[m - j] for j in range(m + 1)) for m in range(n + 1)]
    return total[n]


def _load_moment(config: ReceiverConfig, n: int) -> float:
    # E[(1 + g)^n] with noise, E[g^n] without
    if config.noise == "sir":
        return interference_moment(config.interference, n)
    return math.fsum(math.comb(n, j) * interference_moment(config.interference, j) for j in range(n + 1))


# --------------------------------------------------------------------------
# Outage


def outage_probability(config: ReceiverConfig, gamma_th):
    """Probability that the output SINR (or SIR) falls below ``gamma_th``."""
    return config.cdf(gamma_th)


def _op_constant(config: ReceiverConfig, gamma_th: float) -> float:
    N = config.N
    if config.rule == "snr" or N == 1:
        return gamma_th**N * _load_moment(config, N)
    return (gamma_th * _load_moment(config, 1)) ** N


def op_high_snr(config: ReceiverConfig, gamma_th: float) -> AsymptoticGains:
    """High-SNR outage ``D prod_n snr_n^(-1)``.

    SNR-based selection: ``D = gamma_th^N sum_n C(N,n) E[g^n]``; for
    fully-correlated interference ``E[g^n] = Gamma(L+n) Gamma(k+n) / ((k/inr)^n Gamma(L) Gamma(k))``.
    SINR-based selection: ``D = ((1 + E[g]) gamma_th)^N = ((1 + L inr) gamma_th)^N``.
    Without noise the ``1 +`` terms disappear.
    """
    D = _op_constant(config, gamma_th)
    N = config.N
    approx = D / math.prod(config.desired.branch_snrs)
    return AsymptoticGains(float(N), D ** (-1.0 / N), D, approx)


# --------------------------------------------------------------------------
# MGF of the output and ABEP


def output_mgf(config: ReceiverConfig, s: float) -> float:
    """``E[exp(-s gamma_out)]`` for SISO or SNR-based selection."""
    if config.N > 1 and config.rule != "snr":
        raise ValueError("no MGF route for SINR-based selection; use abep_cdf")
    return simo.sd_snr_mgf(config.desired, config.interference, s, config.noise)


@lru_cache(maxsize=16)
def _legendre(order: int):
    return np.polynomial.legendre.leggauss(order)


def _richardson_panels(f, a: float, b: float, tol: float = 1e-9, order: int = 8, max_panels: int = 256) -> tuple[float, float]:
    """Fixed-order Gauss-Legendre panels with Richardson extrapolation on panel doubling."""
    x, w = _legendre(order)

    def composite(panels: int) -> float:
        edges = np.linspace(a, b, panels + 1)
        total = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            half, mid = 0.5 * (hi - lo), 0.5 * (hi + lo)
            total += half * sum(wi * f(mid + half * xi) for xi, wi in zip(x, w))
        return total

    panels = 2
    prev = composite(panels)
    factor = 2.0 ** (2 * order) - 1.0
    while panels < max_panels:
        panels *= 2
        cur = composite(panels)
        extrap = cur + (cur - prev) / factor
        err = abs(extrap - prev)
        if err <= tol * max(abs(extrap), 1e-300):
            return extrap, err
        prev = cur
    raise QuadratureError("angular integral did not converge")


def _mpsk_abep(mgf, mod: ModulationSpec) -> float:
    bits = mod.bits
    g = bits * math.sin(math.pi / mod.M) ** 2
    upper = math.pi - math.pi / mod.M
    val, _ = _richardson_panels(lambda phi: mgf(g / math.sin(phi) ** 2), 0.0, upper)
    return val / (math.pi * bits)


def abep_mgf(config: ReceiverConfig, modulation: ModulationSpec = ModulationSpec.dbpsk()) -> float:
    """ABEP from the output MGF.

    DBPSK: ``0.5 M(1)``. Gray-coded M-PSK:
    ``(1/(pi log2 M)) int_0^{pi - pi/M} M(log2 M sin^2(pi/M) / sin^2 phi) dphi``.
    """
    if modulation.is_exponential:
        return modulation.alpha * output_mgf(config, modulation.beta)
    if config.N > 1 and config.rule != "snr":
        raise ValueError("no MGF route for SINR-based selection; use abep_cdf")
    g = modulation.bits * math.sin(math.pi / modulation.M) ** 2
    mgf = simo.sd_snr_mgf_family(config.desired, config.interference, g, config.noise)
    return _mpsk_abep(mgf, modulation)


def _laplace_of_cdf(config: ReceiverConfig, beta: float, rtol: float = 1e-11) -> tuple[float, float]:
    """``beta int_0^inf exp(-beta gamma) F(gamma) dgamma`` and its error estimate.

    The integral runs over ``[0, gamma_cut]`` with ``exp(-beta gamma_cut) = 1e-16``
    in the variable ``log gamma``; the panel count doubles until two successive
    rules agree, and the remainder beyond ``gamma_cut`` is bounded by
    ``exp(-beta gamma_cut)``.
    """
    cut = _CUT_EXPONENT / beta
    lo = 1e-14 * cut
    panels = 16
    prev = None
    while panels <= 1024:
        x, w = log_panel_nodes(lo, cut, panels, 16)
        F = np.asarray(config.cdf(x), dtype=float)
        val = beta * float(w @ (np.exp(-beta * x) * F))
        if prev is not None and abs(val - prev) <= rtol * abs(val) + 1e-300:
            # head below lo: F <= 1 there, so at most beta*lo
            return val, abs(val - prev) + math.exp(-_CUT_EXPONENT) + beta * lo * float(F[0])
        prev = val
        panels *= 2
    raise QuadratureError("ABEP quadrature did not converge")


def _laplace_table(config: ReceiverConfig, s_min: float, rtol: float = 1e-10):
    """``s -> s int exp(-s gamma) F(gamma) dgamma`` for every ``s >= s_min`` from one CDF table.

    The CDF is tabulated once on log-spaced Gauss-Legendre panels from
    ``1e-30`` to the cut of ``s_min``; each transform is then a weighted sum.
    The panel density doubles until the table reproduces the adaptive
    integral at ``s_min``.
    """
    cut = _CUT_EXPONENT / s_min
    lo = 1e-30
    reference, _ = _laplace_of_cdf(config, s_min)
    panels = int(math.ceil(2 * math.log10(cut / lo)))
    while panels <= 2048:
        x, w = log_panel_nodes(lo, cut, panels, 16)
        wF = w * np.asarray(config.cdf(x), dtype=float)

        def transform(s: float, x=x, wF=wF) -> float:
            return s * float(wF @ np.exp(-s * x))

        if abs(transform(s_min) - reference) <= rtol * reference:
            return transform
        panels *= 2
    raise QuadratureError("CDF table for the M-PSK integral did not converge")


def abep_cdf(config: ReceiverConfig, modulation: ModulationSpec = ModulationSpec.dbpsk()) -> float:
    """ABEP by integrating the output CDF.

    For an exponential conditional error ``alpha exp(-beta gamma)`` this is
    ``alpha beta int exp(-beta gamma) F(gamma) dgamma``. For M-PSK the same
    Laplace integral supplies the MGF inside the angular integral; one CDF
    table serves every angle.
    """
    if modulation.is_exponential:
        val, _ = _laplace_of_cdf(config, modulation.beta)
        return modulation.alpha * val
    g = modulation.bits * math.sin(math.pi / modulation.M) ** 2
    return _mpsk_abep(_laplace_table(config, g), modulation)


def _modulation_factor(modulation: ModulationSpec, N: int) -> float:
    """``lim snr^N ABEP / (Gamma(N+1) D_op / gamma_th^N)``: ``alpha / beta^N`` or its M-PSK analogue."""
    if modulation.is_exponential:
        return modulation.alpha / modulation.beta**N
    g = modulation.bits * math.sin(math.pi / modulation.M) ** 2
    upper = math.pi - math.pi / modulation.M
    val, _ = _richardson_panels(lambda phi: (math.sin(phi) ** 2 / g) ** N, 0.0, upper)
    return val / (math.pi * modulation.bits)


def abep_high_snr(config: ReceiverConfig, modulation: ModulationSpec = ModulationSpec.dbpsk()) -> AsymptoticGains:
    """High-SNR ABEP ``D prod_n snr_n^(-1)``.

    SNR-based selection: ``D = alpha Gamma(N+1) / beta^N sum_n C(N,n) E[g^n]``.
    SINR-based selection: ``D = alpha ((1 + L inr)/beta)^N Gamma(N+1)``.
    """
    N = config.N
    unit = _op_constant(config, 1.0)
    D = math.gamma(N + 1) * _modulation_factor(modulation, N) * unit
    approx = D / math.prod(config.desired.branch_snrs)
    return AsymptoticGains(float(N), D ** (-1.0 / N), D, approx)


# --------------------------------------------------------------------------
# Branch planning


def min_branches(target_op: float, threshold_ratio: float, interference: InterferenceProfile, rule: str = "snr",
                 noise: str = "sinr", max_branches: int = simo.MAX_BRANCHES) -> int:
    """Smallest ``N`` whose outage at ``gamma_th / snr = threshold_ratio`` is at most ``target_op``.

    The outage depends on the threshold and the SNR only through their
    ratio, so the search runs at unit SNR.
    """
    if not 0 < target_op <= 1:
        raise ValueError("target_op must lie in (0, 1]")
    if threshold_ratio <= 0:
        raise ValueError("threshold_ratio must be positive")
    for N in range(1, max_branches + 1):
        config = ReceiverConfig.build(1.0, N, interference, rule, noise)
        if outage_probability(config, threshold_ratio) <= target_op:
            return N
    raise UnreachableError(f"target OP {target_op} not reached with {max_branches} branches")
