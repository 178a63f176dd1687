"""Statistics of a sum of squared-K distributed interference-to-noise ratios.

Each interferer is exponential with a Gamma distributed local mean (shape
``k_i``, average ``inr_i``). Three scenarios are covered:

* ``ind``: independent, non-identical interferers (subset-indexed series),
* ``iid``: independent, identical interferers (binomial series with a power
  recursion for the coefficients),
* ``corr``: one common shadowing realization shared by all interferers
  (closed forms in Bessel-K and Tricomi U functions).

The two independent cases expand the density as

    f(g) = P * sum_groups w_g * sum_h s_{g,h} * Y_{c_g + h - 1}(g)

with ``Y_v(g) = (g/S)^(v/2) I_v(2 sqrt(S g))`` and ``S`` the total rate
``sum k_i / inr_i``. A group is a subset of interferers (``ind``) or a subset
size (``iid``); the empty group carries the leading Bessel term. The same
coefficients also give the Laplace transform, which is what the SINR/SIR
statistics consume.

The series cancel heavily at large ``g`` (and at small ``g`` when some
``k_i > 1``). Each evaluation first runs in double precision with log-scaled
terms; points whose rounding estimate exceeds the tolerance are re-run in
multiprecision with the working precision chosen from the observed term sizes.
Coefficients are generated with mpmath; the per-point multiprecision loops run
on gmpy2 ``mpfr`` numbers, which are several times cheaper per operation.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import gmpy2
import mpmath
import numpy as np
from scipy.special import gammaln

from . import specfun

__all__ = [
    "MAX_INTERFERERS",
    "CombinatorialCostError",
    "InterferenceProfile",
    "TruncationPolicy",
    "EvalResult",
    "BatchResult",
    "SeriesCoefficients",
    "series_coefficients",
    "pdf_sum_ind",
    "cdf_sum_ind",
    "pdf_sum_iid",
    "cdf_sum_iid",
    "pdf_sum_corr",
    "cdf_sum_corr",
    "mgf_sum_corr",
    "interference_pdf",
    "interference_cdf",
    "interference_mgf",
    "required_terms",
    "truncation_bound",
    "sample_gamma_I",
    "exponential_decay_profile",
]

MAX_INTERFERERS = 10

FLAG_NONCONVERGED = "nonconvergence"
FLAG_EXTENDED = "extended_precision"
FLAG_GUARD = "guard_perturbed"
FLAG_UNDERFLOW = "underflow"
FLAG_RESUMMED = "resummed"

_EPS = float(np.finfo(float).eps)
_LOG_TINY = math.log(1e-300)
# multiprecision is never pushed beyond this many digits
_MAX_DPS = 1500


class CombinatorialCostError(ValueError):
    """Raised when the interferer count exceeds MAX_INTERFERERS."""


# --------------------------------------------------------------------------
# Domain types


@dataclass(frozen=True)
class InterferenceProfile:
    """Interference scenario.

    Use the :meth:`ind`, :meth:`iid` and :meth:`corr` constructors; they apply
    the integer guard to the shaping parameters.

    Attributes
    ----------
    variant : {"ind", "iid", "corr"}
    shapes, inrs : tuple of float
        Per-interferer shaping parameter and average INR (linear). For
        ``iid`` and ``corr`` every entry is equal.
    flags : frozenset of str
        ``"guard_perturbed"`` when a parameter was moved off an integer.
    """

    variant: str
    shapes: tuple[float, ...]
    inrs: tuple[float, ...]
    flags: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        if self.variant not in ("ind", "iid", "corr"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if len(self.shapes) != len(self.inrs) or not self.shapes:
            raise ValueError("need at least one interferer with matching shapes and inrs")
        if any(k <= 0 for k in self.shapes) or any(g <= 0 for g in self.inrs):
            raise ValueError("shaping parameters and INRs must be positive")
        if len(self.shapes) > MAX_INTERFERERS:
            raise CombinatorialCostError(
                f"L = {len(self.shapes)} exceeds the supported maximum of {MAX_INTERFERERS}"
            )

    @classmethod
    def ind(cls, pairs: Iterable[tuple[float, float]]) -> "InterferenceProfile":
        """Independent non-identical interferers from ``(k_i, inr_i)`` pairs."""
        pairs = list(pairs)
        shapes, flags = [], set()
        for k, _ in pairs:
            kk, moved = specfun.guard_noninteger(float(k))
            shapes.append(kk)
            if moved:
                flags.add(FLAG_GUARD)
        return cls("ind", tuple(shapes), tuple(float(g) for _, g in pairs), frozenset(flags))

    @classmethod
    def iid(cls, k: float, inr: float, L: int) -> "InterferenceProfile":
        kk, moved = specfun.guard_noninteger(float(k))
        _check_count(L)
        return cls("iid", (kk,) * L, (float(inr),) * L, frozenset({FLAG_GUARD}) if moved else frozenset())

    @classmethod
    def corr(cls, k: float, inr: float, L: int) -> "InterferenceProfile":
        _check_count(L)
        # L is an integer, so L - k is near an integer exactly when k is
        kk, moved = specfun.guard_noninteger(float(k))
        return cls("corr", (kk,) * L, (float(inr),) * L, frozenset({FLAG_GUARD}) if moved else frozenset())

    @property
    def L(self) -> int:
        return len(self.shapes)

    @property
    def k(self) -> float:
        """Common shaping parameter (``iid``/``corr``)."""
        return self.shapes[0]

    @property
    def inr(self) -> float:
        """Common average INR (``iid``/``corr``)."""
        return self.inrs[0]

    @property
    def rates(self) -> tuple[float, ...]:
        return tuple(k / g for k, g in zip(self.shapes, self.inrs))

    @property
    def mean(self) -> float:
        return float(sum(self.inrs))

    def as_ind(self) -> "InterferenceProfile":
        """Same interferers described as an ``ind`` profile."""
        return InterferenceProfile("ind", self.shapes, self.inrs, self.flags)


def _check_count(L: int) -> None:
    if int(L) != L or L < 1:
        raise ValueError("L must be a positive integer")
    if L > MAX_INTERFERERS:
        raise CombinatorialCostError(f"L = {L} exceeds the supported maximum of {MAX_INTERFERERS}")


def exponential_decay_profile(
    k: float, inr: float, L: int, k_step: float = 0.3, decay: float = 0.1
) -> InterferenceProfile:
    """Non-identical profile with ``k_i = k - k_step*i`` and ``inr_i = inr*exp(-decay*(i-1))``."""
    _check_count(L)
    return InterferenceProfile.ind(
        (k - k_step * i, inr * math.exp(-decay * (i - 1))) for i in range(1, L + 1)
    )


@dataclass(frozen=True)
class TruncationPolicy:
    """Controls for every infinite series.

    Parameters
    ----------
    tol : float
        Absolute tolerance on the truncation plus rounding error.
    max_terms : int
        Cap on the number of retained ``h`` terms.
    rel_tol : float
        Additional relative target; the effective tolerance is
        ``min(tol, rel_tol * |value|)``, floored at 1e-300.
    """

    tol: float = 1e-10
    max_terms: int = 500
    rel_tol: float = 1e-10

    def __post_init__(self) -> None:
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_terms < 1:
            raise ValueError("max_terms must be at least 1")
        if self.rel_tol < 0:
            raise ValueError("rel_tol must be non-negative")


DEFAULT_POLICY = TruncationPolicy()


@dataclass(frozen=True)
class EvalResult:
    """A value together with its series diagnostics."""

    value: float
    terms_used: int = 0
    est_error: float = 0.0
    flags: frozenset[str] = frozenset()

    def __float__(self) -> float:
        return float(self.value)


@dataclass(frozen=True)
class BatchResult:
    """Vectorized counterpart of :class:`EvalResult`."""

    values: np.ndarray
    terms_used: np.ndarray
    est_error: np.ndarray
    flags: tuple[frozenset[str], ...]

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, i: int) -> EvalResult:
        return EvalResult(float(self.values[i]), int(self.terms_used[i]), float(self.est_error[i]), self.flags[i])

    @property
    def all_flags(self) -> frozenset[str]:
        out: set[str] = set()
        for f in self.flags:
            out |= f
        return frozenset(out)


# --------------------------------------------------------------------------
# Series coefficients


@dataclass(frozen=True)
class _Group:
    sign: int
    order: float
    rate: float
    size: int
    members: tuple[int, ...] = ()


class SeriesCoefficients:
    """Gamma-independent ingredients of the ``ind``/``iid`` series.

    Holds the groups (subsets or subset sizes) with their orders ``c_g``,
    weights ``w_g`` and coefficient streams ``s_{g,h}``, the prefactor
    ``P = prod b_i^k_i`` and the total rate ``S``. Streams are generated in
    multiprecision on demand and memoized per (precision, length).

    For ``ind`` the stream of a subset is the Cauchy product of the
    per-interferer streams ``(-b_i)^h / (h! (1 - k_i + h))``. For ``iid`` the
    stream of size ``i`` is the ``i``-th Cauchy power of the common stream.
    The power recursion ``c_h = (1/(h a_0)) sum_t (t i - h + t) a_t c_{h-t}``
    gives the same numbers but amplifies rounding roughly like ``h!``, so it
    is only used as a cross-check in the tests.
    """

    def __init__(self, profile: InterferenceProfile) -> None:
        if profile.variant == "corr":
            raise ValueError("the fully-correlated scenario has no series expansion")
        self.profile = profile
        self.shapes = profile.shapes
        self.rates = profile.rates
        self.total_rate = float(sum(self.rates))
        self.log_prefactor = float(sum(k * math.log(b) for k, b in zip(self.shapes, self.rates)))
        L = profile.L
        groups: list[_Group] = []
        if profile.variant == "ind":
            for mask in range(1 << L):
                members = tuple(i for i in range(L) if mask >> i & 1)
                order = sum(self.shapes[i] for i in range(L) if i not in members) + len(members)
                rate = sum(self.rates[i] for i in members)
                groups.append(_Group((-1) ** len(members), order, rate, len(members), members))
        else:
            k, b = self.shapes[0], self.rates[0]
            for i in range(L + 1):
                groups.append(_Group((-1) ** i, (L - i) * k + i, i * b, i))
        self.groups = tuple(groups)
        self._lock = threading.Lock()
        self._mp_cache: dict[tuple[int, int], tuple[list, list]] = {}
        self._mpfr_cache: dict[tuple[int, int], tuple[list, list]] = {}
        self._float_cache: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = {}

    @property
    def variant(self) -> str:
        return self.profile.variant

    @property
    def alphas(self) -> tuple[float, ...]:
        """``max_h 1/|1 - k_i + h|`` per interferer (used by the majorant)."""
        out = []
        for k in self.shapes:
            if k < 1:
                out.append(1.0 / (1.0 - k))
            else:
                r = k - math.floor(k)
                out.append(1.0 / min(r, 1.0 - r))
        return tuple(out)

    # -- multiprecision coefficients -------------------------------------

    def mp_coefficients(self, dps: int, H: int) -> tuple[list, list]:
        """Weights and streams (length ``H``) as mpf at ``dps`` digits."""
        key = (dps, H)
        with self._lock:
            hit = self._mp_cache.get(key)
            if hit is None:
                for (d, h), val in self._mp_cache.items():
                    if d == dps and h >= H:
                        hit = (val[0], [s[:H] for s in val[1]])
                        break
        if hit is not None:
            return hit
        with mpmath.workdps(dps):
            weights = self._mp_weights()
            streams = self._mp_streams_ind(H) if self.variant == "ind" else self._mp_streams_iid(H)
        with self._lock:
            self._mp_cache[key] = (weights, streams)
        return weights, streams

    def mp_orders(self) -> list:
        """Group orders ``c_g`` at the current precision (the float ones are rounded)."""
        ks = [mpmath.mpf(k) for k in self.shapes]
        if self.variant == "ind":
            return [mpmath.fsum(ks[i] for i in range(len(ks)) if i not in g.members) + g.size for g in self.groups]
        L = len(ks)
        return [(L - g.size) * ks[0] + g.size for g in self.groups]

    def _mp_weights(self) -> list:
        mpf = mpmath.mpf
        ks = [mpf(k) for k in self.shapes]
        bs = [mpf(k) / mpf(g) for k, g in zip(self.shapes, self.profile.inrs)]
        out = []
        if self.variant == "ind":
            for grp in self.groups:
                w = mpf(grp.sign)
                for i in range(len(ks)):
                    if i in grp.members:
                        w *= bs[i] ** (1 - ks[i])
                    else:
                        w *= mpmath.gamma(1 - ks[i])
                out.append(w)
        else:
            k, b, L = ks[0], bs[0], len(ks)
            g1k = mpmath.gamma(1 - k)
            for grp in self.groups:
                i = grp.size
                out.append(grp.sign * mpmath.binomial(L, i) * g1k ** (L - i) * b ** (i * (1 - k)))
        return out

    def _single_stream(self, i: int, H: int) -> list:
        mpf = mpmath.mpf
        k = mpf(self.shapes[i])
        b = mpf(self.shapes[i]) / mpf(self.profile.inrs[i])
        out = []
        power = mpf(1)
        for h in range(H):
            if h:
                power *= -b / h
            out.append(power / (1 - k + h))
        return out

    def _mp_streams_ind(self, H: int) -> list:
        L = self.profile.L
        singles = [self._single_stream(i, H) for i in range(L)]
        streams: list = [None] * (1 << L)
        streams[0] = [mpmath.mpf(1)] + [mpmath.mpf(0)] * (H - 1)
        for mask in range(1, 1 << L):
            top = mask.bit_length() - 1
            rest = mask ^ (1 << top)
            if rest == 0:
                streams[mask] = singles[top]
                continue
            left, right = streams[rest], singles[top]
            streams[mask] = [mpmath.fsum(left[p] * right[h - p] for p in range(h + 1)) for h in range(H)]
        return streams

    def _mp_streams_iid(self, H: int) -> list:
        # repeated Cauchy products; every term of a product carries the sign
        # (-1)^h (up to the first few 1/(1-k+h) factors), so nothing cancels
        single = self._single_stream(0, H)
        streams = [[mpmath.mpf(1)] + [mpmath.mpf(0)] * (H - 1)]
        for _ in range(self.profile.L):
            prev = streams[-1]
            streams.append([mpmath.fsum(prev[p] * single[h - p] for p in range(h + 1)) for h in range(H)])
        return streams

    def mpfr_coefficients(self, dps: int, H: int) -> tuple[list, list]:
        """:meth:`mp_coefficients` converted exactly to gmpy2 ``mpfr``."""
        key = (dps, H)
        with self._lock:
            hit = self._mpfr_cache.get(key)
        if hit is not None:
            return hit
        weights, streams = self.mp_coefficients(dps, H)
        bits = _bits(dps)
        with gmpy2.context(gmpy2.get_context(), precision=bits):
            out = ([_to_mpfr(w) for w in weights], [[_to_mpfr(v) for v in st] for st in streams])
        with self._lock:
            self._mpfr_cache[key] = out
        return out

    # -- double precision views ------------------------------------------

    def float_coefficients(self, H: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """``(log|w|, sign w, log|s|, sign s)``; stream arrays have shape (G, H)."""
        with self._lock:
            for h, val in self._float_cache.items():
                if h >= H:
                    return val[0], val[1], val[2][:, :H], val[3][:, :H]
        alloc = max(64, 1 << (H - 1).bit_length())
        weights, streams = self.mp_coefficients(40, alloc)
        lw = np.array([float(mpmath.log(abs(w))) if w != 0 else -np.inf for w in weights])
        sw = np.array([float(mpmath.sign(w)) for w in weights])
        ls = np.array([[float(mpmath.log(abs(x))) if x != 0 else -np.inf for x in s] for s in streams])
        ss = np.array([[float(mpmath.sign(x)) for x in s] for s in streams])
        with self._lock:
            self._float_cache[alloc] = (lw, sw, ls, ss)
        return lw, sw, ls[:, :H], ss[:, :H]


def _bits(dps: int) -> int:
    return int(dps * 3.3219280948873626) + 16


def _to_mpfr(v) -> "gmpy2.mpfr":
    # exact: an mpf is (sign, mantissa, exponent, bitcount)
    sign, man, exp, _ = v._mpf_
    if not man:
        return gmpy2.mpfr(0)
    out = gmpy2.mul_2exp(gmpy2.mpfr(gmpy2.mpz(man), max(int(man).bit_length(), 2)), exp)
    return -out if sign else out


_COEF_CACHE: dict[InterferenceProfile, SeriesCoefficients] = {}
_COEF_LOCK = threading.Lock()


def series_coefficients(profile: InterferenceProfile) -> SeriesCoefficients:
    """Memoized :class:`SeriesCoefficients` for a profile."""
    with _COEF_LOCK:
        coef = _COEF_CACHE.get(profile)
        if coef is None:
            coef = SeriesCoefficients(profile)
            if len(_COEF_CACHE) > 256:
                _COEF_CACHE.clear()
            _COEF_CACHE[profile] = coef
        return coef


# --------------------------------------------------------------------------
# Series evaluation
#
# kind "pdf"/"cdf": basis Y_{c+h-1}(x) / Y_{c+h}(x) at x = gamma
# kind "mgf":      basis exp(S/x) x^-(c+h)                 -> M(x)
# kind "slope":    basis exp(S/x) x^-v (v/x + S/x^2)         -> -M'(x)
# kind "shifted":  basis exp(S/x) x^-v (1 + v/x + S/x^2)     -> M(x) - M'(x)

_BESSEL_KINDS = ("pdf", "cdf")
_POWER_KINDS = ("mgf", "slope", "shifted")


def _order_shift(kind: str) -> float:
    return -1.0 if kind == "pdf" else 0.0


def _initial_terms(coef: SeriesCoefficients, kind: str, x: float) -> int:
    S = coef.total_rate
    if kind in _BESSEL_KINDS:
        return int(math.e * math.sqrt(S * x)) + 30
    return int(math.e * S / x) + 40


def _log_bessel_base(order: float, S: float, xs: np.ndarray) -> np.ndarray:
    """log Y_order(x) from the ascending series (order > -1)."""
    sx_max = float(S * xs.max())
    J = int(3.0 * math.sqrt(sx_max) + 40)
    j = np.arange(J, dtype=float)
    denom = gammaln(j + 1.0) + gammaln(order + j + 1.0)
    logt = j[:, None] * np.log(S * xs)[None, :] - denom[:, None]
    top = logt.max(axis=0)
    return order * np.log(xs) + top + np.log(np.exp(logt - top).sum(axis=0))


def _log_bessel_ladder(order: float, S: float, xs: np.ndarray, H: int) -> np.ndarray:
    """log Y_{order+h}(x) for h < H, shape (H, n).

    Uses the ratio ``r_v = Y_v / Y_{v-1} = x / (v + S r_{v+1})`` run downward
    from well above the last order, which is the stable direction.
    """
    base = _log_bessel_base(order, S, xs)
    if H == 1:
        return base[None, :]
    extra = int(2.0 * math.sqrt(S * float(xs.max()))) + 30
    r = np.zeros_like(xs)
    logr = np.empty((H - 1, xs.size))
    for step in range(H - 1 + extra, H - 1, -1):
        r = xs / (order + step + S * r)
    for idx in range(H - 2, -1, -1):
        r = xs / (order + idx + 1 + S * r)
        logr[idx] = np.log(r)
    out = np.empty((H, xs.size))
    out[0] = base
    out[1:] = base + np.cumsum(logr, axis=0)
    return out


def _float_terms(coef: SeriesCoefficients, kind: str, xs: np.ndarray, H: int):
    """Scaled lead, blocks and absolute sums for a batch of arguments.

    Returns ``(lead, blocks, abs_sum, shift)`` where the true quantities are
    the arrays times ``exp(shift)``.
    """
    lw, sw, ls, ss = coef.float_coefficients(H)
    S = coef.total_rate
    n = xs.size
    logx = np.log(xs)
    shift = np.full(n, -np.inf)
    lead = np.zeros(n)
    blocks = np.zeros((H, n))
    abs_sum = np.zeros(n)
    h = np.arange(H, dtype=float)
    for g, grp in enumerate(coef.groups):
        nh = 1 if g == 0 else H
        if kind in _BESSEL_KINDS:
            logb = _log_bessel_ladder(grp.order + _order_shift(kind), S, xs, nh)
        else:
            v = grp.order + h[:nh]
            logb = -v[:, None] * logx[None, :]
            if kind == "slope":
                logb = logb + np.log(v[:, None] / xs[None, :] + S / xs[None, :] ** 2)
            elif kind == "shifted":
                logb = logb + np.log1p(v[:, None] / xs[None, :] + S / xs[None, :] ** 2)
        E = lw[g] + ls[g, :nh, None] + logb
        sign = sw[g] * ss[g, :nh, None]
        gmax = E.max(axis=0)
        new = np.maximum(shift, gmax)
        with np.errstate(invalid="ignore"):
            factor = np.where(np.isfinite(shift), np.exp(shift - new), 0.0)
        lead *= factor
        blocks *= factor
        abs_sum *= factor
        shift = new
        vals = np.exp(E - shift)
        abs_sum += vals.sum(axis=0)
        if g == 0:
            lead += (sign * vals)[0]
        else:
            blocks[:nh] += sign * vals
    shift = shift + coef.log_prefactor
    if kind in _POWER_KINDS:
        shift = shift + S / xs
    return lead, blocks, abs_sum, shift


def _mp_bessel_ladder(order, S, x, H: int, eps):
    """Y_{order+h}(x), h < H, as mpfr in the current gmpy2 context."""
    sx = S * x
    term = 1 / gmpy2.gamma(order + 1)
    total = term
    j = 0
    bound = float(gmpy2.sqrt(sx)) + 5
    while True:
        j += 1
        term *= sx / (j * (order + j))
        total += term
        if j > bound and term < eps * total:
            break
    base = x**order * total
    if H == 1:
        return [base]
    extra = int(2.0 * float(gmpy2.sqrt(sx))) + 30
    r = gmpy2.mpfr(0)
    for step in range(H - 1 + extra, H - 1, -1):
        r = x / (order + step + S * r)
    ratios = [None] * (H - 1)
    for idx in range(H - 2, -1, -1):
        r = x / (order + idx + 1 + S * r)
        ratios[idx] = r
    out = [base]
    for r in ratios:
        out.append(out[-1] * r)
    return out


def _mp_orders(coef: "SeriesCoefficients") -> list:
    ks = [gmpy2.mpfr(k) for k in coef.shapes]
    if coef.variant == "ind":
        return [gmpy2.fsum([ks[i] for i in range(len(ks)) if i not in g.members] + [gmpy2.mpfr(0)]) + g.size
                for g in coef.groups]
    L = len(ks)
    return [(L - g.size) * ks[0] + g.size for g in coef.groups]


def _mp_terms(coef: SeriesCoefficients, kind: str, x: float, H: int, dps: int):
    """Lead, blocks and absolute sum at one argument, as unscaled mpfr.

    Callers must keep doing arithmetic on the results inside
    ``gmpy2.context(precision=_bits(dps))``.
    """
    weights, streams = coef.mpfr_coefficients(dps, H)
    with gmpy2.context(gmpy2.get_context(), precision=_bits(dps)):
        mpfr = gmpy2.mpfr
        # rates rebuilt from the inputs: a rounded S breaks the cancellation
        rates = [mpfr(k) / mpfr(g) for k, g in zip(coef.shapes, coef.profile.inrs)]
        S = gmpy2.fsum(rates)
        xx = mpfr(x)
        eps = mpfr(10) ** (-dps - 3)
        lead = mpfr(0)
        blocks = [mpfr(0)] * H
        abs_sum = mpfr(0)
        orders = _mp_orders(coef)
        for g, grp in enumerate(coef.groups):
            nh = 1 if g == 0 else H
            if kind in _BESSEL_KINDS:
                basis = _mp_bessel_ladder(orders[g] + _order_shift(kind), S, xx, nh, eps)
            else:
                basis = []
                p = xx ** (-orders[g])
                for h in range(nh):
                    v = orders[g] + h
                    if kind == "mgf":
                        basis.append(p)
                    elif kind == "slope":
                        basis.append(p * (v / xx + S / xx**2))
                    else:
                        basis.append(p * (1 + v / xx + S / xx**2))
                    p /= xx
            w = weights[g]
            st = streams[g]
            for h in range(nh):
                t = w * st[h] * basis[h]
                abs_sum += abs(t)
                if g == 0:
                    lead += t
                else:
                    blocks[h] += t
        scale = mpfr(1)
        for b, k in zip(rates, coef.shapes):
            scale *= b ** mpfr(k)
        if kind in _POWER_KINDS:
            scale *= gmpy2.exp(S / xx)
        return lead * scale, [b * scale for b in blocks], abs_sum * scale


def _truncate(lead, blocks, rounding, tol_abs, rel_tol, floor):
    """Pick the truncation point; works on floats or mpf scalars.

    Returns ``(value, H, est_error, status)`` where status is "ok",
    "more_terms" or "more_precision".
    """
    H = len(blocks)
    partial = [lead]
    for b in blocks:
        partial.append(partial[-1] + b)
    full = partial[-1]
    tol_eff = max(min(tol_abs, rel_tol * abs(full)), floor) if rel_tol > 0 else max(tol_abs, floor)
    last = abs(blocks[-1]) if H else 0
    prev = abs(blocks[-2]) if H > 1 else 0
    if last == 0:
        extrap = 0
    elif prev == 0 or last >= prev:
        extrap = math.inf
    else:
        rho = last / prev
        extrap = last * rho / (1 - rho)
    # worst remaining deviation from the longest partial sum, from H onward
    tails = [0] * (H + 1)
    running = 0
    for idx in range(H, -1, -1):
        running = max(running, abs(full - partial[idx]))
        tails[idx] = running
    if rounding > 0.5 * tol_eff:
        status = "more_precision"
    elif extrap > 0.5 * tol_eff:
        status = "more_terms"
    else:
        status = "ok"
    target = 0.5 * tol_eff
    H_used = H
    for idx in range(H + 1):
        if tails[idx] + extrap <= target:
            H_used = idx
            break
    err = tails[H_used] + (extrap if math.isfinite(float(extrap)) else 0) + rounding
    if not math.isfinite(float(extrap)):
        err = math.inf
    return partial[H_used], H_used, err, status


@dataclass
class _PointResult:
    value: float = math.nan
    terms: int = 0
    error: float = math.inf
    flags: set = field(default_factory=set)


def _evaluate_mp_point(coef, kind, x, policy, H, dps, flags) -> _PointResult:
    max_terms = policy.max_terms
    floor = 1e-300
    for _ in range(12):
        lead, blocks, abs_sum = _mp_terms(coef, kind, x, H, dps)
        with gmpy2.context(gmpy2.get_context(), precision=_bits(dps)):
            rounding = abs_sum * gmpy2.mpfr(10) ** (-dps + 1) * (16 + H)
            value, used, err, status = _truncate(lead, blocks, rounding, policy.tol, policy.rel_tol, floor)
        if status == "ok":
            return _PointResult(float(value), used, float(err), flags | {FLAG_EXTENDED})
        if status == "more_terms":
            if H >= max_terms:
                return _PointResult(float(value), used, float(err), flags | {FLAG_EXTENDED, FLAG_NONCONVERGED})
            H = min(2 * H, max_terms)
            continue
        tol_eff = max(min(policy.tol, policy.rel_tol * abs(float(value))), floor)
        need = math.log10(float(rounding) / tol_eff) if rounding > 0 else 0.0
        new_dps = dps + int(math.ceil(need)) + 8
        if new_dps > _MAX_DPS:
            return _PointResult(float(value), used, float(err), flags | {FLAG_EXTENDED, FLAG_NONCONVERGED})
        dps = _round_dps(new_dps)
    return _PointResult(float(value), used, float(err), flags | {FLAG_EXTENDED, FLAG_NONCONVERGED})


def _round_dps(d: int) -> int:
    # coarse precision levels keep the coefficient cache small
    return int(20 * math.ceil(d / 20))


def evaluate_series(
    coef: SeriesCoefficients, kind: str, xs: np.ndarray, policy: TruncationPolicy = DEFAULT_POLICY
) -> BatchResult:
    """Evaluate one of the series kinds at an array of positive arguments."""
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    if np.any(xs <= 0):
        raise ValueError("series arguments must be positive")
    n = xs.size
    results = [_PointResult() for _ in range(n)]
    base_flags = set(coef.profile.flags)
    # bucket by initial term count so one batch does not inherit the worst H
    H0 = np.array([min(policy.max_terms, _initial_terms(coef, kind, float(x))) for x in xs])
    buckets: dict[int, list[int]] = {}
    for i, h in enumerate(H0):
        buckets.setdefault(int(1 << max(0, (int(h) - 1).bit_length())), []).append(i)
    pending_mp: list[tuple[int, int, int]] = []
    for Hb in sorted(buckets):
        idx = np.array(buckets[Hb])
        H = min(Hb, policy.max_terms)
        while idx.size:
            lead, blocks, abs_sum, shift = _float_terms(coef, kind, xs[idx], H)
            retry = []
            for j, i in enumerate(idx):
                sh = float(shift[j])
                if not math.isfinite(sh):
                    results[i] = _PointResult(0.0, 0, 0.0, base_flags | {FLAG_UNDERFLOW})
                    continue
                if sh > 700:
                    # values are far outside double range in scaled units; let mp decide
                    pending_mp.append((i, H, 40))
                    continue
                scale = math.exp(sh)
                rounding = _EPS * abs_sum[j] * (16 + H) * scale
                value, used, err, status = _truncate(
                    lead[j] * scale, list(blocks[:, j] * scale), rounding, policy.tol, policy.rel_tol, 1e-300
                )
                if status == "ok":
                    results[i] = _PointResult(value, used, err, set(base_flags))
                elif status == "more_terms" and H < policy.max_terms:
                    retry.append(i)
                elif status == "more_terms":
                    results[i] = _PointResult(value, used, err, base_flags | {FLAG_NONCONVERGED})
                else:
                    lost = math.log10(max(abs_sum[j], 1e-300)) + sh / math.log(10)
                    ref = max(abs(value), 1e-300)
                    tol_eff = max(min(policy.tol, policy.rel_tol * ref), 1e-300)
                    dps = _round_dps(int(lost - math.log10(tol_eff)) + 12)
                    pending_mp.append((i, H, max(dps, 40)))
            idx = np.array(retry, dtype=int)
            H = min(2 * H, policy.max_terms)
    for i, H, dps in pending_mp:
        results[i] = _evaluate_mp_point(coef, kind, float(xs[i]), policy, H, min(dps, _MAX_DPS), set(base_flags))
    return BatchResult(
        np.array([r.value for r in results]),
        np.array([r.terms for r in results], dtype=int),
        np.array([r.error for r in results]),
        tuple(frozenset(r.flags) for r in results),
    )


def _scalar_or_batch(batch: BatchResult, scalar: bool):
    return batch[0] if scalar else batch


def _series_stat(profile: InterferenceProfile, kind: str, gamma, policy: TruncationPolicy):
    scalar = np.ndim(gamma) == 0
    g = np.atleast_1d(np.asarray(gamma, dtype=float))
    if np.any(g < 0):
        raise ValueError("gamma must be non-negative")
    coef = series_coefficients(profile)
    out_v = np.zeros(g.size)
    out_t = np.zeros(g.size, dtype=int)
    out_e = np.zeros(g.size)
    out_f: list[frozenset[str]] = [frozenset(profile.flags)] * g.size
    pos = g > 0
    if np.any(pos):
        batch = evaluate_series(coef, kind, g[pos], policy)
        out_v[pos] = batch.values
        out_t[pos] = batch.terms_used
        out_e[pos] = batch.est_error
        for j, i in enumerate(np.flatnonzero(pos)):
            out_f[i] = batch.flags[j]
    if kind == "pdf" and np.any(~pos):
        # the density at 0 is finite only when sum k_i >= 1
        K = sum(profile.shapes)
        out_v[~pos] = 0.0 if K > 1 else (math.inf if K < 1 else _pdf_at_zero_unit(profile))
    return _scalar_or_batch(BatchResult(out_v, out_t, out_e, tuple(out_f)), scalar)


def _pdf_at_zero_unit(profile: InterferenceProfile) -> float:
    # sum k_i == 1: f(0) = prod b_i^k_i
    return math.exp(sum(k * math.log(b) for k, b in zip(profile.shapes, profile.rates)))


def _require(profile: InterferenceProfile, variant: str) -> None:
    if profile.variant != variant:
        raise ValueError(f"expected a {variant!r} profile, got {profile.variant!r}")


def pdf_sum_ind(profile: InterferenceProfile, gamma, policy: TruncationPolicy = DEFAULT_POLICY):
    """Density of the interference sum for non-identical interferers.

    Leading Bessel term plus the double series over non-empty subsets and the
    inner index ``h``; ``gamma`` may be a scalar (returns :class:`EvalResult`)
    or an array (returns :class:`BatchResult`).
    """
    _require(profile, "ind")
    return _series_stat(profile, "pdf", gamma, policy)


def cdf_sum_ind(profile: InterferenceProfile, gamma, policy: TruncationPolicy = DEFAULT_POLICY):
    """Distribution function of the non-identical interference sum."""
    _require(profile, "ind")
    return _series_stat(profile, "cdf", gamma, policy)


def pdf_sum_iid(profile: InterferenceProfile, gamma, policy: TruncationPolicy = DEFAULT_POLICY):
    """Density of the interference sum for identical interferers (binomial series)."""
    _require(profile, "iid")
    return _series_stat(profile, "pdf", gamma, policy)


def cdf_sum_iid(profile: InterferenceProfile, gamma, policy: TruncationPolicy = DEFAULT_POLICY):
    """Distribution function of the identical interference sum."""
    _require(profile, "iid")
    return _series_stat(profile, "cdf", gamma, policy)


# --------------------------------------------------------------------------
# Fully correlated shadowing


def pdf_sum_corr(profile: InterferenceProfile, gamma):
    """Closed-form density of the fully-correlated interference sum.

    ``2 b^((L+k)/2) g^((L+k)/2 - 1) K_{L-k}(2 sqrt(b g)) / (Gamma(L) Gamma(k))``
    with ``b = k / inr``.
    """
    _require(profile, "corr")
    L, k, b = profile.L, profile.k, profile.rates[0]
    log_norm = math.log(2.0) - math.lgamma(L) - math.lgamma(k) + 0.5 * (L + k) * math.log(b)

    def one(g: float) -> float:
        if g < 0:
            return 0.0
        if g == 0:
            return math.inf if L + k <= 2 else 0.0
        r = 2.0 * math.sqrt(b * g)
        log_val = log_norm + (0.5 * (L + k) - 1) * math.log(g) - r
        return math.exp(log_val) * specfun.bessel_kv_scaled(L - k, r)

    if np.ndim(gamma) == 0:
        return one(float(gamma))
    return np.array([one(float(g)) for g in np.asarray(gamma, dtype=float).ravel()]).reshape(np.shape(gamma))


def cdf_sum_corr(profile: InterferenceProfile, gamma):
    """Distribution function of the fully-correlated sum via the Meijer-G instance."""
    _require(profile, "corr")
    L, k, b = profile.L, profile.k, profile.rates[0]
    log_norm = math.lgamma(L) + math.lgamma(k)

    def one(g: float) -> float:
        if g <= 0:
            return 0.0
        x = b * g
        G = specfun.meijer_g_cdf_instance(L, k, x)
        return min(1.0, G * math.exp(0.5 * (L + k) * math.log(x) - log_norm))

    if np.ndim(gamma) == 0:
        return one(float(gamma))
    return np.array([one(float(g)) for g in np.asarray(gamma, dtype=float).ravel()]).reshape(np.shape(gamma))


def mgf_sum_corr(profile: InterferenceProfile, s):
    """``E[exp(-s g)] = (k/(inr s))^k U(k, k - L + 1, k/(inr s))``."""
    _require(profile, "corr")
    L, k, b = profile.L, profile.k, profile.rates[0]

    def one(sv: float) -> float:
        if sv < 0:
            raise ValueError("s must be non-negative")
        if sv == 0:
            return 1.0
        z = b / sv
        return math.exp(k * math.log(z)) * specfun.kummer_u(k, k - L + 1, z)

    if np.ndim(s) == 0:
        return one(float(s))
    return np.array([one(float(v)) for v in np.asarray(s, dtype=float).ravel()]).reshape(np.shape(s))


def corr_mgf_pair(profile: InterferenceProfile, s: float) -> tuple[float, float]:
    """``(M(s), -M'(s))`` for the fully-correlated sum.

    With ``z = b/s`` and ``c = 1 + L - k``: ``M = z^L U(L, c, z)`` and
    ``-M' = (L k / s) z^L U(L+1, c, z)``.
    """
    L, k, b = profile.L, profile.k, profile.rates[0]
    z = b / s
    c = 1.0 + L - k
    zl = L * math.log(z)
    m = math.exp(zl) * specfun.kummer_u(L, c, z)
    d = L * k / s * math.exp(zl) * specfun.kummer_u(L + 1, c, z)
    return m, d


def independent_mgf_pair(profile: InterferenceProfile, s: float) -> tuple[float, float]:
    """``(M(s), -M'(s))`` for independent interferers, summed in closed form.

    Per interferer ``M_i = z^k U(k, k, z)`` and ``-M_i' = (k/s) z^k U(k+1, k, z)``
    with ``z = k / (inr s)``; the inner series of the subset expansion are
    exactly these functions, so this is the same quantity without the
    alternating sums.
    """
    if profile.variant == "iid":
        items = [(profile.k, profile.rates[0], profile.L)]
    else:
        items = [(k, b, 1) for k, b in zip(profile.shapes, profile.rates)]
    log_m = 0.0
    ratio = 0.0
    for k, b, mult in items:
        z = b / s
        lz = k * math.log(z)
        mi = math.exp(lz) * specfun.kummer_u(k, k, z)
        di = k / s * math.exp(lz) * specfun.kummer_u(k + 1, k, z)
        log_m += mult * math.log(mi)
        ratio += mult * di / mi
    m = math.exp(log_m)
    return m, m * ratio


# --------------------------------------------------------------------------
# Dispatch helpers


def interference_pdf(profile: InterferenceProfile, gamma, policy: TruncationPolicy = DEFAULT_POLICY):
    """Density of the interference sum for any scenario.

    Returns float/ndarray values (diagnostics are dropped).
    """
    if profile.variant == "corr":
        return pdf_sum_corr(profile, gamma)
    res = _series_stat(profile, "pdf", gamma, policy)
    return res.value if isinstance(res, EvalResult) else res.values


def interference_cdf(profile: InterferenceProfile, gamma, policy: TruncationPolicy = DEFAULT_POLICY):
    if profile.variant == "corr":
        return cdf_sum_corr(profile, gamma)
    res = _series_stat(profile, "cdf", gamma, policy)
    return res.value if isinstance(res, EvalResult) else res.values


def interference_mgf(profile: InterferenceProfile, s) -> float:
    """Laplace transform ``E[exp(-s g)]`` for any scenario (closed form)."""
    if profile.variant == "corr":
        return mgf_sum_corr(profile, s)

    def one(sv: float) -> float:
        return 1.0 if sv == 0 else independent_mgf_pair(profile, sv)[0]

    if np.ndim(s) == 0:
        return one(float(s))
    return np.array([one(float(v)) for v in np.asarray(s, dtype=float).ravel()])


# --------------------------------------------------------------------------
# Truncation diagnostics


def _mp_partials(profile: InterferenceProfile, gamma: float, H: int, dps: int = 40, kind: str = "pdf"):
    coef = series_coefficients(profile)
    lead, blocks, _ = _mp_terms(coef, kind, gamma, H, dps)
    with gmpy2.context(gmpy2.get_context(), precision=_bits(dps)):
        partial = [lead]
        for b in blocks:
            partial.append(partial[-1] + b)
    return partial


def required_terms(
    profile: InterferenceProfile,
    gamma: float,
    accuracy: float = 1e-5,
    policy: TruncationPolicy = DEFAULT_POLICY,
    relative: bool = True,
) -> int:
    """Smallest number ``H`` of retained ``h`` terms meeting ``accuracy``.

    The reference is the series value with ``policy.max_terms`` terms; ``H``
    is the first count for which every longer truncation stays within
    ``accuracy`` of it (relative to the reference unless ``relative`` is False).
    """
    if profile.variant not in ("ind", "iid"):
        raise ValueError("required_terms applies to the series scenarios")
    H = policy.max_terms
    partial = _mp_partials(profile, gamma, H, dps=40)
    ref = partial[-1]
    scale = abs(ref) if relative else 1
    limit = accuracy * scale
    needed = H
    for idx in range(H, -1, -1):
        if abs(partial[idx] - ref) >= limit:
            break
        needed = idx
    return needed


def truncation_bound(profile: InterferenceProfile, gamma: float, H: int, kind: str = "pdf") -> float:
    """Upper bound on the absolute tail of the subset series beyond ``H`` terms.

    Each subset stream is dominated termwise by
    ``prod_i alpha_i * b_A^h / h!`` (multinomial theorem with
    ``alpha_i = max_h 1/|1 - k_i + h|``), and each Bessel factor by
    ``g^v I_0(2 sqrt(S g)) / Gamma(v + 1)``. The resulting positive majorant is
    summed exactly up to the point where its term ratio falls below one and
    closed with the geometric tail.
    """
    if profile.variant not in ("ind", "iid"):
        raise ValueError("truncation_bound applies to the series scenarios")
    if H < 0:
        raise ValueError("H must be non-negative")
    coef = series_coefficients(profile)
    g = float(gamma)
    S = coef.total_rate
    alphas = coef.alphas
    weights, _ = coef.mp_coefficients(30, 2)
    shift = _order_shift(kind)
    log_i0 = math.log(specfun.bessel_iv_scaled(0.0, 2.0 * math.sqrt(S * g))) + 2.0 * math.sqrt(S * g)
    total = 0.0
    for grp, w in zip(coef.groups[1:], weights[1:]):
        if profile.variant == "ind":
            alpha = math.prod(alphas[i] for i in grp.members)
        else:
            alpha = alphas[0] ** grp.size
        log_a = math.log(abs(float(w))) + math.log(alpha) + coef.log_prefactor + log_i0
        c = grp.order + shift
        rate = grp.rate

        def log_term(h: int) -> float:
            v = c + h
            return log_a + h * math.log(rate) - math.lgamma(h + 1) + v * math.log(g) - math.lgamma(v + 1)

        # ratio of consecutive majorant terms: rate*g / ((h+1)(c+h+1))
        h = H
        acc = 0.0
        while True:
            rho = rate * g / ((h + 1) * (c + h + 1))
            lt = log_term(h)
            if rho < 1:
                acc += math.exp(lt) / (1 - rho)
                break
            acc += math.exp(lt)
            h += 1
        total += acc
    return total


# --------------------------------------------------------------------------
# Sampling


def sample_gamma_I(profile: InterferenceProfile, rng: np.random.Generator, size: int | None = None):
    """Draw the interference sum.

    Each interferer's local mean is Gamma(k_i, inr_i/k_i) and its power is
    exponential with that mean. In the fully-correlated scenario one local
    mean is shared by all interferers.
    """
    n = 1 if size is None else int(size)
    if profile.variant == "corr":
        omega = rng.gamma(profile.k, profile.inr / profile.k, n)
        out = omega * rng.standard_gamma(profile.L, n)
    else:
        out = np.zeros(n)
        for k, g in zip(profile.shapes, profile.inrs):
            out += rng.gamma(k, g / k, n) * rng.standard_exponential(n)
    return float(out[0]) if size is None else out
