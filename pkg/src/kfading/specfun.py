"""Real-argument special functions used by the fading statistics.

Every function here works in double precision. Large magnitudes are carried
through log/scaled variants (suffix ``_scaled`` or ``_log``) so that callers can
combine factors like ``exp(z)`` and ``W(z)`` without intermediate overflow.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.special import roots_genlaguerre

__all__ = [
    "AccuracyTarget",
    "SpecialFunctionError",
    "PoleError",
    "DomainError",
    "ConditioningError",
    "INTEGER_GUARD",
    "is_near_integer",
    "guard_noninteger",
    "gamma_fn",
    "rgamma",
    "pochhammer",
    "gamma_upper",
    "gamma_upper_scaled",
    "bessel_iv",
    "bessel_iv_scaled",
    "bessel_kv",
    "bessel_kv_scaled",
    "kummer_m",
    "kummer_m_scaled",
    "kummer_u",
    "whittaker_m",
    "whittaker_m_scaled",
    "whittaker_w",
    "whittaker_w_scaled",
    "corr_sum_cdf",
    "meijer_g_cdf_instance",
]


class SpecialFunctionError(ValueError):
    """Base class for kernel failures."""


class PoleError(SpecialFunctionError):
    """Argument sits on a pole of the function."""


class DomainError(SpecialFunctionError):
    """Argument outside the supported real domain."""


class ConditioningError(SpecialFunctionError):
    """Parameters too close to an integer for the chosen representation."""


@dataclass(frozen=True)
class AccuracyTarget:
    """Stopping rule for the series and quadratures in this module.

    A series stops once ``|term| <= max(abs_tol, rel_tol * |partial sum|)``.
    """

    abs_tol: float = 0.0
    rel_tol: float = 1e-16
    max_iterations: int = 20000

    def __post_init__(self) -> None:
        if self.abs_tol < 0 or self.rel_tol < 0:
            raise ValueError("tolerances must be non-negative")
        if self.abs_tol == 0 and self.rel_tol == 0:
            raise ValueError("abs_tol and rel_tol cannot both be zero")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")

    def small(self, term: float, partial: float) -> bool:
        return abs(term) <= max(self.abs_tol, self.rel_tol * abs(partial))


DEFAULT_ACCURACY = AccuracyTarget()

# Width of the band around integers where Gamma(1-k), Gamma(L-k) and
# Gamma(k-L) are treated as poles.
INTEGER_GUARD = 1e-6


def is_near_integer(x: float, band: float = INTEGER_GUARD) -> bool:
    return abs(x - round(x)) < band


def guard_noninteger(x: float, band: float = INTEGER_GUARD) -> tuple[float, bool]:
    """Move ``x`` out of the integer band; returns ``(value, perturbed)``."""
    if is_near_integer(x, band):
        return float(round(x)) + band, True
    return float(x), False


def _is_nonpositive_int(x: float) -> bool:
    return x <= 0 and x == math.floor(x)


# --------------------------------------------------------------------------
# Gamma family


def gamma_fn(x: float) -> float:
    """Gamma function for real ``x`` off the non-positive integers."""
    if _is_nonpositive_int(x):
        raise PoleError(f"Gamma has a pole at {x}")
    return math.gamma(x)


def rgamma(x: float) -> float:
    """Reciprocal Gamma, zero at the poles and for large arguments."""
    if _is_nonpositive_int(x):
        return 0.0
    if x > 171.0:
        return math.exp(-math.lgamma(x))
    return 1.0 / math.gamma(x)


def pochhammer(a: float, n: int) -> float:
    """Rising factorial ``(a)_n``."""
    if n < 0:
        raise ValueError("n must be non-negative")
    out = 1.0
    for i in range(n):
        out *= a + i
    return out


def _lower_gamma_series_scaled(a: float, x: float, acc: AccuracyTarget) -> float:
    # gamma(a, x) * exp(x) * x**(-a) = sum_n x**n / (a (a+1) ... (a+n)), a > 0
    term = 1.0 / a
    total = term
    for n in range(1, acc.max_iterations):
        term *= x / (a + n)
        total += term
        if acc.small(term, total):
            return total
    raise SpecialFunctionError("lower incomplete gamma series did not converge")


def _upper_gamma_cf_scaled(a: float, x: float, acc: AccuracyTarget) -> float:
    # exp(x) * x**(-a) * Gamma(a, x) by the modified Lentz continued fraction
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b if b != 0 else 1.0 / tiny
    h = d
    for i in range(1, acc.max_iterations):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        d = tiny if abs(d) < tiny else d
        c = b + an / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) <= max(acc.rel_tol, 1e-16):
            return h
    raise SpecialFunctionError("upper incomplete gamma fraction did not converge")


def _upper_gamma_small_x(a: float, x: float, acc: AccuracyTarget) -> float:
    """Gamma(a, x) for 0 < x <= 1.5 and arbitrary real a."""
    if a > 0:
        lower = _lower_gamma_series_scaled(a, x, acc) * math.exp(a * math.log(x) - x)
        return math.gamma(a) - lower
    if a == 0:
        # E1(x) = -euler - ln x - sum (-x)^n / (n n!)
        total = 0.0
        term = 1.0
        for n in range(1, acc.max_iterations):
            term *= -x / n
            total += term / n
            if acc.small(term, total):
                break
        return -0.5772156649015329 - math.log(x) - total
    if a == math.floor(a):
        # recurrence Gamma(a, x) = (Gamma(a+1, x) - x**a exp(-x)) / a from E1
        val = _upper_gamma_small_x(0.0, x, acc)
        b = 0.0
        while b > a:
            b -= 1.0
            val = (val - math.exp(b * math.log(x) - x)) / b
        return val
    # non-integer a < 0: Gamma(a) - sum (-1)^n x^(a+n) / (n! (a+n))
    terms = []
    term = 1.0
    for n in range(acc.max_iterations):
        if n:
            term *= -x / n
        t = term / (a + n)
        terms.append(t)
        if n > -a and acc.small(t, math.fsum(terms)):
            break
    return math.gamma(a) - math.exp(a * math.log(x)) * math.fsum(terms)


def gamma_upper_scaled(a: float, x: float, acc: AccuracyTarget = DEFAULT_ACCURACY) -> float:
    """``exp(x) * x**(-a) * Gamma(a, x)`` for ``x > 0``."""
    if x <= 0:
        raise DomainError("scaled upper gamma needs x > 0")
    if x > 1.5 or (a > 0 and x > a + 1.0):
        return _upper_gamma_cf_scaled(a, x, acc)
    return _upper_gamma_small_x(a, x, acc) * math.exp(x - a * math.log(x))


def gamma_upper(a: float, x: float, acc: AccuracyTarget = DEFAULT_ACCURACY) -> float:
    """Upper incomplete Gamma function ``Gamma(a, x)``."""
    if x < 0:
        raise DomainError("upper incomplete gamma needs x >= 0")
    if x == 0:
        if a <= 0:
            raise DomainError("Gamma(a, 0) diverges for a <= 0")
        return math.gamma(a)
    if x > 1.5 or (a > 0 and x > a + 1.0):
        log_scale = a * math.log(x) - x
        return _upper_gamma_cf_scaled(a, x, acc) * math.exp(log_scale)
    return _upper_gamma_small_x(a, x, acc)


# --------------------------------------------------------------------------
# Modified Bessel functions


def _log_abs_gamma_sign(x: float) -> tuple[float, float]:
    if _is_nonpositive_int(x):
        return -math.inf, 0.0
    sign = 1.0
    if x < 0 and math.floor(x) % 2 == 1:
        sign = -1.0
    return math.lgamma(x), sign


def bessel_iv_scaled(v: float, x: float, acc: AccuracyTarget = DEFAULT_ACCURACY) -> float:
    """``exp(-x) * I_v(x)`` from the ascending series."""
    if x < 0:
        raise DomainError("bessel_iv needs x >= 0")
    if v < 0 and v == math.floor(v):
        v = -v
    if x == 0:
        if v == 0:
            return 1.0
        if v > 0:
            return 0.0
        if v > -1:
            return math.inf
        raise DomainError("I_v(0) is infinite for v < 0")
    half = 0.5 * x
    log_half = math.log(half)
    terms: list[float] = []
    logs: list[float] = []
    signs: list[float] = []
    peak = -math.inf
    j = 0
    # terms grow until j ~ x/2 and then decay factorially
    while j < acc.max_iterations:
        lg, sg = _log_abs_gamma_sign(v + j + 1)
        lt = (2 * j + v) * log_half - math.lgamma(j + 1) - lg
        logs.append(lt)
        signs.append(sg)
        peak = max(peak, lt) if sg != 0 else peak
        if j > half and sg != 0 and lt < peak + math.log(acc.rel_tol) - 5:
            break
        j += 1
    else:
        raise SpecialFunctionError("bessel_iv series did not converge")
    terms = [s * math.exp(lt - peak) for lt, s in zip(logs, signs) if s != 0]
    total = math.fsum(terms)
    log_scale = peak - x
    if total == 0:
        return 0.0
    if log_scale + math.log(abs(total)) < -745:
        return 0.0
    return total * math.exp(log_scale)


def bessel_iv(v: float, x: float, acc: AccuracyTarget = DEFAULT_ACCURACY) -> float:
    """Modified Bessel function of the first kind ``I_v(x)``, ``x >= 0``."""
    scaled = bessel_iv_scaled(v, x, acc)
    if scaled == 0 or math.isinf(scaled):
        return scaled
    log_val = math.log(abs(scaled)) + x
    if log_val > 709.7:
        raise OverflowError(f"I_{v}({x}) exceeds the double range")
    return math.copysign(math.exp(log_val), scaled)


def bessel_kv_scaled(v: float, x: float) -> float:
    """``exp(x) * K_v(x)`` by the trapezoid rule on the cosh integral.

    The integrand ``exp(-x (cosh t - 1)) cosh(v t)`` decays doubly
    exponentially, so the trapezoid rule converges geometrically in the step.
    """
    if x <= 0:
        raise DomainError("bessel_kv needs x > 0")
    v = abs(v)
    step = min(0.1, 0.5 / math.sqrt(x))

    def log_integrand(t: np.ndarray) -> np.ndarray:
        vt = v * t
        return -x * np.expm1(t) * 0.5 - x * np.expm1(-t) * 0.5 + vt + np.log1p(np.exp(-2 * vt)) - math.log(2.0)

    # locate where the log-integrand has fallen 45 units below its peak
    t_end = 1.0
    while True:
        grid = np.arange(0.0, t_end + step, step)
        vals = log_integrand(grid)
        top = vals.max()
        if vals[-1] < top - 45 and grid[-1] > grid[int(vals.argmax())]:
            break
        t_end *= 2.0
        if t_end > 1e4:
            raise SpecialFunctionError("bessel_kv integration range did not close")
    weights = np.exp(vals - top)
    weights[0] *= 0.5
    return float(step * weights.sum()) * math.exp(top)


def bessel_kv(v: float, x: float) -> float:
    """Modified Bessel function of the second kind ``K_v(x)``, ``x > 0``."""
    scaled = bessel_kv_scaled(v, x)
    return scaled * math.exp(-x) if x < 745 else math.exp(math.log(scaled) - x)


# --------------------------------------------------------------------------
# Confluent hypergeometric functions


def _kummer_m_log(a: float, b: float, z: float, acc: AccuracyTarget) -> tuple[float, float]:
    """Return ``(sign, log|M(a, b, z)|)``."""
    if _is_nonpositive_int(b) and not (_is_nonpositive_int(a) and a > b):
        raise PoleError(f"1F1 has a pole at b = {b}")
    if a == 0 or z == 0:
        return 1.0, 0.0
    if a == b:
        return 1.0, z
    if a == b + 1:
        f = 1.0 + z / b
        return math.copysign(1.0, f), z + math.log(abs(f)) if f != 0 else -math.inf
    if z < 0 and not _is_nonpositive_int(a):
        s, lg = _kummer_m_log(b - a, b, -z, acc)
        return s, lg + z
    # plain ascending series with a running rescale
    total = 1.0
    term = 1.0
    log_scale = 0.0
    n = 0
    quiet = 0
    while True:
        if _is_nonpositive_int(a) and n >= -a:
            break
        term *= (a + n) / (b + n) * z / (n + 1)
        n += 1
        total += term
        if abs(total) > 1e250 or abs(term) > 1e250:
            total *= 1e-250
            term *= 1e-250
            log_scale += 250 * math.log(10.0)
        past_turn = n > abs(a) + abs(b) and n > z
        if past_turn and acc.small(term, total):
            quiet += 1
            if quiet >= 2:
                break
        else:
            quiet = 0
        if n >= acc.max_iterations:
            raise SpecialFunctionError("1F1 series did not converge")
    if total == 0:
        return 0.0, -math.inf
    return math.copysign(1.0, total), math.log(abs(total)) + log_scale


def kummer_m(a: float, b: float, z: float, acc: AccuracyTarget = DEFAULT_ACCURACY) -> float:
    """Kummer's confluent hypergeometric function ``1F1(a; b; z)``."""
    s, lg = _kummer_m_log(a, b, z, acc)
    if lg > 709.7:
        raise OverflowError("1F1 exceeds the double range")
    return s * math.exp(lg)


def kummer_m_scaled(a: float, b: float, z: float, acc: AccuracyTarget = DEFAULT_ACCURACY) -> float:
    """``exp(-z) * 1F1(a; b; z)``."""
    s, lg = _kummer_m_log(a, b, z, acc)
    return s * math.exp(lg - z)


_LAGUERRE_NODES = 96
# Gauss-Laguerre is used for z >= this value; below it the integrand
# (1 + u/z)**(b-a-1) varies too quickly near the origin.
_LAGUERRE_MIN_Z = 1.0
# Width around integer b where the two-1F1 decomposition loses too many digits
_DECOMPOSITION_GUARD = 1e-3


@lru_cache(maxsize=256)
def _genlaguerre(alpha: float) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = roots_genlaguerre(_LAGUERRE_NODES, alpha)
    return nodes, weights


def _kummer_u_laguerre(a: float, b: float, z: float) -> float:
    # U = z^-a / Gamma(a) * int_0^inf exp(-u) u^(a-1) (1 + u/z)^(b-a-1) du
    nodes, weights = _genlaguerre(float(a - 1.0))
    f = np.exp((b - a - 1.0) * np.log1p(nodes / z))
    return float(weights @ f) * math.exp(-a * math.log(z) - math.lgamma(a))


def _kummer_u_quad(a: float, b: float, z: float) -> float:
    # same integral in the original variable, adaptive quadrature
    def f(t: float) -> float:
        return math.exp(-z * t + (a - 1) * math.log(t) + (b - a - 1) * math.log1p(t)) if t > 0 else 0.0

    # the factor (1 + t) turns over at t = 1 and the exponential at t = 1/z;
    # in between the integrand is a power law, so break once per decade
    scale = 1.0 / z
    decades = np.geomspace(min(1.0, scale), 100 * scale, max(2, int(np.log10(100 * scale / min(1.0, scale))) + 1))
    pieces = [0.0, *sorted(set(decades) | {scale, 10 * scale}), np.inf]
    total = 0.0
    for lo, hi in zip(pieces[:-1], pieces[1:]):
        # the last piece starts deep in the exponential tail; bound it against the total
        val, _ = integrate.quad(f, lo, hi, epsabs=1e-16 * total, epsrel=1e-13, limit=200)
        total += val
    return total * rgamma(a)


def _kummer_u_decomposition(a: float, b: float, z: float, acc: AccuracyTarget) -> float:
    first = 0.0
    c1 = math.gamma(1 - b) * rgamma(a - b + 1)
    if c1 != 0:
        first = c1 * kummer_m(a, b, z, acc)
    second = 0.0
    c2 = math.gamma(b - 1) * rgamma(a)
    if c2 != 0:
        second = c2 * math.exp((1 - b) * math.log(z)) * kummer_m(a - b + 1, 2 - b, z, acc)
    return first + second


def kummer_u(a: float, b: float, z: float, acc: AccuracyTarget = DEFAULT_ACCURACY) -> float:
    """Tricomi's confluent hypergeometric function ``U(a, b, z)``, ``z > 0``.

    For small ``z`` and non-integer ``b`` the two-1F1 decomposition is used.
    Elsewhere, for ``a > 0``, the Laplace-type integral representation is
    evaluated by generalized Gauss-Laguerre quadrature (or adaptive quadrature
    when ``z`` is small and ``b`` sits near an integer).
    """
    if z <= 0:
        raise DomainError("kummer_u needs z > 0")
    if a == 0:
        return 1.0
    if _is_nonpositive_int(a):
        n = int(-a)
        return (-1) ** n * pochhammer(b, n) * kummer_m(a, b, z, acc)
    if a <= 0 and a - b + 1 > 0:
        return math.exp((1 - b) * math.log(z)) * kummer_u(a - b + 1, 2 - b, z, acc)
    if a > 0:
        if z >= max(_LAGUERRE_MIN_Z, 0.3 * abs(b - a - 1.0)):
            return _kummer_u_laguerre(a, b, z)
        if z > 0.5 or is_near_integer(b, _DECOMPOSITION_GUARD):
            return _kummer_u_quad(a, b, z)
        return _kummer_u_decomposition(a, b, z, acc)
    if is_near_integer(b, _DECOMPOSITION_GUARD):
        raise ConditioningError(f"U({a}, {b}, z): b too close to an integer")
    return _kummer_u_decomposition(a, b, z, acc)


# --------------------------------------------------------------------------
# Whittaker functions


def whittaker_m_scaled(lam: float, mu: float, z: float, acc: AccuracyTarget = DEFAULT_ACCURACY) -> float:
    """``exp(-z/2) * M_{lam,mu}(z)``, i.e. ``exp(-z) z**(mu+1/2) 1F1(...)``."""
    if z <= 0:
        raise DomainError("whittaker_m needs z > 0")
    if _is_nonpositive_int(2 * mu) and 2 * mu != 0:
        raise PoleError("whittaker_m undefined for negative integer 2 mu")
    s, lg = _kummer_m_log(mu - lam + 0.5, 1 + 2 * mu, z, acc)
    return s * math.exp(lg - z + (mu + 0.5) * math.log(z))


def whittaker_m(lam: float, mu: float, z: float, acc: AccuracyTarget = DEFAULT_ACCURACY) -> float:
    """Whittaker function ``M_{lam,mu}(z) = exp(-z/2) z^(mu+1/2) 1F1(mu-lam+1/2; 1+2mu; z)``."""
    if z <= 0:
        raise DomainError("whittaker_m needs z > 0")
    if _is_nonpositive_int(2 * mu) and 2 * mu != 0:
        raise PoleError("whittaker_m undefined for negative integer 2 mu")
    s, lg = _kummer_m_log(mu - lam + 0.5, 1 + 2 * mu, z, acc)
    log_val = lg - 0.5 * z + (mu + 0.5) * math.log(z)
    if log_val > 709.7:
        raise OverflowError("whittaker_m exceeds the double range")
    return s * math.exp(log_val)


def whittaker_w_scaled(lam: float, mu: float, z: float, acc: AccuracyTarget = DEFAULT_ACCURACY) -> float:
    """``exp(z/2) * W_{lam,mu}(z) = z^(mu+1/2) U(mu-lam+1/2, 1+2mu, z)``."""
    if z <= 0:
        raise DomainError("whittaker_w needs z > 0")
    return math.exp((mu + 0.5) * math.log(z)) * kummer_u(mu - lam + 0.5, 1 + 2 * mu, z, acc)


def whittaker_w(lam: float, mu: float, z: float, acc: AccuracyTarget = DEFAULT_ACCURACY) -> float:
    """Whittaker function ``W_{lam,mu}(z) = exp(-z/2) z^(mu+1/2) U(mu-lam+1/2, 1+2mu, z)``."""
    return whittaker_w_scaled(lam, mu, z, acc) * math.exp(-0.5 * z)


# --------------------------------------------------------------------------
# Meijer-G instance of the fully-correlated interference CDF


def _corr_cdf_series(L: float, k: float, x: float) -> float:
    # termwise integral of the ascending series of the K-Bessel density
    norm = rgamma(k) * rgamma(L)
    parts = []
    for lead, order, other in ((k, L, k), (L, k, L)):
        # lead = exponent, 'other' - 'order' + 1 is the Pochhammer base
        base = other - order + 1.0
        coef = math.gamma(order - other) * norm
        term = 1.0
        acc_terms = []
        i = 0
        while True:
            acc_terms.append(term / (lead + i))
            if i > x and abs(term) < 1e-18 * abs(math.fsum(acc_terms)):
                break
            term *= x / ((i + 1) * (base + i))
            i += 1
            if i > 5000:
                raise SpecialFunctionError("correlated CDF series did not converge")
        parts.append(coef * math.exp(lead * math.log(x)) * math.fsum(acc_terms))
    return parts[0] + parts[1]


def _corr_tail_bessel(L: int, k: float, x: float) -> float:
    # P(sum > .) for integer L: sum_{j<L} 2 x^((j+k)/2) K_{k-j}(2 sqrt x) / (j! Gamma(k))
    r = 2.0 * math.sqrt(x)
    terms = []
    for j in range(L):
        log_t = 0.5 * (j + k) * math.log(x) - math.lgamma(j + 1) - math.lgamma(k) + math.log(2.0)
        terms.append(math.exp(log_t - r) * bessel_kv_scaled(k - j, r))
    return math.fsum(terms)


def _corr_tail_quad(L: float, k: float, x: float) -> float:
    log_norm = math.log(2.0) - math.lgamma(L) - math.lgamma(k)

    def density(u: float) -> float:
        r = 2.0 * math.sqrt(u)
        return math.exp(log_norm + (0.5 * (L + k) - 1) * math.log(u) - r) * bessel_kv_scaled(L - k, r)

    val, _ = integrate.quad(density, x, np.inf, epsabs=0.0, epsrel=1e-12, limit=400)
    return val


def corr_sum_cdf(L: float, k: float, x: float) -> float:
    """CDF of the fully-correlated interference sum at normalized level ``x = k γ / γ̄``."""
    if x <= 0:
        return 0.0
    if L == math.floor(L) and x >= 1.0:
        return 1.0 - _corr_tail_bessel(int(L), k, x)
    if x <= 16.0:
        return _corr_cdf_series(L, k, x)
    return 1.0 - _corr_tail_quad(L, k, x)


def meijer_g_cdf_instance(L: float, k: float, x: float) -> float:
    """The ``G^{2,1}_{1,3}`` factor of the fully-correlated interference CDF.

    Returns ``G`` such that the CDF equals ``x^((L+k)/2) G / (Gamma(L) Gamma(k))``
    with ``x = k γ / γ̄``. Evaluated by reduction to power series (small ``x``)
    or to Bessel-K sums / tail quadrature (large ``x``).
    """
    if x <= 0:
        raise DomainError("meijer_g_cdf_instance needs x > 0")
    if L < 1 or k <= 0:
        raise DomainError("need L >= 1 and k > 0")
    if is_near_integer(L - k):
        raise ConditioningError("L - k inside the integer guard band")
    cdf = corr_sum_cdf(L, k, x)
    return cdf * math.exp(math.lgamma(L) + math.lgamma(k) - 0.5 * (L + k) * math.log(x))
