"""Vectorized Gauss-Legendre panel quadrature helpers."""
from __future__ import annotations

import math
from functools import lru_cache
from typing import Callable

import numpy as np

__all__ = ["panel_nodes", "integrate_panels", "integrate_log", "log_panel_nodes"]

VectorFunction = Callable[[np.ndarray], np.ndarray]


@lru_cache(maxsize=32)
def _legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(order)


def panel_nodes(a: float, b: float, panels: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of a composite Gauss-Legendre rule on ``[a, b]``."""
    x, w = _legendre(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def integrate_panels(f: VectorFunction, a: float, b: float, panels: int = 16, order: int = 20) -> tuple[float, float]:
    """Integral of ``f`` over ``[a, b]`` and a doubling-based error estimate."""
    x1, w1 = panel_nodes(a, b, panels, order)
    x2, w2 = panel_nodes(a, b, 2 * panels, order)
    v1 = float(w1 @ f(x1))
    v2 = float(w2 @ f(x2))
    return v2, abs(v2 - v1)


def log_panel_nodes(lo: float, hi: float, panels: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights for ``int_lo^hi g(x) dx`` in the variable ``t = log x``.

    The weights already contain the Jacobian ``x``.
    """
    t, w = panel_nodes(math.log(lo), math.log(hi), panels, order)
    x = np.exp(t)
    return x, w * x


def integrate_log(f: VectorFunction, lo: float, hi: float, panels: int = 24, order: int = 20) -> tuple[float, float]:
    """``int_lo^hi f(x) dx`` over a log-spaced composite rule, with a doubling error estimate."""
    x1, w1 = log_panel_nodes(lo, hi, panels, order)
    x2, w2 = log_panel_nodes(lo, hi, 2 * panels, order)
    v1 = float(w1 @ f(x1))
    v2 = float(w2 @ f(x2))
    return v2, abs(v2 - v1)
