"""Seeded Monte-Carlo simulation of the receiver model.

Draws are produced in fixed-size blocks. Block ``j`` uses the generator
seeded by the ``j``-th child of ``SeedSequence(seed)``, so the same
``(config, seed)`` always yields the same samples regardless of how blocks are
scheduled, and blocks are reduced in index order.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import ksum
from .perf import ModulationSpec, ReceiverConfig

__all__ = [
    "MonteCarloConfig",
    "MonteCarloEstimate",
    "InsufficientSamplesWarning",
    "block_generators",
    "simulate_sinr_samples",
    "iter_sinr_blocks",
    "empirical_cdf",
    "empirical_pdf",
    "empirical_op",
    "empirical_abep",
    "conditional_bep",
]

Z_95 = 1.959963984540054


class InsufficientSamplesWarning(UserWarning):
    """The confidence half-width exceeds the requested tolerance."""


@dataclass(frozen=True)
class MonteCarloConfig:
    """Simulation settings.

    Attributes
    ----------
    scenario : ReceiverConfig
    samples : int
    seed : int
        Root of the seed tree (any 64-bit integer).
    bins : int
        Histogram bins for :func:`empirical_pdf`.
    block_size : int
        Draws per independently seeded block.
    """

    scenario: ReceiverConfig
    samples: int = 1_000_000
    seed: int = 20240601
    bins: int = 100
    block_size: int = 1 << 18

    def __post_init__(self) -> None:
        if self.samples < 1:
            raise ValueError("samples must be at least 1")
        if self.bins < 1 or self.block_size < 1:
            raise ValueError("bins and block_size must be positive")


@dataclass(frozen=True)
class MonteCarloEstimate:
    """Sample mean with its standard error and 95% half-width."""

    value: float
    std_error: float
    samples: int

    @property
    def half_width(self) -> float:
        return Z_95 * self.std_error


def block_generators(seed: int, blocks: int) -> list[np.random.Generator]:
    """One independent generator per block, split from ``SeedSequence(seed)``."""
    children = np.random.SeedSequence(int(seed) & ((1 << 64) - 1)).spawn(blocks)
    return [np.random.default_rng(child) for child in children]


def _draw_block(scenario: ReceiverConfig, rng: np.random.Generator, n: int) -> np.ndarray:
    snrs = np.asarray(scenario.desired.branch_snrs)
    N = snrs.size
    desired = rng.standard_exponential((n, N)) * snrs[None, :]
    noise = 1.0 if scenario.noise == "sinr" else 0.0
    if scenario.rule == "snr" or N == 1:
        interference = ksum.sample_gamma_I(scenario.interference, rng, n)
        return desired.max(axis=1) / (noise + interference)
    # SINR-based selection: every branch has its own interference
    interference = np.column_stack([ksum.sample_gamma_I(scenario.interference, rng, n) for _ in range(N)])
    return (desired / (noise + interference)).max(axis=1)


def iter_sinr_blocks(config: MonteCarloConfig) -> Iterator[np.ndarray]:
    """Output SINR (or SIR) draws, block by block in deterministic order."""
    blocks = math.ceil(config.samples / config.block_size)
    for j, rng in enumerate(block_generators(config.seed, blocks)):
        n = min(config.block_size, config.samples - j * config.block_size)
        yield _draw_block(config.scenario, rng, n)


def simulate_sinr_samples(config: MonteCarloConfig) -> np.ndarray:
    """All ``config.samples`` output draws as one array."""
    return np.concatenate(list(iter_sinr_blocks(config)))


def empirical_cdf(config: MonteCarloConfig, grid) -> np.ndarray:
    """Fraction of draws at or below each grid point."""
    grid = np.asarray(grid, dtype=float)
    counts = np.zeros(grid.size)
    order = np.argsort(grid.ravel())
    sorted_grid = grid.ravel()[order]
    for block in iter_sinr_blocks(config):
        block = np.sort(block)
        counts[order] += np.searchsorted(block, sorted_grid, side="right")
    return (counts / config.samples).reshape(grid.shape)


def empirical_pdf(config: MonteCarloConfig, upper: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Histogram density on ``config.bins`` equal bins over ``[0, upper]``.

    ``upper`` defaults to the 99th percentile of the draws. Returns bin
    centres and densities normalized by the total sample count.
    """
    draws = simulate_sinr_samples(config)
    if upper is None:
        upper = float(np.quantile(draws, 0.99))
    counts, edges = np.histogram(draws, bins=config.bins, range=(0.0, upper))
    width = np.diff(edges)
    return 0.5 * (edges[1:] + edges[:-1]), counts / (config.samples * width)


def empirical_op(config: MonteCarloConfig, gamma_th: float, tolerance: float | None = None) -> MonteCarloEstimate:
    """Empirical outage probability with its binomial standard error.

    Emits :class:`InsufficientSamplesWarning` when the 95% half-width exceeds
    ``tolerance``.
    """
    hits = 0
    for block in iter_sinr_blocks(config):
        hits += int(np.count_nonzero(block <= gamma_th))
    p = hits / config.samples
    est = MonteCarloEstimate(p, math.sqrt(max(p * (1.0 - p), 0.0) / config.samples), config.samples)
    if tolerance is not None and est.half_width > tolerance:
        warnings.warn(
            f"half-width {est.half_width:.3g} exceeds tolerance {tolerance:.3g}; increase samples",
            InsufficientSamplesWarning,
            stacklevel=2,
        )
    return est


_PHI_ORDER = 64


def conditional_bep(gamma: np.ndarray, modulation: ModulationSpec) -> np.ndarray:
    """Bit-error probability given the output SNR.

    ``alpha exp(-beta gamma)`` for the exponential family; for Gray-coded
    M-PSK the angular integral ``(1/(pi log2 M)) int exp(-gamma g / sin^2 phi) dphi``
    with ``g = log2 M sin^2(pi/M)``, by Gauss-Legendre in ``phi``.
    """
    gamma = np.asarray(gamma, dtype=float)
    if modulation.is_exponential:
        return modulation.alpha * np.exp(-modulation.beta * gamma)
    bits = modulation.bits
    g = bits * math.sin(math.pi / modulation.M) ** 2
    upper = math.pi - math.pi / modulation.M
    x, w = np.polynomial.legendre.leggauss(_PHI_ORDER)
    phi = 0.5 * upper * (x + 1.0)
    coef = g / np.sin(phi) ** 2
    vals = np.exp(-np.multiply.outer(gamma, coef)) @ (0.5 * upper * w)
    return vals / (math.pi * bits)


def empirical_abep(config: MonteCarloConfig, modulation: ModulationSpec = ModulationSpec.dbpsk()) -> MonteCarloEstimate:
    """Average of the conditional bit-error probability over the draws.

    Averaging the exact conditional error instead of counting flipped bits
    removes the Bernoulli noise (a Rao-Blackwellized estimator).
    """
    total = 0.0
    total_sq = 0.0
    for block in iter_sinr_blocks(config):
        bep = conditional_bep(block, modulation)
        total += float(bep.sum())
        total_sq += float((bep * bep).sum())
    n = config.samples
    mean = total / n
    var = max(total_sq / n - mean * mean, 0.0) * n / max(n - 1, 1)
    return MonteCarloEstimate(mean, math.sqrt(var / n), n)
