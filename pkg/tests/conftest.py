from __future__ import annotations

import json
import math
from pathlib import Path

import pytest

from kfading import ksum
from kfading.ksum import InterferenceProfile

DATA = Path(__file__).resolve().parent / "data"


def db(x: float) -> float:
    return 10.0 ** (x / 10.0)


@pytest.fixture(scope="session")
def derived() -> dict:
    """Values frozen from the independent oracles in ``tests/oracles``."""
    return json.loads((DATA / "derived_values.json").read_text())


@pytest.fixture(scope="session")
def decay_profile() -> InterferenceProfile:
    """Exponentially decaying profile: k_i = 3 - 0.3 i, inr_i = 15 dB * exp(-0.1 (i - 1)), L = 3."""
    return ksum.exponential_decay_profile(3.0, db(15), 3)


def within_mc(value: float, reference: float, std_error: float, sigmas: float = 5.0) -> bool:
    return abs(value - reference) <= sigmas * std_error + 1e-12 * abs(reference)


def rel(a: float, b: float) -> float:
    return abs(a - b) / abs(b)


__all__ = ["db", "within_mc", "rel", "math"]


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance.RESULTS, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
