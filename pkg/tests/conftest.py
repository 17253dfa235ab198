import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from onlinecov.core import Transcript  # noqa: E402


def fuzzed_stream(rng, T, k=None, weighted=True):
    """Random groups (binary or real-valued) and scores in [0, 1]."""
    k = int(rng.integers(1, 21)) if k is None else k
    if weighted:
        G = rng.uniform(size=(T, k)) * (rng.uniform(size=(T, k)) < 0.6)
    else:
        G = (rng.uniform(size=(T, k)) < rng.uniform(0.05, 0.9, size=k)).astype(float)
    shape = rng.integers(3)
    if shape == 0:
        tau = rng.uniform(size=T)
    elif shape == 1:
        tau = rng.beta(rng.uniform(0.3, 5), rng.uniform(0.3, 5), size=T)
    else:
        tau = np.clip(np.sin(np.arange(T) / rng.uniform(5, 500)) * 0.5 + 0.5
                      + rng.normal(0, 0.05, T), 0, 1)
    return G, tau


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_transcript():
    g = np.array([[1, 0], [1, 1], [0, 1], [1, 1]], dtype=float)
    tau = np.array([0.2, 0.7, 0.5, 0.9])
    tau_hat = np.array([0.3, 0.6, 0.5, 0.95])
    return Transcript(g, tau, tau_hat, 0.9, ("a", "b"))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(results):
        ok, title, detail = results[num]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  [{num:>2}] {title}  {detail}")
    passed = sum(ok for ok, _, _ in results.values())
    terminalreporter.write_line(f"{passed}/{len(results)} criteria pass")
