from __future__ import annotations

import numpy as np
import pytest


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


def random_basis(rng: np.random.Generator, n: int, K: int, cond: float = 4.0) -> np.ndarray:
    """``n x K`` matrix whose Gram matrix has condition number ``cond``."""
    Q, _ = np.linalg.qr(rng.standard_normal((n, K)))
    W, _ = np.linalg.qr(rng.standard_normal((K, K)))
    sv = np.sqrt(np.geomspace(cond, 1.0, K)) if K > 1 else np.ones(1)
    return (Q * sv) @ W.T


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
