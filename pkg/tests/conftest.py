from pathlib import Path

import numpy as np
import pytest

from bilex.embeddings import EmbeddingTable
from bilex.lexicon import BilingualDictionary

ROOT = Path(__file__).resolve().parent.parent
MINI_CONFIG = ROOT / "configs" / "mini.yaml"

_acceptance_lines: list[str] = []


def random_orthogonal(d: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def rotated_pair(n: int, d: int, sigma: float, rng: np.random.Generator, unit: bool = True):
    """Source table X, target table Z = XQ + sigma * noise, identity dictionary s_i -> t_i."""
    X = rng.standard_normal((n, d))
    if unit:
        X /= np.linalg.norm(X, axis=1, keepdims=True)
    Q = random_orthogonal(d, rng)
    Z = X @ Q + sigma * rng.standard_normal((n, d))
    src = EmbeddingTable(tuple(f"s{i}" for i in range(n)), X)
    tgt = EmbeddingTable(tuple(f"t{i}" for i in range(n)), Z)
    dictionary = BilingualDictionary(tuple((f"s{i}", f"t{i}") for i in range(n)))
    return src, tgt, dictionary, Q


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion for the terminal summary."""
    def record(criterion: str, passed: bool, detail: str = "") -> bool:
        _acceptance_lines.append(f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}")
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)
