import numpy as np
import pytest

from lrffs.core import Shard


def random_shard(rng, n, p, R, client_id="c0", ties=False, min_classes=1):
    """Random shard; ``ties`` draws features from a small integer grid."""
    while True:
        y = rng.integers(0, R, size=n)
        if len(np.unique(y)) >= min_classes:
            break
    if ties:
        X = rng.integers(0, 4, size=(n, p)).astype(float)
    else:
        X = rng.normal(size=(n, p))
    return Shard(X, y, client_id, R)


def random_federation(rng, m, p, R, n_low=2, n_high=60, ties=False):
    return [
        random_shard(rng, int(rng.integers(n_low, n_high + 1)), p, R, f"c{i}", ties)
        for i in range(m)
    ]


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
