import numpy as np
import pytest

from spikecast.features import Dataset
from spikecast.syngen import GenConfig, generate

ACCEPTANCE: dict[int, str] = {}


def make_ds(X, y, names=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    names = names or [f"f{j}" for j in range(X.shape[1])]
    return Dataset(np.arange(len(y)), X, np.asarray(y, dtype=float), names)


@pytest.fixture(scope="session")
def two_day():
    return generate(GenConfig(days=2, seed=3))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
