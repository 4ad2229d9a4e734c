import numpy as np
import pytest

from aces import gp as gpr


def random_dataset(rng, n, dim=4, noise=1e-6):
    """Smooth random function sampled at ``n`` uniform points of the unit cube."""
    X = rng.uniform(0.0, 1.0, size=(n, dim))
    w = rng.normal(size=dim)
    y = np.sin(3.0 * X @ w) + 0.5 * np.cos(2.0 * X[:, 0])
    spec = gpr.KernelSpec(1.0, rng.uniform(0.2, 0.8, size=dim), noise)
    return X, y, spec


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str):
    ACCEPTANCE_LINES[number] = f"{'PASS' if passed else 'FAIL'} criterion {number:2d}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
