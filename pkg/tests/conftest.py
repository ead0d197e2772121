import numpy as np
import pytest

from voldens.kernels import wand_kernel
from voldens.models import log_ar1


@pytest.fixture(scope="session")
def wand():
    return wand_kernel()


@pytest.fixture
def ar1_model():
    """Latent log-AR(1) used throughout: a = 0.6, tau = 0.8, stationary sd 1."""
    return log_ar1(0.0, 0.6, 0.8, seed=123)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, passed: bool, text: str) -> str:
    """Store and print one acceptance line; returned for use in assertion messages."""
    line = f"{'PASS' if passed else 'FAIL'} criterion {number:>2}: {text}"
    ACCEPTANCE_LINES.append(line)
    print(line, flush=True)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
