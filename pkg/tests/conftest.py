import numpy as np
import pytest

from gcreg import nn
from gcreg.tensor import Rng


@pytest.fixture
def rng():
    return Rng(1234)


@pytest.fixture
def small_net():
    """3-input, two hidden layers of 5 and 4 units, 3 classes, no dropout."""
    arch = nn.Architecture(3, (5, 4), 3, dropout=0.0)
    return nn.init_params(arch, Rng(7))


@pytest.fixture
def toy_batch():
    g = np.random.default_rng(0)
    x = g.normal(size=(6, 3))
    y = np.array([0, 1, 2, 0, 1, 2])
    return x, y


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line for the acceptance summary, then assert."""
    def record(number: int, title: str, ok: bool, detail: str):
        line = f"criterion {number:2d} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
