import numpy as np
import pytest

from dualpointer.autodiff import default_dtype

ACCEPTANCE_LINES: list[str] = []


def numeric_grad(fn, array, eps=1e-5):
    """Central differences of scalar ``fn()`` w.r.t. every entry of ``array`` (in place)."""
    grad = np.zeros_like(array)
    flat = array.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        plus = float(fn())
        flat[i] = orig - eps
        minus = float(fn())
        flat[i] = orig
        gflat[i] = (plus - minus) / (2 * eps)
    return grad


def max_rel_err(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)))


@pytest.fixture
def f64():
    with default_dtype(np.float64):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def record_acceptance(number: int, title: str, passed: bool, detail: str) -> None:
    line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


@pytest.fixture
def accept(capsys):
    """Print one pass/fail line per criterion, visible even with output capture."""
    def _record(number, title, passed, detail):
        with capsys.disabled():
            print()
            record_acceptance(number, title, passed, detail)
        assert passed, f"criterion {number} failed: {detail}"
    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
