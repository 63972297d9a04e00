import numpy as np
import pytest

from rirdeconv.core_io import Signal
from rirdeconv.operators import ConvOperator, StftConfig, WeightedTfOperator, fft_convolve


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_operator(rng, L=512, N=64, n_dft=16, weights=True):
    """Small random weighted TF operator plus its excitation."""
    x = rng.standard_normal(L)
    op = WeightedTfOperator(ConvOperator(x, N), StftConfig(n_dft))
    if weights:
        op.weights = rng.uniform(0.1, 1.0, (op.frames, op.stft.fft_len))
    return op, x


def dense_matrix(op):
    """Columns ``op.matvec(e_j)``; the composed operator as a dense array."""
    n = op.conv.N
    return np.stack([op.matvec(e) for e in np.eye(n)], axis=1)


def noise_free_pair(rng, L=4000, N=128, rate=16000):
    x = rng.standard_normal(L)
    h = rng.standard_normal(N) * np.exp(-np.arange(N) / (N / 4))
    y = fft_convolve(x, h, L + N - 1)
    return Signal(x, rate), Signal(y, rate), h


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
