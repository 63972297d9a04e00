"""Reference estimators: plain l2 in the time-frequency domain and spectral division."""

from __future__ import annotations

import numpy as np
import scipy.fft as sfft

from .core_io import Signal
from .irls import build_problem, solve_weighted
from .lsmr import LsmrOptions
from .operators import StftConfig

__all__ = ["l2_estimate", "freq_deconv"]


def l2_estimate(
    x: Signal,
    y: Signal,
    rir_len: int,
    stft: StftConfig = StftConfig(),
    lsmr_opts: LsmrOptions = LsmrOptions(),
) -> np.ndarray:
    """Least-squares RIR, ``argmin ||S y - S X h||_2``: one unit-weight LSMR solve."""
    op, target = build_problem(x, y, rir_len, stft)
    return solve_weighted(op, target, np.ones(target.shape), lsmr_opts).solution


def freq_deconv(x: Signal, y: Signal, rir_len: int, eps: float = 1e-8) -> np.ndarray:
    """Regularized spectral division ``Y X* / (|X|^2 + eps max|X|^2)``, truncated to ``rir_len``."""
    if x.sample_rate_hz != y.sample_rate_hz:
        raise ValueError(
            f"sample rate mismatch: excitation {x.sample_rate_hz} Hz, recording {y.sample_rate_hz} Hz"
        )
    if not np.any(x.samples):
        raise ValueError("excitation is all zeros")
    rir_len = int(rir_len)
    if rir_len < 1:
        raise ValueError("rir_len must be >= 1")
    n = sfft.next_fast_len(max(len(x) + rir_len - 1, len(y)), real=True)
    X = sfft.rfft(x.samples, n)
    Y = sfft.rfft(y.samples, n)
    power = np.abs(X) ** 2
    H = Y * np.conj(X) / (power + eps * power.max())
    return sfft.irfft(H, n)[:rir_len]
