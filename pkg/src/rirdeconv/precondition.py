"""Spectral-whitening (EQ) preconditioner for the deconvolution problem.

The excitation and recording are resampled, an LPC model is fitted to the
excitation (with a little high-frequency noise mixed in so empty bands do
not produce a huge whitening gain), and the same FIR inverse filter A(z) is
applied to both signals. Filtering both sides with one LTI filter leaves the
RIR relating them unchanged but makes the convolution matrix far better
conditioned.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft
from scipy import signal as sps

from .core_io import Signal, derive_seed, make_rng, resample

__all__ = [
    "LpcModel",
    "LevinsonError",
    "PreconditionConfig",
    "levinson_durbin",
    "biased_autocorrelation",
    "fit_lpc",
    "apply_inverse_filter",
    "hf_noise",
    "whiten_pair",
]


class LevinsonError(ValueError):
    def __init__(self, message: str, order: int | None = None):
        super().__init__(message)
        self.order = order


@dataclass(frozen=True)
class LpcModel:
    """Forward predictor ``x[n] ~ sum_k a[k] x[n-k]``; ``A(z) = 1 - sum_k a[k] z^-k``."""

    order: int
    coefficients: np.ndarray
    gain: float
    autocorrelation_len: int
    reflection: np.ndarray | None = None

    @property
    def inverse_filter(self) -> np.ndarray:
        """FIR taps of A(z), length ``order + 1``."""
        return np.concatenate([[1.0], -np.asarray(self.coefficients)])


@dataclass(frozen=True)
class PreconditionConfig:
    target_rate_hz: int = 32000
    lpc_order: int = 200
    hf_noise_level_db: float = -50.0
    hf_noise_cutoff_hz: float = 14000.0
    seed: int = 0
    # Never upsample: a band with no content would only be filled with noise.
    allow_upsampling: bool = False
    # Mix the injected noise into the returned signals too, not only into the LPC fit.
    noise_in_outputs: bool = False

    def __post_init__(self):
        if self.target_rate_hz <= 0:
            raise ValueError("target_rate_hz must be positive")
        if self.lpc_order < 1:
            raise ValueError("lpc_order must be >= 1")

    def working_rate(self, source_rate_hz: int) -> int:
        if self.allow_upsampling or source_rate_hz > self.target_rate_hz:
            return self.target_rate_hz
        return source_rate_hz


def levinson_durbin(autocorr, order: int) -> LpcModel:
    """Solve the Toeplitz normal equations of forward linear prediction.

    Raises :class:`LevinsonError` if ``r[0] <= 0`` or a reflection coefficient
    reaches magnitude 1 (the autocorrelation is numerically singular).
    """
    r = np.asarray(autocorr, dtype=np.float64)
    order = int(order)
    if order < 1:
        raise LevinsonError("order must be >= 1")
    if r.size < order + 1:
        raise LevinsonError(f"need {order + 1} autocorrelation lags, got {r.size}")
    if not r[0] > 0:
        raise LevinsonError("r[0] must be positive", order=0)

    a = np.zeros(0)
    refl = np.zeros(order)
    err = r[0]
    for i in range(1, order + 1):
        acc = r[i] - np.dot(a, r[i - 1:0:-1])
        k = acc / err
        if not abs(k) < 1:
            raise LevinsonError(
                f"reflection coefficient |k| = {abs(k):.6g} >= 1 at order {i}", order=i
            )
        a = np.concatenate([a - k * a[::-1], [k]])
        refl[i - 1] = k
        err *= 1.0 - k * k
    return LpcModel(order, a, float(err), r.size, refl)


def biased_autocorrelation(x, max_lag: int) -> np.ndarray:
    """``r[k] = sum_n x[n] x[n+k] / len(x)`` for ``k = 0..max_lag`` (positive semidefinite)."""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    nfft = sfft.next_fast_len(n + max_lag + 1, real=True)
    X = sfft.rfft(x, nfft)
    r = sfft.irfft(X * np.conj(X), nfft)[: max_lag + 1] / n
    if max_lag + 1 > r.size:
        r = np.concatenate([r, np.zeros(max_lag + 1 - r.size)])
    return r


def fit_lpc(x, order: int) -> LpcModel:
    return levinson_durbin(biased_autocorrelation(x, order), order)


def apply_inverse_filter(samples, model: LpcModel) -> np.ndarray:
    """Filter with A(z); the output is truncated to the input length."""
    return sps.lfilter(model.inverse_filter, [1.0], np.asarray(samples, dtype=np.float64))


def hf_noise(n: int, rate: int, cutoff_hz: float, rms: float, seed: int) -> np.ndarray:
    """Seeded white noise, 4th-order Butterworth high-passed, scaled to ``rms``."""
    if n == 0 or rms == 0:
        return np.zeros(n)
    cutoff = min(cutoff_hz, 0.9 * rate / 2)
    noise = make_rng(seed).standard_normal(n)
    sos = sps.butter(4, cutoff, btype="highpass", fs=rate, output="sos")
    noise = sps.sosfilt(sos, noise)
    return noise * (rms / np.sqrt(np.mean(noise**2)))


def _rms(v) -> float:
    return float(np.sqrt(np.mean(np.square(v)))) if len(v) else 0.0


def whiten_pair(x: Signal, y: Signal, config: PreconditionConfig = PreconditionConfig()):
    """Resample and whiten an excitation/recording pair with one shared LPC inverse filter.

    Returns ``(x_eq, y_eq, model)``. The LPC model is always fitted to the
    excitation only.
    """
    if x.sample_rate_hz != y.sample_rate_hz:
        raise ValueError(
            f"sample rate mismatch: excitation {x.sample_rate_hz} Hz, recording {y.sample_rate_hz} Hz"
        )
    rate = config.working_rate(x.sample_rate_hz)
    xs = resample(x, rate).samples
    ys = resample(y, rate).samples

    level = 10.0 ** (config.hf_noise_level_db / 20.0)
    x_noisy = xs + hf_noise(xs.size, rate, config.hf_noise_cutoff_hz, level * _rms(xs),
                            derive_seed(config.seed, 0))
    model = fit_lpc(x_noisy, config.lpc_order)

    if config.noise_in_outputs:
        y_noisy = ys + hf_noise(ys.size, rate, config.hf_noise_cutoff_hz, level * _rms(ys),
                                derive_seed(config.seed, 1))
        xs, ys = x_noisy, y_noisy
    x_eq = Signal(apply_inverse_filter(xs, model), rate)
    y_eq = Signal(apply_inverse_filter(ys, model), rate)
    return x_eq, y_eq, model
