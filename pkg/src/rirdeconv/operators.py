"""Matrix-free convolution, STFT and weighted time-frequency operators.

All operators act on real vectors. The STFT keeps the full two-sided
spectrum of every zero-padded, non-overlapping boxcar frame and is scaled to
be an isometry, so its adjoint is also its left inverse.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

__all__ = [
    "StftConfig",
    "Spectrogram",
    "ConvOperator",
    "WeightedTfOperator",
    "fft_convolve",
    "fft_convolve_adjoint",
    "stft_forward",
    "stft_adjoint",
    "weighted_forward",
    "weighted_adjoint",
    "n_frames",
]


@dataclass(frozen=True)
class StftConfig:
    n_dft: int = 256

    def __post_init__(self):
        if int(self.n_dft) != self.n_dft or self.n_dft < 1:
            raise ValueError(f"n_dft must be a positive integer, got {self.n_dft!r}")

    @property
    def fft_len(self) -> int:
        return 2 * self.n_dft

    @property
    def scale(self) -> float:
        return 1.0 / np.sqrt(self.fft_len)


def n_frames(length: int, config: StftConfig) -> int:
    return -(-int(length) // config.n_dft)


@dataclass(frozen=True)
class Spectrogram:
    """Complex ``frames x fft_len`` matrix from :func:`stft_forward`."""

    bins: np.ndarray
    config: StftConfig
    source_len: int

    def __post_init__(self):
        expected = (n_frames(self.source_len, self.config), self.config.fft_len)
        if self.bins.shape != expected:
            raise ValueError(f"spectrogram shape {self.bins.shape} != expected {expected}")

    @property
    def n_frames(self) -> int:
        return self.bins.shape[0]


def _as_1d(a, name):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    return a


# ---------------------------------------------------------------------------
# convolution


class ConvOperator:
    """Convolution with a fixed excitation ``x`` mapping length-N filters to length-M outputs.

    ``M = L + N - 1`` unless a longer ``out_len`` is requested (the extra
    samples are zeros of the linear convolution). Spectra are precomputed once
    at the FFT length ``fft_size >= M``; the adjoint is the cross-correlation
    with ``x``, evaluated with the conjugate excitation spectrum.
    """

    def __init__(self, x, rir_len: int, out_len: int | None = None):
        x = _as_1d(x, "x")
        if x.size == 0:
            raise ValueError("excitation must be non-empty")
        if rir_len < 1:
            raise ValueError("rir_len must be >= 1")
        self.L = x.size
        self.N = int(rir_len)
        full = self.L + self.N - 1
        self.M = full if out_len is None else max(int(out_len), full)
        self.fft_size = sfft.next_fast_len(self.M, real=True)
        self.excitation_spectrum = sfft.rfft(x, self.fft_size)
        self._spectrum_conj = np.conj(self.excitation_spectrum)
        self.excitation_spectrum.flags.writeable = False
        self._spectrum_conj.flags.writeable = False

    @property
    def shape(self):
        return (self.M, self.N)

    def forward(self, h) -> np.ndarray:
        h = _as_1d(h, "h")
        if h.size != self.N:
            raise ValueError(f"expected filter of length {self.N}, got {h.size}")
        H = sfft.rfft(h, self.fft_size)
        return sfft.irfft(self.excitation_spectrum * H, self.fft_size)[: self.M]

    def adjoint(self, y) -> np.ndarray:
        y = _as_1d(y, "y")
        if y.size != self.M:
            raise ValueError(f"expected vector of length {self.M}, got {y.size}")
        Y = sfft.rfft(y, self.fft_size)
        return sfft.irfft(self._spectrum_conj * Y, self.fft_size)[: self.N]


def fft_convolve(x, h, out_len: int) -> np.ndarray:
    """First ``out_len`` samples of the linear convolution ``x * h``."""
    x = _as_1d(x, "x")
    h = _as_1d(h, "h")
    full = x.size + h.size - 1
    if out_len > full or out_len < 0:
        raise ValueError(f"out_len {out_len} exceeds full convolution length {full}")
    n = sfft.next_fast_len(full, real=True)
    return sfft.irfft(sfft.rfft(x, n) * sfft.rfft(h, n), n)[:out_len]


def fft_convolve_adjoint(x, y, out_len: int) -> np.ndarray:
    """Transpose of the length-``len(y)`` convolution by ``x`` applied to ``y``.

    ``y`` must have length ``len(x) + out_len - 1``.
    """
    x = _as_1d(x, "x")
    y = _as_1d(y, "y")
    if y.size != x.size + out_len - 1:
        raise ValueError(
            f"len(y) = {y.size} but len(x) + out_len - 1 = {x.size + out_len - 1}"
        )
    return ConvOperator(x, out_len).adjoint(y)


# ---------------------------------------------------------------------------
# STFT


def stft_forward(samples, config: StftConfig) -> Spectrogram:
    """Isometric no-overlap STFT with boxcar frames zero-padded to ``2 * n_dft``."""
    s = _as_1d(samples, "samples")
    frames = n_frames(s.size, config)
    padded = np.zeros(frames * config.n_dft)
    padded[: s.size] = s
    bins = sfft.fft(padded.reshape(frames, config.n_dft), n=config.fft_len, axis=1)
    bins *= config.scale
    return Spectrogram(bins, config, s.size)


def _stft_adjoint_bins(bins: np.ndarray, config: StftConfig) -> np.ndarray:
    # Real part of S^H Z, length frames * n_dft.
    frames = bins.shape[0]
    rec = sfft.ifft(bins, axis=1)[:, : config.n_dft].real
    rec = rec * (config.fft_len * config.scale)
    return rec.reshape(frames * config.n_dft)


def stft_adjoint(spec: Spectrogram) -> np.ndarray:
    """Adjoint (and left inverse) of :func:`stft_forward`; returns ``frames * n_dft`` samples."""
    if spec.bins.ndim != 2 or spec.bins.shape[1] != spec.config.fft_len:
        raise ValueError("spectrogram shape inconsistent with its config")
    return _stft_adjoint_bins(spec.bins, spec.config)


# ---------------------------------------------------------------------------
# composed weighted operator


@dataclass
class WeightedTfOperator:
    """``A h = stack(Re, Im)(w * S X h)`` as a real ``m x N`` operator.

    ``m = 2 * frames * fft_len``. ``weights`` has shape ``frames x fft_len``.
    """

    conv: ConvOperator
    stft: StftConfig
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        self.frames = n_frames(self.conv.M, self.stft)
        shape = (self.frames, self.stft.fft_len)
        if self.weights is None:
            self.weights = np.ones(shape)
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != shape:
            raise ValueError(f"weights shape {w.shape} != {shape}")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("weights must be finite and nonnegative")
        self.weights = w

    @property
    def shape(self):
        return (2 * self.frames * self.stft.fft_len, self.conv.N)

    def spectrum_of(self, time_signal) -> np.ndarray:
        """Unweighted bins ``S v`` for a length-M (or shorter) time signal."""
        v = _as_1d(time_signal, "signal")
        padded = np.zeros(self.frames * self.stft.n_dft)
        padded[: v.size] = v
        bins = sfft.fft(padded.reshape(self.frames, self.stft.n_dft), n=self.stft.fft_len, axis=1)
        bins *= self.stft.scale
        return bins

    def stack(self, bins: np.ndarray) -> np.ndarray:
        return np.concatenate([bins.real.ravel(), bins.imag.ravel()])

    def unstack(self, u) -> np.ndarray:
        u = _as_1d(u, "u")
        if u.size != self.shape[0]:
            raise ValueError(f"expected vector of length {self.shape[0]}, got {u.size}")
        half = u.size // 2
        shape = (self.frames, self.stft.fft_len)
        return u[:half].reshape(shape) + 1j * u[half:].reshape(shape)

    def unweighted_bins(self, h) -> np.ndarray:
        return self.spectrum_of(self.conv.forward(h))

    def matvec(self, h) -> np.ndarray:
        return self.stack(self.weights * self.unweighted_bins(h))

    def rmatvec(self, u) -> np.ndarray:
        bins = self.weights * self.unstack(u)
        g = _stft_adjoint_bins(bins, self.stft)[: self.conv.M]
        return self.conv.adjoint(g)


def weighted_forward(op: WeightedTfOperator, h) -> np.ndarray:
    return op.matvec(h)


def weighted_adjoint(op: WeightedTfOperator, u) -> np.ndarray:
    return op.rmatvec(u)
