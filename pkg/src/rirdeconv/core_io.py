"""Time-domain signals, WAV / raw-float I/O, resampling and seeded RNGs."""

from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import signal as sps
from scipy.io import wavfile

__all__ = [
    "Signal",
    "WavError",
    "MissingFileError",
    "UnsupportedEncodingError",
    "MalformedHeaderError",
    "make_rng",
    "derive_seed",
    "read_wav",
    "write_wav",
    "read_raw",
    "write_raw",
    "read_signal",
    "resample",
    "RESAMPLE_TAPS_PER_PHASE",
    "RESAMPLE_KAISER_BETA",
]

RESAMPLE_TAPS_PER_PHASE = 64
RESAMPLE_KAISER_BETA = 8.6

_FORMAT_PCM = 0x0001
_FORMAT_FLOAT = 0x0003
_FORMAT_EXTENSIBLE = 0xFFFE


@dataclass(frozen=True)
class Signal:
    """A real-valued sampled waveform.

    ``samples`` is stored as a read-only float64 array so instances can be
    shared freely between threads.
    """

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64, copy=True).reshape(-1)
        if not np.all(np.isfinite(samples)):
            raise ValueError("signal samples must be finite")
        rate = int(self.sample_rate_hz)
        if rate != self.sample_rate_hz or rate <= 0:
            raise ValueError(f"sample rate must be a positive integer, got {self.sample_rate_hz!r}")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate_hz", rate)

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz

    def __eq__(self, other):
        if not isinstance(other, Signal):
            return NotImplemented
        return self.sample_rate_hz == other.sample_rate_hz and np.array_equal(
            self.samples, other.samples
        )

    __hash__ = None


# ---------------------------------------------------------------------------
# random numbers


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator; the stream is identical for equal seeds on every platform."""
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))


def derive_seed(seed: int, *keys: int) -> int:
    """Derive an independent 64-bit child seed from ``seed`` and integer keys."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *[int(k) for k in keys]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


# ---------------------------------------------------------------------------
# WAV


class WavError(Exception):
    """Base class for audio file errors."""


class MissingFileError(WavError, FileNotFoundError):
    pass


class UnsupportedEncodingError(WavError):
    pass


class MalformedHeaderError(WavError):
    pass


def _parse_riff(blob: bytes, path) -> tuple[dict, bytes]:
    if len(blob) < 12 or blob[:4] != b"RIFF" or blob[8:12] != b"WAVE":
        raise MalformedHeaderError(f"{path}: not a RIFF/WAVE file")
    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(blob):
        cid = blob[pos:pos + 4]
        (size,) = struct.unpack("<I", blob[pos + 4:pos + 8])
        body = blob[pos + 8:pos + 8 + size]
        if cid == b"fmt ":
            if size < 16:
                raise MalformedHeaderError(f"{path}: fmt chunk too short ({size} bytes)")
            tag, channels, rate, _, block_align, bits = struct.unpack("<HHIIHH", body[:16])
            if tag == _FORMAT_EXTENSIBLE:
                if size < 40:
                    raise MalformedHeaderError(f"{path}: truncated WAVE_FORMAT_EXTENSIBLE header")
                (tag,) = struct.unpack("<H", body[24:26])
            fmt = dict(tag=tag, channels=channels, rate=rate, block_align=block_align, bits=bits)
        elif cid == b"data":
            if len(body) < size:
                raise MalformedHeaderError(f"{path}: data chunk truncated")
            data = body
        pos += 8 + size + (size & 1)
    if fmt is None:
        raise MalformedHeaderError(f"{path}: missing fmt chunk")
    if data is None:
        raise MalformedHeaderError(f"{path}: missing data chunk")
    if fmt["channels"] < 1 or fmt["rate"] < 1:
        raise MalformedHeaderError(f"{path}: invalid channel count or sample rate")
    return fmt, data


def read_wav(path, channel: int = 0) -> Signal:
    """Read one channel of a WAV file.

    Supports 16/24-bit integer PCM (scaled by ``2**(bits - 1)``) and 32-bit
    IEEE float. Multichannel files are not mixed down; ``channel`` selects one.
    """
    path = Path(path)
    try:
        blob = path.read_bytes()
    except FileNotFoundError:
        raise MissingFileError(f"{path}: no such file") from None

    fmt, data = _parse_riff(blob, path)
    tag, bits, nch = fmt["tag"], fmt["bits"], fmt["channels"]
    if tag == _FORMAT_PCM and bits in (16, 24):
        width = bits // 8
        n = len(data) // (width * nch)
        raw = np.frombuffer(data[: n * width * nch], dtype=np.uint8).reshape(-1, width)
        if bits == 16:
            ints = raw.copy().view("<i2").reshape(-1).astype(np.int32)
        else:
            padded = np.zeros((raw.shape[0], 4), dtype=np.uint8)
            padded[:, 1:] = raw
            ints = padded.view("<i4").reshape(-1) >> 8
        frames = ints.reshape(n, nch).astype(np.float64) / float(2 ** (bits - 1))
    elif tag == _FORMAT_FLOAT and bits == 32:
        n = len(data) // (4 * nch)
        frames = np.frombuffer(data[: n * 4 * nch], dtype="<f4").reshape(n, nch).astype(np.float64)
    else:
        raise UnsupportedEncodingError(
            f"{path}: unsupported encoding (format tag {tag:#06x}, {bits} bits); "
            "expected 16/24-bit PCM or 32-bit float"
        )
    if not 0 <= channel < nch:
        raise ValueError(f"{path}: channel {channel} out of range for {nch}-channel file")
    return Signal(frames[:, channel], fmt["rate"])


def _atomic_write(path: Path, writer) -> None:
    path = Path(path)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    try:
        writer(tmp)
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def write_wav(signal: Signal, path) -> None:
    """Write ``signal`` as a mono 32-bit float WAV (lossless for float32 data)."""
    data = np.asarray(signal.samples, dtype=np.float32)
    _atomic_write(Path(path), lambda p: wavfile.write(p, signal.sample_rate_hz, data))


# ---------------------------------------------------------------------------
# raw float32 + JSON sidecar


def _sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".json")


def write_raw(signal: Signal, path) -> None:
    """Write little-endian float32 samples plus a ``<path>.json`` sidecar."""
    path = Path(path)
    data = np.asarray(signal.samples, dtype="<f4")
    _atomic_write(path, lambda p: p.write_bytes(data.tobytes()))
    meta = {"sample_rate_hz": signal.sample_rate_hz, "length": int(data.size)}
    _atomic_write(_sidecar(path), lambda p: p.write_text(json.dumps(meta)))


def read_raw(path) -> Signal:
    path = Path(path)
    side = _sidecar(path)
    if not path.exists():
        raise MissingFileError(f"{path}: no such file")
    if not side.exists():
        raise MissingFileError(f"{side}: missing JSON sidecar for raw float32 file")
    try:
        meta = json.loads(side.read_text())
        rate = int(meta["sample_rate_hz"])
        length = int(meta["length"])
    except (ValueError, KeyError, TypeError) as exc:
        raise MalformedHeaderError(f"{side}: bad sidecar ({exc})") from None
    blob = path.read_bytes()
    if len(blob) != 4 * length:
        raise MalformedHeaderError(
            f"{path}: sidecar declares {length} samples but file holds {len(blob) / 4:g}"
        )
    return Signal(np.frombuffer(blob, dtype="<f4").astype(np.float64), rate)


def read_signal(path, channel: int = 0) -> Signal:
    """Read a WAV file, or a raw float32 file when a JSON sidecar is present."""
    path = Path(path)
    if path.suffix.lower() in (".raw", ".f32", ".bin") or (
        _sidecar(path).exists() and path.suffix.lower() != ".wav"
    ):
        return read_raw(path)
    return read_wav(path, channel=channel)


# ---------------------------------------------------------------------------
# resampling


def _resample_filter(up: int, down: int, cutoff_frac: float) -> np.ndarray:
    # Designed at the intermediate rate up * fs_in; cutoff is relative to its Nyquist.
    phases = max(up, down)
    numtaps = RESAMPLE_TAPS_PER_PHASE * phases + 1
    return sps.firwin(numtaps, cutoff_frac, window=("kaiser", RESAMPLE_KAISER_BETA))


def resample(signal: Signal, target_rate_hz: int) -> Signal:
    """Band-limited polyphase resampling with group-delay compensation.

    The anti-alias / anti-image filter is a Kaiser-windowed sinc
    (beta 8.6, 64 taps per phase) with cutoff at 0.45 of the lower of the two
    rates. The output has ``round(len * target / source)`` samples and is
    time-aligned with the input.
    """
    target = int(target_rate_hz)
    if target <= 0 or target != target_rate_hz:
        raise ValueError(f"target rate must be a positive integer, got {target_rate_hz!r}")
    source = signal.sample_rate_hz
    if target == source:
        return signal
    g = math.gcd(source, target)
    up, down = target // g, source // g
    n_out = int(round(len(signal) * target / source))
    if len(signal) == 0:
        return Signal(np.zeros(0), target)
    # firwin cutoff is relative to Nyquist of up * source
    cutoff = 0.45 * min(source, target) / (0.5 * up * source)
    h = _resample_filter(up, down, cutoff)
    out = sps.resample_poly(signal.samples, up, down, window=h)
    if out.size >= n_out:
        out = out[:n_out]
    else:
        out = np.concatenate([out, np.zeros(n_out - out.size)])
    return Signal(out, target)
