"""Seeded synthetic measurement scenes.

A scene is a music-like excitation convolved with an exponentially decaying
noise RIR, plus stationary white noise at a fixed SNR and non-overlapping
decaying noise bursts standing in for transient interferers. Every random
draw comes from a child stream of ``SceneConfig.seed``, so a scene is fully
reproducible from its config.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.fft as sfft
from scipy import signal as sps

from .core_io import Signal, derive_seed, make_rng, read_signal, read_wav, resample, write_wav
from .operators import fft_convolve

__all__ = [
    "SceneConfig",
    "SyntheticScene",
    "Event",
    "InfeasibleCoverageError",
    "gen_rir",
    "gen_excitation",
    "gen_scene",
    "apply_degradation_surrogate",
    "save_scene",
    "load_scene",
    "default_rir_len",
    "EXCITATION_KINDS",
]

EXCITATION_KINDS = ("harmonic_tones", "colored_noise", "wav_file")
LN1000 = math.log(1000.0)  # amplitude decay constant giving -60 dB energy at T60
EVENT_MIN_S = 0.020
EVENT_MAX_S = 0.200
EVENT_DECAY_DB = 30.0  # burst envelope drop over its own length

# per-purpose child-stream keys
_K_EXCITATION, _K_RIR, _K_STATIONARY, _K_EVENTS, _K_DRAWS, _K_DEGRADE = range(6)


class InfeasibleCoverageError(ValueError):
    pass


def default_rir_len(t60_s: float, rate: int) -> int:
    return int(math.ceil(round(1.2 * t60_s * rate, 9)))


@dataclass(frozen=True)
class SceneConfig:
    """Scene generation parameters.

    ``nonstat_coverage`` is the summed event length as a fraction of the
    recording length; ``None`` draws it uniformly from [0.2, 0.5].
    ``nonstat_peak_db`` is the burst onset level relative to the clean
    recording RMS; ``None`` draws it per event from [0, 10] dB.
    """

    seed: int = 0
    sample_rate_hz: int = 16000
    duration_s: float = 30.0
    rir_t60_s: float = 0.3
    rir_len: Optional[int] = None
    stationary_snr_db: float = 50.0
    nonstat_coverage: Optional[float] = None
    nonstat_peak_db: Optional[float] = None
    excitation_kind: str = "colored_noise"
    excitation_path: Optional[str] = None
    degradation_db: Optional[float] = None

    def __post_init__(self):
        if self.rir_t60_s <= 0:
            raise ValueError("rir_t60_s must be positive")
        if self.duration_s <= 0:
            raise ValueError("duration_s must be positive")
        if self.nonstat_coverage is not None and not 0 <= self.nonstat_coverage <= 1:
            raise ValueError("nonstat_coverage must lie in [0, 1]")
        if self.excitation_kind not in EXCITATION_KINDS:
            raise ValueError(f"unknown excitation kind {self.excitation_kind!r}")
        if self.excitation_kind == "wav_file" and not self.excitation_path:
            raise ValueError("excitation_kind 'wav_file' needs excitation_path")
        if self.degradation_db is not None and not self.degradation_db < 0:
            raise ValueError("degradation_db must be negative")

    @property
    def resolved_rir_len(self) -> int:
        if self.rir_len is not None:
            return int(self.rir_len)
        return default_rir_len(self.rir_t60_s, self.sample_rate_hz)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SceneConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass(frozen=True)
class Event:
    start_sample: int
    length: int
    kind: str
    peak_db: float

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class SyntheticScene:
    excitation: Signal
    rir_true: np.ndarray
    recording: Signal
    event_log: list[Event]
    config: SceneConfig
    coverage: float
    clean: np.ndarray = field(repr=False, default=None)
    stationary_noise: np.ndarray = field(repr=False, default=None)
    interference: np.ndarray = field(repr=False, default=None)
    degradation: np.ndarray = field(repr=False, default=None)

    @property
    def measured_coverage(self) -> float:
        return sum(e.length for e in self.event_log) / len(self.recording)

    def metadata(self) -> dict:
        return {
            "schema_version": 1,
            "config": self.config.to_dict(),
            "sample_rate_hz": self.recording.sample_rate_hz,
            "excitation_len": len(self.excitation),
            "recording_len": len(self.recording),
            "rir_len": int(self.rir_true.size),
            "coverage_target": self.coverage,
            "coverage": self.measured_coverage,
            "events": [e.as_dict() for e in self.event_log],
        }


# ---------------------------------------------------------------------------
# generators


def gen_rir(rng: np.random.Generator, t60_s: float, length: int, rate: int) -> np.ndarray:
    """Exponentially decaying Gaussian noise RIR with a 0 dB DRR direct path; unit energy."""
    if not t60_s > 0:
        raise ValueError("t60_s must be positive")
    length = int(length)
    if length < 1:
        raise ValueError("length must be >= 1")
    t = np.arange(length) / rate
    h = rng.standard_normal(length) * np.exp(-LN1000 * t / t60_s)
    h[0] = 0.0
    tail = float(np.sum(h**2))
    h[0] = math.sqrt(tail) if tail > 0 else 1.0
    return h / np.linalg.norm(h)


def _harmonic_tones(rng, n: int, rate: int) -> np.ndarray:
    out = np.zeros(n)
    pos = 0
    attack = int(0.01 * rate)
    while pos < n:
        note_len = int(rng.uniform(0.2, 1.0) * rate)
        f0 = 110.0 * 2.0 ** rng.uniform(0.0, 3.0)  # 110..880 Hz, log-uniform
        m = min(note_len, n - pos)
        t = np.arange(m) / rate
        tone = np.zeros(m)
        for k in range(1, 9):
            if k * f0 >= 0.5 * rate:
                break
            tone += np.sin(2 * np.pi * k * f0 * t + rng.uniform(0, 2 * np.pi)) / k
        env = np.exp(-3.0 * t / (note_len / rate))
        if attack > 0:
            env[: min(attack, m)] *= np.linspace(0.0, 1.0, attack, endpoint=False)[:m]
        out[pos:pos + m] += tone * env
        pos += note_len
    return out


def _colored_noise(rng, n: int, rate: int, corner_hz: float = 20.0) -> np.ndarray:
    # PSD ~ 1/f^2 (-6 dB/octave) above corner_hz, flat below it
    white = rng.standard_normal(n)
    nfft = sfft.next_fast_len(n, real=True)
    spec = sfft.rfft(white, nfft)
    f = sfft.rfftfreq(nfft, 1.0 / rate)
    spec *= corner_hz / np.maximum(f, corner_hz)
    return sfft.irfft(spec, nfft)[:n]


def gen_excitation(
    rng: np.random.Generator, kind: str, duration_s: float, rate: int, path=None
) -> Signal:
    """Music-like excitation, peak-normalized to 0.5.

    ``harmonic_tones`` is a monophonic sequence of notes (fundamental
    110-880 Hz, 8 partials at 1/k, attack-decay envelope, 0.2-1 s long);
    ``colored_noise`` is Gaussian noise with a -6 dB/octave spectrum;
    ``wav_file`` loads ``path`` (resampled to ``rate``, cut to ``duration_s``).
    """
    if not duration_s > 0:
        raise ValueError("duration_s must be positive")
    n = int(round(duration_s * rate))
    if kind == "harmonic_tones":
        s = _harmonic_tones(rng, n, rate)
    elif kind == "colored_noise":
        s = _colored_noise(rng, n, rate)
    elif kind == "wav_file":
        if path is None:
            raise ValueError("wav_file excitation needs a path")
        s = resample(read_signal(path), rate).samples[:n]
    else:
        raise ValueError(f"unknown excitation kind {kind!r}")
    peak = np.max(np.abs(s)) if s.size else 0.0
    if peak == 0:
        raise ValueError("excitation is silent")
    return Signal(0.5 * s / peak, rate)


def _rms(v) -> float:
    return float(np.sqrt(np.mean(np.square(v)))) if len(v) else 0.0


def _event_lengths(rng, total: int, rate: int) -> list[int]:
    lo = max(1, int(round(EVENT_MIN_S * rate)))
    hi = max(lo, int(round(EVENT_MAX_S * rate)))
    lengths = []
    remaining = total
    while remaining > 0:
        ell = int(rng.integers(lo, hi + 1))
        if remaining - ell < lo:
            ell = remaining if remaining <= hi else remaining - lo
        lengths.append(ell)
        remaining -= ell
    return lengths


def _place_events(rng, lengths: list[int], span: int) -> list[int]:
    # Random non-overlapping placement: split the free space into len+1 random gaps.
    free = span - sum(lengths)
    order = rng.permutation(len(lengths))
    cuts = np.sort(rng.integers(0, free + 1, size=len(lengths)))
    starts = [0] * len(lengths)
    offset = 0
    for slot, idx in enumerate(order):
        starts[idx] = int(cuts[slot]) + offset
        offset += lengths[idx]
    return starts


def _burst(rng, length: int, amplitude: float) -> np.ndarray:
    t = np.arange(length) / max(length, 1)
    env = 10.0 ** (-EVENT_DECAY_DB / 20.0 * t)
    return amplitude * env * rng.standard_normal(length)


def apply_degradation_surrogate(s: Signal, level_db: float, rng: np.random.Generator) -> Signal:
    """Add noise shaped like the signal's smoothed spectral envelope at ``level_db`` re RMS.

    A stand-in for lossy-codec mismatch: the added error follows the signal
    in time and frequency, and its total power is exactly ``level_db`` below
    the signal power.
    """
    return Signal(s.samples + _shaped_noise(s, level_db, rng), s.sample_rate_hz)


def _shaped_noise(s: Signal, level_db: float, rng) -> np.ndarray:
    if not level_db < 0:
        raise ValueError("level_db must be negative")
    x = s.samples
    if x.size == 0 or not np.any(x):
        return np.zeros_like(x)
    nper = min(1024, max(16, 2 ** int(math.floor(math.log2(max(x.size, 16))))))
    _, _, Z = sps.stft(x, nperseg=nper, noverlap=nper // 2, window="hann", boundary="even")
    mag = np.abs(Z)
    # smooth the envelope over ~9 bins in frequency and 3 frames in time
    kernel = np.outer(np.hanning(11)[1:-1], np.hanning(5)[1:-1])
    kernel /= kernel.sum()
    env = sps.convolve2d(mag, kernel, mode="same", boundary="symm")
    phase = rng.uniform(0, 2 * np.pi, size=Z.shape)
    _, noise = sps.istft(env * np.exp(1j * phase), nperseg=nper, noverlap=nper // 2,
                         window="hann", boundary=True)
    noise = noise[: x.size]
    if noise.size < x.size:
        noise = np.concatenate([noise, np.zeros(x.size - noise.size)])
    target = _rms(x) * 10.0 ** (level_db / 20.0)
    return noise * (target / _rms(noise))


def gen_scene(config: SceneConfig) -> SyntheticScene:
    """Generate a reproducible scene from ``config``.

    Raises :class:`InfeasibleCoverageError` when the requested event coverage
    cannot be placed inside the excitation span without overlap.
    """
    rate = config.sample_rate_hz
    seed = config.seed
    draws = make_rng(derive_seed(seed, _K_DRAWS))

    x = gen_excitation(make_rng(derive_seed(seed, _K_EXCITATION)), config.excitation_kind,
                       config.duration_s, rate, config.excitation_path)
    n_rir = config.resolved_rir_len
    h = gen_rir(make_rng(derive_seed(seed, _K_RIR)), config.rir_t60_s, n_rir, rate)

    m = len(x) + n_rir - 1
    clean = fft_convolve(x.samples, h, m)
    sig_rms = _rms(clean)

    noise = make_rng(derive_seed(seed, _K_STATIONARY)).standard_normal(m)
    noise *= sig_rms * 10.0 ** (-config.stationary_snr_db / 20.0) / _rms(noise)

    coverage = (config.nonstat_coverage if config.nonstat_coverage is not None
                else float(draws.uniform(0.2, 0.5)))
    total = int(round(coverage * m))
    if total > len(x):
        raise InfeasibleCoverageError(
            f"coverage {coverage:.3f} needs {total} event samples but the excitation span "
            f"is only {len(x)} samples; increase duration_s or lower the coverage"
        )
    interference = np.zeros(m)
    events: list[Event] = []
    if total > 0:
        ev_rng = make_rng(derive_seed(seed, _K_EVENTS))
        lengths = _event_lengths(draws, total, rate)
        starts = _place_events(draws, lengths, len(x))
        for start, length in sorted(zip(starts, lengths)):
            peak_db = (config.nonstat_peak_db if config.nonstat_peak_db is not None
                       else float(draws.uniform(0.0, 10.0)))
            amp = sig_rms * 10.0 ** (peak_db / 20.0)
            interference[start:start + length] += _burst(ev_rng, length, amp)
            events.append(Event(int(start), int(length), "burst", peak_db))

    recording = clean + noise + interference
    degradation = np.zeros(m)
    if config.degradation_db is not None:
        degradation = _shaped_noise(Signal(recording, rate), config.degradation_db,
                                    make_rng(derive_seed(seed, _K_DEGRADE)))
        recording = recording + degradation

    return SyntheticScene(
        excitation=x,
        rir_true=h,
        recording=Signal(recording, rate),
        event_log=events,
        config=config,
        coverage=coverage,
        clean=clean,
        stationary_noise=noise,
        interference=interference,
        degradation=degradation,
    )


# ---------------------------------------------------------------------------
# serialization


def save_scene(scene: SyntheticScene, out_dir) -> Path:
    """Write excitation.wav, recording.wav, rir_true.wav and scene.json into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rate = scene.recording.sample_rate_hz
    write_wav(scene.excitation, out / "excitation.wav")
    write_wav(scene.recording, out / "recording.wav")
    write_wav(Signal(scene.rir_true, rate), out / "rir_true.wav")
    tmp = out / ".scene.json.tmp"
    tmp.write_text(json.dumps(scene.metadata(), indent=2, sort_keys=True))
    tmp.replace(out / "scene.json")
    return out


def load_scene(scene_dir):
    """Return ``(excitation, recording, rir_true, metadata)`` from a scene directory."""
    d = Path(scene_dir)
    meta = json.loads((d / "scene.json").read_text())
    return (
        read_wav(d / "excitation.wav"),
        read_wav(d / "recording.wav"),
        read_wav(d / "rir_true.wav").samples,
        meta,
    )
