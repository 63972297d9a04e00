"""RIR error metric, Schroeder energy decay curves and CSV export."""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "EdcCurve",
    "ERROR_FLOOR_DB",
    "EDC_FLOOR_DB",
    "h_error_db",
    "edc",
    "edc_slope_db_per_s",
    "write_edc_csv",
    "read_edc_csv",
    "write_weights_csv",
]

ERROR_FLOOR_DB = -120.0
EDC_FLOOR_DB = -120.0


def _pad_pair(a, b):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    n = max(a.size, b.size)
    return np.pad(a, (0, n - a.size)), np.pad(b, (0, n - b.size))


def h_error_db(h_est, h_true) -> float:
    """Normalized misalignment ``10 log10(||h_est - h_true||^2 / ||h_true||^2)``, floored at -120 dB.

    The shorter vector is zero-padded; no time or gain alignment is done.
    """
    est, true = _pad_pair(h_est, h_true)
    ref = float(np.dot(true, true))
    if ref == 0:
        raise ValueError("h_true is all zeros")
    err = float(np.sum((est - true) ** 2))
    if err == 0:
        return ERROR_FLOOR_DB
    return max(ERROR_FLOOR_DB, float(10.0 * np.log10(err / ref)))


@dataclass(frozen=True)
class EdcCurve:
    values_db: np.ndarray
    sample_rate_hz: int

    @property
    def times_s(self) -> np.ndarray:
        return np.arange(self.values_db.size) / self.sample_rate_hz


def edc(h, sample_rate_hz: int) -> EdcCurve:
    """Schroeder backward integration, normalized to 0 dB at t = 0 and floored at -120 dB."""
    h = np.asarray(h, dtype=np.float64).ravel()
    energy = np.cumsum(np.square(h)[::-1])[::-1]
    if energy.size == 0 or energy[0] == 0:
        raise ValueError("cannot compute the EDC of an all-zero RIR")
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(energy / energy[0])
    return EdcCurve(np.maximum(db, EDC_FLOOR_DB), int(sample_rate_hz))


def edc_slope_db_per_s(curve: EdcCurve, upper_db: float = -5.0, lower_db: float = -25.0) -> float:
    """Least-squares slope of the EDC between ``upper_db`` and ``lower_db``."""
    v = curve.values_db
    idx = np.nonzero((v <= upper_db) & (v >= lower_db))[0]
    if idx.size < 2:
        raise ValueError("EDC does not span the requested evaluation range")
    t = idx / curve.sample_rate_hz
    return float(np.polyfit(t, v[idx], 1)[0])


def _write_text_atomic(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    tmp.write_text(text, newline="")
    os.replace(tmp, path)


def write_edc_csv(curve: EdcCurve, path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["time_s", "edc_db"])
    for t, v in zip(curve.times_s, curve.values_db):
        w.writerow([repr(float(t)), repr(float(v))])
    _write_text_atomic(path, buf.getvalue())


def read_edc_csv(path) -> EdcCurve:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    t = np.array([float(r["time_s"]) for r in rows])
    v = np.array([float(r["edc_db"]) for r in rows])
    rate = int(round(1.0 / (t[1] - t[0]))) if t.size > 1 else 1
    return EdcCurve(v, rate)


def write_weights_csv(weights, path) -> None:
    """Write a frames x fft_len weight matrix, one frame per row."""
    weights = np.asarray(weights, dtype=np.float64)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    for row in weights:
        w.writerow([repr(float(v)) for v in row])
    _write_text_atomic(path, buf.getvalue())
