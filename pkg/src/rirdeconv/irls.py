"""Robust RIR estimation by IRLS on the time-frequency residual.

Minimizes ``sum |S y - S X h|`` (complex magnitudes over all STFT bins) as a
sequence of weighted least-squares problems, each solved matrix-free with
LSMR. Weights follow ``1 / max(|r|, delta)``, i.e. Huber-type reweighting:
bins whose residual is below ``delta`` keep full weight, larger ones are
down-weighted to ``delta / |r|``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal, Union

import numpy as np

from .core_io import Signal
from .lsmr import LsmrOptions, LsmrResult, lsmr_solve
from .operators import ConvOperator, StftConfig, WeightedTfOperator

__all__ = [
    "IrlsOptions",
    "IterationRecord",
    "IrlsReport",
    "huber_weights",
    "build_problem",
    "solve_weighted",
    "irls_solve",
    "estimate_rir",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class IrlsOptions:
    """Options for :func:`estimate_rir`.

    ``delta`` is either a fixed positive threshold (an estimate of the
    stationary-noise standard deviation per bin) or ``"auto"``, in which case
    ``delta = max(delta_min, delta_scale * median|r|)`` is recomputed from the
    latest residual at every iteration. ``delta_min`` defaults to
    ``delta_min_rel * max|S y|``.
    """

    max_irls_iters: int = 20
    h_rel_tol: float = 1e-4
    delta: Union[float, Literal["auto"]] = "auto"
    delta_scale: float = 1.0
    delta_min: float | None = None
    delta_min_rel: float = 1e-8
    lsmr: LsmrOptions = LsmrOptions()

    def __post_init__(self):
        if self.max_irls_iters < 1:
            raise ValueError("max_irls_iters must be >= 1")
        if self.delta != "auto":
            if not isinstance(self.delta, (int, float)) or not self.delta > 0:
                raise ValueError(f"delta must be 'auto' or a positive number, got {self.delta!r}")
        if not self.delta_scale > 0:
            raise ValueError("delta_scale must be positive")
        if self.delta_min is not None and not self.delta_min > 0:
            raise ValueError("delta_min must be positive")

    @property
    def delta_mode(self) -> str:
        return "auto_median" if self.delta == "auto" else "fixed"


@dataclass(frozen=True)
class IterationRecord:
    l1_objective: float
    delta: float
    lsmr_iterations: int
    h_rel_change: float
    lsmr_stop_reason: str = ""

    def as_dict(self) -> dict:
        return {
            "l1_objective": self.l1_objective,
            "delta": self.delta,
            "lsmr_iterations": self.lsmr_iterations,
            "h_rel_change": self.h_rel_change,
            "lsmr_stop_reason": self.lsmr_stop_reason,
        }


@dataclass
class IrlsReport:
    h_estimate: np.ndarray
    iterations: list[IterationRecord]
    final_weights: np.ndarray
    converged: bool
    initial_objective: float = 0.0
    delta_min: float = 0.0
    lsmr_results: list[LsmrResult] = field(default_factory=list, repr=False)

    @property
    def objectives(self) -> np.ndarray:
        return np.array([it.l1_objective for it in self.iterations])

    def summary(self) -> dict:
        w = self.final_weights
        return {
            "converged": self.converged,
            "n_iterations": len(self.iterations),
            "initial_objective": self.initial_objective,
            "delta_min": self.delta_min,
            "iterations": [it.as_dict() for it in self.iterations],
            "final_weights": {
                "min": float(w.min()),
                "median": float(np.median(w)),
                "mean": float(w.mean()),
                "fraction_below_half": float(np.mean(w < 0.5)),
            },
        }


def huber_weights(residual, delta: float) -> np.ndarray:
    """``1 / max(|r|, delta)`` rescaled so the largest weight is exactly 1."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    w = 1.0 / np.maximum(np.abs(residual), delta)
    return w / w.max()


def build_problem(x: Signal, y: Signal, rir_len: int, stft: StftConfig):
    """Validate inputs and return ``(operator, S y)`` for a length-``rir_len`` RIR."""
    if x.sample_rate_hz != y.sample_rate_hz:
        raise ValueError(
            f"sample rate mismatch: excitation {x.sample_rate_hz} Hz, recording {y.sample_rate_hz} Hz"
        )
    rir_len = int(rir_len)
    if rir_len < 1:
        raise ValueError("rir_len must be >= 1")
    if rir_len > len(y):
        raise ValueError(f"rir_len {rir_len} exceeds recording length {len(y)}")
    if len(x) == 0:
        raise ValueError("excitation is empty")
    conv = ConvOperator(x.samples, rir_len, out_len=len(y))
    op = WeightedTfOperator(conv, stft)
    return op, op.spectrum_of(y.samples)


def solve_weighted(
    op: WeightedTfOperator, target_bins: np.ndarray, weights: np.ndarray, lsmr: LsmrOptions
) -> LsmrResult:
    """One weighted LS subproblem ``min || w * (target - S X h) ||_2``."""
    op.weights = np.asarray(weights, dtype=np.float64)
    return lsmr_solve(op.matvec, op.rmatvec, op.stack(op.weights * target_bins), lsmr)


def _l1(bins: np.ndarray) -> float:
    return float(np.sum(np.abs(bins)))


def _backtrack(h_old, r_old, f_old, h_new, r_new, max_halvings: int = 10):
    step = 1.0
    for _ in range(max_halvings):
        step *= 0.5
        r = r_old + step * (r_new - r_old)
        f = _l1(r)
        if f <= f_old:
            return h_old + step * (h_new - h_old), r, f
    return h_old, r_old, f_old


def irls_solve(op: WeightedTfOperator, target_bins: np.ndarray, opts: IrlsOptions = IrlsOptions()) -> IrlsReport:
    """Run IRLS on a prepared operator and target spectrogram ``S y``.

    Starts from ``h = 0`` with unit weights, so the first subproblem is the
    plain l2 fit. Stops once ``||h_new - h|| / ||h_new|| < h_rel_tol``.
    """
    target_bins = np.asarray(target_bins)
    n = op.conv.N
    peak = float(np.max(np.abs(target_bins))) if target_bins.size else 0.0
    delta_min = opts.delta_min if opts.delta_min is not None else opts.delta_min_rel * peak
    delta_min = max(delta_min, np.finfo(float).tiny)

    h = np.zeros(n)
    resid_old = target_bins
    weights = np.ones(target_bins.shape)
    initial = _l1(target_bins)
    objective_old = initial
    records: list[IterationRecord] = []
    results: list[LsmrResult] = []
    converged = False

    for _ in range(opts.max_irls_iters):
        res = solve_weighted(op, target_bins, weights, opts.lsmr)
        results.append(res)
        h_new = res.solution
        resid = target_bins - op.unweighted_bins(h_new)
        objective = _l1(resid)

        if objective > objective_old:
            # Huber reweighting does not guarantee l1 descent near the fixed point.
            # The residual is affine in h, so backtrack along the step for free.
            h_new, resid, objective = _backtrack(h, resid_old, objective_old, h_new, resid)

        norm_new = np.linalg.norm(h_new)
        change = float(np.linalg.norm(h_new - h) / norm_new) if norm_new > 0 else 0.0
        h = h_new
        resid_old = resid
        objective_old = objective

        if opts.delta == "auto":
            delta = max(delta_min, opts.delta_scale * float(np.median(np.abs(resid))))
        else:
            delta = max(float(opts.delta), delta_min)
        weights = huber_weights(resid, delta)

        records.append(
            IterationRecord(objective, delta, res.iterations, change, res.stop_reason.value)
        )
        log.debug(
            "irls iter %d: l1=%.6g delta=%.3g lsmr_iters=%d dh=%.3g",
            len(records), objective, delta, res.iterations, change,
        )
        if change < opts.h_rel_tol:
            converged = True
            break

    return IrlsReport(
        h_estimate=h,
        iterations=records,
        final_weights=weights,
        converged=converged,
        initial_objective=initial,
        delta_min=delta_min,
        lsmr_results=results,
    )


def estimate_rir(
    x: Signal,
    y: Signal,
    rir_len: int,
    stft: StftConfig = StftConfig(),
    opts: IrlsOptions = IrlsOptions(),
) -> IrlsReport:
    """Estimate a length-``rir_len`` RIR from excitation ``x`` and recording ``y``.

    The recording is zero-padded to ``len(x) + rir_len - 1`` when shorter.
    """
    op, target = build_problem(x, y, rir_len, stft)
    return irls_solve(op, target, opts)
