"""End-to-end estimation: optional EQ preconditioning followed by one estimator."""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field
from typing import Literal, Optional, Union

import numpy as np

from .baselines import freq_deconv, l2_estimate
from .core_io import Signal, resample
from .irls import IrlsOptions, IrlsReport, estimate_rir
from .lsmr import LsmrOptions
from .operators import StftConfig
from .precondition import LpcModel, PreconditionConfig, whiten_pair

__all__ = ["METHODS", "EstimateConfig", "EstimateResult", "run_estimate", "match_rate"]

METHODS = ("anyrir", "l2", "freq")


@dataclass(frozen=True)
class EstimateConfig:
    method: str = "anyrir"
    precondition: Optional[bool] = None  # None: on for anyrir/l2, off for freq
    n_dft: int = 256
    delta: Union[float, Literal["auto"]] = "auto"
    delta_scale: float = 1.0
    max_irls_iters: int = 20
    h_rel_tol: float = 1e-4
    lsmr_atol: float = 1e-6
    lsmr_btol: float = 1e-6
    lsmr_conlim: float = 1e8
    lsmr_max_iters: Optional[int] = None
    target_rate_hz: int = 32000
    lpc_order: int = 200
    hf_noise_level_db: float = -50.0
    hf_noise_cutoff_hz: float = 14000.0
    freq_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")

    @property
    def use_precondition(self) -> bool:
        if self.precondition is None:
            return self.method != "freq"
        return bool(self.precondition)

    @property
    def stft(self) -> StftConfig:
        return StftConfig(self.n_dft)

    @property
    def lsmr(self) -> LsmrOptions:
        return LsmrOptions(atol=self.lsmr_atol, btol=self.lsmr_btol, conlim=self.lsmr_conlim,
                           max_iters=self.lsmr_max_iters)

    @property
    def irls(self) -> IrlsOptions:
        return IrlsOptions(max_irls_iters=self.max_irls_iters, h_rel_tol=self.h_rel_tol,
                           delta=self.delta, delta_scale=self.delta_scale, lsmr=self.lsmr)

    @property
    def preconditioner(self) -> PreconditionConfig:
        return PreconditionConfig(target_rate_hz=self.target_rate_hz, lpc_order=self.lpc_order,
                                  hf_noise_level_db=self.hf_noise_level_db,
                                  hf_noise_cutoff_hz=self.hf_noise_cutoff_hz, seed=self.seed)

    def working_rate(self, source_rate_hz: int) -> int:
        if self.use_precondition:
            return self.preconditioner.working_rate(source_rate_hz)
        return source_rate_hz

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["precondition"] = self.use_precondition
        return d


@dataclass
class EstimateResult:
    h: np.ndarray
    sample_rate_hz: int
    config: EstimateConfig
    irls_report: Optional[IrlsReport] = None
    lpc_model: Optional[LpcModel] = None
    timings_ms: dict = field(default_factory=dict)


def run_estimate(x: Signal, y: Signal, rir_len: int, config: EstimateConfig = EstimateConfig()) -> EstimateResult:
    """Estimate a ``rir_len``-sample RIR (at the working sample rate) with ``config.method``."""
    timings = {}
    t0 = time.perf_counter()
    model = None
    if config.use_precondition:
        x, y, model = whiten_pair(x, y, config.preconditioner)
    timings["precondition"] = 1e3 * (time.perf_counter() - t0)

    t0 = time.perf_counter()
    report = None
    if config.method == "anyrir":
        report = estimate_rir(x, y, rir_len, config.stft, config.irls)
        h = report.h_estimate
    elif config.method == "l2":
        h = l2_estimate(x, y, rir_len, config.stft, config.lsmr)
    else:
        h = freq_deconv(x, y, rir_len, config.freq_eps)
    timings["estimate"] = 1e3 * (time.perf_counter() - t0)
    return EstimateResult(h, x.sample_rate_hz, config, report, model, timings)


def match_rate(h: np.ndarray, from_rate: int, to_rate: int) -> np.ndarray:
    """Bring a reference RIR to the rate of an estimate (identity when equal)."""
    if from_rate == to_rate:
        return np.asarray(h, dtype=np.float64)
    return resample(Signal(h, from_rate), to_rate).samples
