"""Robust room impulse response estimation from arbitrary excitation signals.

The RIR is fitted by minimizing the l1 norm of the time-frequency residual
between a recording and the convolved excitation, solved with IRLS over a
matrix-free LSMR solver, with optional LPC-whitening preconditioning.
"""

__version__ = "0.1.0"

from .core_io import Signal, read_signal, read_wav, write_wav
from .irls import IrlsOptions, IrlsReport, estimate_rir
from .lsmr import LsmrOptions, LsmrResult, lsmr_solve
from .operators import StftConfig
from .pipeline import EstimateConfig, run_estimate

__all__ = [
    "__version__",
    "Signal",
    "read_signal",
    "read_wav",
    "write_wav",
    "IrlsOptions",
    "IrlsReport",
    "estimate_rir",
    "LsmrOptions",
    "LsmrResult",
    "lsmr_solve",
    "StftConfig",
    "EstimateConfig",
    "run_estimate",
]
