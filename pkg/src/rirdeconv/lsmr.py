"""Matrix-free LSMR for real least-squares problems.

Follows the recurrences of Fong & Saunders, "LSMR: An iterative algorithm
for sparse least-squares problems" (SIAM J. Sci. Comput., 2011). Only
O(m + n) vectors are kept; the operator is touched through two callables.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = ["LsmrOptions", "LsmrResult", "StopReason", "NumericalError", "lsmr_solve"]


class NumericalError(ArithmeticError):
    """Raised when an operator produces non-finite values."""


class StopReason(str, enum.Enum):
    CONVERGED_RESIDUAL = "converged_residual"
    CONVERGED_NORMAL_EQ = "converged_normal_eq"
    MAX_ITERS = "max_iters"
    CONDITION_LIMIT = "condition_limit"
    ZERO_RHS = "zero_rhs"


@dataclass(frozen=True)
class LsmrOptions:
    atol: float = 1e-6
    btol: float = 1e-6
    conlim: float = 1e8
    max_iters: Optional[int] = None  # None -> 4 * n
    damp: float = 0.0
    record_history: bool = False

    def __post_init__(self):
        if self.atol < 0 or self.btol < 0:
            raise ValueError("atol and btol must be nonnegative")
        if self.max_iters is not None and self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.damp < 0:
            raise ValueError("damp must be nonnegative")


@dataclass
class LsmrResult:
    solution: np.ndarray
    iterations: int
    stop_reason: StopReason
    residual_norm: float
    normal_eq_norm: float
    condition_estimate: float
    norm_estimate: float = 0.0
    operator_calls: int = 0
    residual_history: list = field(default_factory=list)
    normal_eq_history: list = field(default_factory=list)


def _sym_ortho(a: float, b: float):
    """Stable Givens rotation: returns (c, s, r) with [c s; -s c] [a; b] = [r; 0]."""
    if b == 0:
        return math.copysign(1.0, a) if a != 0 else 1.0, 0.0, abs(a)
    if a == 0:
        return 0.0, math.copysign(1.0, b), abs(b)
    if abs(b) > abs(a):
        tau = a / b
        s = math.copysign(1.0, b) / math.sqrt(1 + tau * tau)
        return s * tau, s, b / s
    tau = b / a
    c = math.copysign(1.0, a) / math.sqrt(1 + tau * tau)
    return c, c * tau, a / c


def _checked(v, what):
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise NumericalError(f"non-finite values in {what} operator output")
    return v


def lsmr_solve(
    forward: Callable[[np.ndarray], np.ndarray],
    adjoint: Callable[[np.ndarray], np.ndarray],
    b,
    opts: LsmrOptions = LsmrOptions(),
) -> LsmrResult:
    """Solve ``min ||A z - b||_2`` (optionally damped) given ``A`` and ``A^T`` as callables.

    Iteration stops when any of these holds (running estimates, no exact norms):

    * ``||r|| <= btol ||b|| + atol ||A|| ||z||``  (compatible system)
    * ``||A^T r|| <= atol ||A|| ||r||``             (least-squares optimality)
    * ``cond(A) >= conlim``
    * ``max_iters`` reached

    ``||A^T r||`` is monotonically non-increasing in LSMR, so the final
    iterate is also the one with the smallest normal-equation residual.
    """
    b = np.asarray(b, dtype=np.float64).ravel()
    calls = 0

    def A(v):
        nonlocal calls
        calls += 1
        return _checked(forward(v), "forward")

    def At(v):
        nonlocal calls
        calls += 1
        return _checked(adjoint(v), "adjoint")

    if not np.all(np.isfinite(b)):
        raise NumericalError("right-hand side contains non-finite values")

    damp = float(opts.damp)
    atol, btol = opts.atol, opts.btol
    ctol = 1.0 / opts.conlim if opts.conlim > 0 else 0.0
    history_r: list = []
    history_ar: list = []

    normb = float(np.linalg.norm(b))
    u = b.copy()
    beta = normb
    if beta > 0:
        u /= beta
    v = At(u)
    n = v.size
    max_iters = opts.max_iters if opts.max_iters is not None else 4 * n
    x = np.zeros(n)

    if beta == 0:
        return LsmrResult(x, 0, StopReason.ZERO_RHS, 0.0, 0.0, 1.0, 0.0, calls)

    alpha = float(np.linalg.norm(v))
    if alpha > 0:
        v /= alpha

    zetabar = alpha * beta
    alphabar = alpha
    rho = rhobar = cbar = 1.0
    sbar = 0.0
    h = v.copy()
    hbar = np.zeros(n)

    betadd = beta
    betad = 0.0
    rhodold = 1.0
    tautildeold = 0.0
    thetatilde = 0.0
    zeta = 0.0
    d = 0.0

    normA2 = alpha * alpha
    maxrbar = 0.0
    minrbar = 1e100
    normA = math.sqrt(normA2)
    condA = 1.0
    normx = 0.0
    normr = beta
    normar = alpha * beta

    if normar == 0:
        # b is orthogonal to range(A): z = 0 already solves the problem
        return LsmrResult(x, 0, StopReason.CONVERGED_NORMAL_EQ, normr, 0.0, 1.0, normA, calls)

    itn = 0
    reason = None
    while reason is None:
        itn += 1

        # Golub-Kahan bidiagonalization step
        u = A(v) - alpha * u
        beta = float(np.linalg.norm(u))
        if beta > 0:
            u /= beta
            v = At(u) - beta * v
            alpha = float(np.linalg.norm(v))
            if alpha > 0:
                v /= alpha

        # rotation eliminating the damping term
        chat, shat, alphahat = _sym_ortho(alphabar, damp)

        # first QR of the lower bidiagonal matrix
        rhoold = rho
        c, s, rho = _sym_ortho(alphahat, beta)
        thetanew = s * alpha
        alphabar = c * alpha

        # second QR, for the upper bidiagonal R
        rhobarold = rhobar
        zetaold = zeta
        thetabar = sbar * rho
        rhotemp = cbar * rho
        cbar, sbar, rhobar = _sym_ortho(cbar * rho, thetanew)
        zeta = cbar * zetabar
        zetabar = -sbar * zetabar

        # update h, hbar, x
        hbar *= -(thetabar * rho / (rhoold * rhobarold))
        hbar += h
        x += (zeta / (rho * rhobar)) * hbar
        h *= -(thetanew / rho)
        h += v

        # running estimate of ||r||
        betaacute = chat * betadd
        betacheck = -shat * betadd
        betahat = c * betaacute
        betadd = -s * betaacute

        thetatildeold = thetatilde
        ctildeold, stildeold, rhotildeold = _sym_ortho(rhodold, thetabar)
        thetatilde = stildeold * rhobar
        rhodold = ctildeold * rhobar
        betad = -stildeold * betad + ctildeold * betahat

        tautildeold = (zetaold - thetatildeold * tautildeold) / rhotildeold
        taud = (zeta - thetatilde * tautildeold) / rhodold
        d += betacheck * betacheck
        normr = math.sqrt(d + (betad - taud) ** 2 + betadd * betadd)

        # running estimates of ||A|| and cond(A)
        normA2 += beta * beta
        normA = math.sqrt(normA2)
        normA2 += alpha * alpha
        maxrbar = max(maxrbar, rhobarold)
        if itn > 1:
            minrbar = min(minrbar, rhobarold)
        condA = max(maxrbar, rhotemp) / min(minrbar, rhotemp)

        normar = abs(zetabar)
        normx = float(np.linalg.norm(x))
        if opts.record_history:
            history_r.append(normr)
            history_ar.append(normar)

        test1 = normr / normb
        test2 = normar / (normA * normr) if normA * normr != 0 else math.inf
        test3 = 1.0 / condA
        t1 = test1 / (1 + normA * normx / normb)
        rtol = btol + atol * normA * normx / normb

        # later checks take precedence, mirroring the reference ordering
        if itn >= max_iters:
            reason = StopReason.MAX_ITERS
        if 1 + test3 <= 1:
            reason = StopReason.CONDITION_LIMIT
        if 1 + test2 <= 1:
            reason = StopReason.CONVERGED_NORMAL_EQ
        if 1 + t1 <= 1:
            reason = StopReason.CONVERGED_RESIDUAL
        if test3 <= ctol:
            reason = StopReason.CONDITION_LIMIT
        if test2 <= atol:
            reason = StopReason.CONVERGED_NORMAL_EQ
        if test1 <= rtol:
            reason = StopReason.CONVERGED_RESIDUAL

    return LsmrResult(
        solution=x,
        iterations=itn,
        stop_reason=reason,
        residual_norm=normr,
        normal_eq_norm=normar,
        condition_estimate=condA,
        norm_estimate=normA,
        operator_calls=calls,
        residual_history=history_r,
        normal_eq_history=history_ar,
    )
