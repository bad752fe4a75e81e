"""HRIS power-splitting design for fixed BS beams.

The constrained problem is replaced by the unconstrained penalized objective

    f(beta) = -eta_r(beta) + lambda1 * max_k alpha1 ** (gamma_c - eta_c(beta; k))
              + lambda2 * sum_l (2 beta_l - 1) ** alpha2

which is minimized by Adam-style descent from a grid-search start.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .model import Beamformer, PropagationMatrices, SinrReport, build_propagation_matrices
from .scene import Channels

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PenaltyParams:
    lambda1: float = 10.0
    lambda2: float = 1.0
    alpha1: float = 4.0
    alpha2: int = 10
    gamma_c: float = 10 ** 0.5

    def __post_init__(self):
        if not (self.lambda1 > 0 and self.lambda2 > 0):
            raise ValueError("lambda1 and lambda2 must be strictly positive")
        if int(self.alpha2) != self.alpha2 or int(self.alpha2) % 2:
            raise ValueError("alpha2 must be an even integer")
        if not self.alpha1 > 1:
            raise ValueError("alpha1 must exceed 1 for the penalty to grow with the violation")


@dataclass(frozen=True)
class AgdParams:
    max_iters: int = 1000
    learning_rate: float = 0.01
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    lr_backoff: float = 0.5
    lr_recover: float = 1.2

    def __post_init__(self):
        if not (0 < self.lr_backoff < 1 and self.lr_recover >= 1):
            raise ValueError("need 0 < lr_backoff < 1 <= lr_recover")
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")


@dataclass(frozen=True)
class FgsParams:
    z_max: int = 10
    m_max: Optional[int] = None

    def __post_init__(self):
        if self.z_max < 1:
            raise ValueError("z_max must be >= 1")

    @property
    def delta_z(self) -> float:
        return 1.0 / self.z_max

    @property
    def grid(self) -> np.ndarray:
        return np.arange(self.z_max + 1) * self.delta_z

    def stages(self, n: int) -> int:
        if self.m_max is not None:
            return self.m_max
        return max(1, int(np.ceil(np.log2(n)))) if n > 1 else 1


@dataclass(frozen=True)
class HrisContext:
    """Real quadratic forms for one fixed beamformer (beta is real, so only real parts matter)."""

    C1: np.ndarray
    C2: np.ndarray
    C3: np.ndarray
    D: np.ndarray
    P: np.ndarray
    sigma2: float

    @classmethod
    def from_matrices(cls, m: PropagationMatrices, sigma2: float) -> "HrisContext":
        P = np.outer(m.a_r, m.a_r.conj())
        return cls(m.C1.real.copy(), m.C2.real.copy(), m.C3.real.copy(), m.D.real.copy(),
                   P.real.copy(), float(sigma2))

    @classmethod
    def from_design(cls, channels: Channels, beamformer: Beamformer, sigma2: float,
                    psi=None, gamma=None) -> "HrisContext":
        m = build_propagation_matrices(channels, beamformer, psi=psi, gamma=gamma)
        return cls.from_matrices(m, sigma2)

    @property
    def num_elements(self) -> int:
        return self.C1.shape[0]

    def sinrs(self, beta):
        """``(eta_r, eta_c)`` for a beta vector or a stack of them (last axis = elements)."""
        beta = np.asarray(beta, float)
        u = 1.0 - beta
        sig_r = np.einsum("...i,ij,...j->...", u, self.C1, u)
        rx = np.einsum("...i,ij,...j->...", u, self.P, u)
        leak = np.einsum("...i,ij,...j->...", beta, self.C2, beta)
        eta_r = sig_r / (rx * leak + self.sigma2)
        own = np.einsum("...i,kij,...j->...k", beta, self.C3, beta)
        tot = np.einsum("...i,kij,...j->...k", beta, self.D, beta)
        eta_c = own / (tot - own + self.sigma2)
        return eta_r, eta_c

    def report(self, beta, gamma_c: float = 0.0) -> SinrReport:
        eta_r, eta_c = self.sinrs(beta)
        return SinrReport(eta_r=float(eta_r), eta_c=eta_c, gamma_c=gamma_c)


def penalty_objective(beta, ctx: HrisContext, pen: PenaltyParams):
    """Penalized objective; accepts a single beta or a batch along leading axes."""
    beta = np.asarray(beta, float)
    eta_r, eta_c = ctx.sinrs(beta)
    g1 = np.power(pen.alpha1, pen.gamma_c - eta_c).max(axis=-1) if eta_c.shape[-1] else 0.0
    g2 = np.sum((2.0 * beta - 1.0) ** int(pen.alpha2), axis=-1)
    f = -eta_r + pen.lambda1 * g1 + pen.lambda2 * g2
    return float(f) if np.ndim(f) == 0 else f


def gradient(beta, ctx: HrisContext, pen: PenaltyParams) -> np.ndarray:
    """Analytic gradient of ``penalty_objective`` at a single beta."""
    beta = np.asarray(beta, float)
    u = 1.0 - beta
    C1u, Pu, C2b = ctx.C1 @ u, ctx.P @ u, ctx.C2 @ beta
    sig_r, rx, leak = u @ C1u, u @ Pu, beta @ C2b
    den_r = rx * leak + ctx.sigma2
    d_sig_r = -2.0 * C1u
    d_den_r = -2.0 * Pu * leak + rx * 2.0 * C2b
    d_eta_r = (d_sig_r * den_r - sig_r * d_den_r) / den_r ** 2

    grad = -d_eta_r
    a2 = int(pen.alpha2)
    grad = grad + pen.lambda2 * 2.0 * a2 * (2.0 * beta - 1.0) ** (a2 - 1)

    K = ctx.C3.shape[0]
    if K:
        own = np.einsum("i,kij,j->k", beta, ctx.C3, beta)
        tot = np.einsum("i,kij,j->k", beta, ctx.D, beta)
        eta_c = own / (tot - own + ctx.sigma2)
        # The max picks the most violated user; its branch carries the gradient.
        k = int(np.argmin(eta_c))
        d_own = 2.0 * ctx.C3[k] @ beta
        d_tot = 2.0 * ctx.D[k] @ beta
        den_c = tot[k] - own[k] + ctx.sigma2
        d_eta_c = (d_own * den_c - own[k] * (d_tot - d_own)) / den_c ** 2
        g1 = pen.alpha1 ** (pen.gamma_c - eta_c[k])
        grad = grad - pen.lambda1 * g1 * np.log(pen.alpha1) * d_eta_c
    return grad


def fgs_slices(n: int, fgs: FgsParams):
    """Index ranges visited by the grid search, in order."""
    out = []
    for m in range(1, fgs.stages(n) + 1):
        length = max(1, int(np.ceil(n / 2 ** m)))
        out.append((0, length))
        out.append((n - length, n))
    return out


def fgs_search(objective: Callable, n: int, fgs: FgsParams) -> np.ndarray:
    """Greedy slice-wise grid search from beta = 0.

    ``objective`` maps a (Z+1, n) batch of candidates to Z+1 values. At every
    slice the best grid value is kept; ties go to the lowest grid value.
    """
    beta = np.zeros(n)
    grid = fgs.grid
    for lo, hi in fgs_slices(n, fgs):
        cands = np.repeat(beta[None, :], grid.size, axis=0)
        cands[:, lo:hi] = grid[:, None]
        vals = np.asarray(objective(cands), float)
        beta = cands[int(np.argmin(vals))]
    return beta


def fgs_initialize(ctx: HrisContext, fgs: FgsParams, pen: PenaltyParams) -> np.ndarray:
    return fgs_search(lambda b: penalty_objective(b, ctx, pen), ctx.num_elements, fgs)


class NonFiniteObjectiveError(FloatingPointError):
    pass


def adam(beta0, fun: Callable, grad: Callable, agd: AgdParams):
    """Adam descent on ``fun`` over the box [0, 1]^N.

    Each step is projected onto the box. A step that raises ``fun`` is
    rejected and the learning rate is halved; accepted steps let it recover
    toward ``agd.learning_rate``. The trace holds ``fun`` at the current
    iterate after every iteration (first entry: the clamped start), so it is
    non-increasing. Returns ``(beta, trace, path)`` with ``path[i]`` the
    iterate behind ``trace[i]``.
    """
    beta = np.clip(np.asarray(beta0, float), 0.0, 1.0)
    f = fun(beta)
    if not np.isfinite(f):
        raise NonFiniteObjectiveError(f"non-finite objective at the start point: beta={beta}")
    m = np.zeros_like(beta)
    v = np.zeros_like(beta)
    b1, b2 = agd.adam_beta1, agd.adam_beta2
    lr = agd.learning_rate
    trace = [f]
    path = [beta]
    for i in range(1, agd.max_iters + 1):
        g = grad(beta)
        if not np.all(np.isfinite(g)):
            raise NonFiniteObjectiveError(f"non-finite gradient at iteration {i}: beta={beta}")
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        step = (m / (1 - b1 ** i)) / (np.sqrt(v / (1 - b2 ** i)) + agd.adam_eps)
        cand = np.clip(beta - lr * step, 0.0, 1.0)
        fc = fun(cand)
        if not np.isfinite(fc):
            raise NonFiniteObjectiveError(f"non-finite objective at iteration {i}: beta={cand}")
        if fc <= f:
            beta, f = cand, fc
            lr = min(lr * agd.lr_recover, agd.learning_rate)
        else:
            lr *= agd.lr_backoff
        trace.append(f)
        path.append(beta)
    return beta, np.array(trace), np.array(path)


def agd_descend(beta0, ctx: HrisContext, agd: AgdParams, pen: PenaltyParams):
    """Adam descent on the penalized objective; returns ``(beta, trace, path)``."""
    return adam(beta0, lambda b: penalty_objective(b, ctx, pen),
                lambda b: gradient(b, ctx, pen), agd)


@dataclass
class HrisResult:
    beta: np.ndarray
    report: SinrReport
    f_value: float
    beta_init: np.ndarray
    trace: np.ndarray = field(repr=False)
    violated: bool = False
    path: Optional[np.ndarray] = field(default=None, repr=False)


def optimize_hris(ctx: HrisContext, pen: PenaltyParams, agd: AgdParams = AgdParams(),
                  fgs: Optional[FgsParams] = FgsParams(), beta0=None, warm=None) -> HrisResult:
    """Grid-search start followed by Adam descent.

    ``beta0`` overrides the start point; ``fgs=None`` starts from zero instead
    of the grid search. ``warm`` (e.g. the previous outer iterate) replaces the
    start point when its objective is lower.
    """
    if beta0 is None:
        beta0 = fgs_initialize(ctx, fgs, pen) if fgs is not None else np.zeros(ctx.num_elements)
    beta0 = np.asarray(beta0, float)
    if warm is not None:
        warm = np.clip(np.asarray(warm, float), 0.0, 1.0)
        if penalty_objective(warm, ctx, pen) < penalty_objective(beta0, ctx, pen):
            beta0 = warm
    beta, trace, path = agd_descend(beta0, ctx, agd, pen)
    report = ctx.report(beta, pen.gamma_c)
    violated = not report.comm_satisfied(1e-3)
    if violated:
        log.info("HRIS step leaves min eta_c=%.4g below gamma_c=%.4g", report.min_eta_c, pen.gamma_c)
    return HrisResult(beta, report, float(trace[-1]), beta0, trace, violated, path)
