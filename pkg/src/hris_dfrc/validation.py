"""Invariant suites shared by the ``validate`` command and the test-suite.

Each suite draws random designs on given channels, compares two independent
routes to the same quantity and reports the worst deviation against a
tolerance.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from .hris_opt import HrisContext, PenaltyParams, gradient, penalty_objective
from .model import (Beamformer, HrisConfig, build_propagation_matrices, cascaded_channel,
                    cascaded_radar, sinr_comm_beta, sinr_comm_w, sinr_radar, sinr_radar_beta)
from .monte_carlo import monte_carlo_stats
from .scene import Channels


@dataclass
class CheckResult:
    name: str
    worst: float
    tolerance: float
    cases: int
    detail: str = ""

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.worst) and self.worst <= self.tolerance)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"{status} {self.name}: worst={self.worst:.3e} tol={self.tolerance:.1e} cases={self.cases}{extra}"


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_channels(rng, n: int, t: int, k: int) -> Channels:
    """Unit-variance Gaussian channels (steering vectors included)."""
    a_h = crandn(rng, n)
    return Channels(G=crandn(rng, n, t), H=crandn(rng, k, n), a_t=crandn(rng, t), a_h=a_h,
                    a_r=crandn(rng, n))


def random_beamformer(rng, t: int, k: int) -> Beamformer:
    return Beamformer.from_matrix(crandn(rng, t, k + 1))


def _rel(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    scale = np.maximum(np.abs(b), np.finfo(float).tiny)
    return float(np.max(np.abs(a - b) / scale)) if a.size else 0.0


def proposition_equivalence(channels_factory: Callable, rng, cases: int, sigma2: float = 1.0,
                            tol: float = 1e-9) -> List[CheckResult]:
    """W-form versus beta-form SINRs on random (channels, W, beta)."""
    worst_c = worst_r = 0.0
    for _ in range(cases):
        ch = channels_factory(rng)
        bf = random_beamformer(rng, ch.num_antennas, ch.num_users)
        beta = rng.random(ch.num_elements)
        hris = HrisConfig(beta)
        m = build_propagation_matrices(ch, bf)
        eta_c_w = sinr_comm_w(bf, cascaded_channel(ch, hris), sigma2)
        eta_c_b = sinr_comm_beta(beta, m, sigma2)
        worst_c = max(worst_c, _rel(eta_c_b, eta_c_w))
        eta_r_w = sinr_radar(bf, ch, hris, sigma2)
        eta_r_b = sinr_radar_beta(beta, m, sigma2)
        worst_r = max(worst_r, _rel(eta_r_b, eta_r_w))
    return [CheckResult("comm SINR, W-form vs beta-form (relative)", worst_c, tol, cases),
            CheckResult("radar SINR, W-form vs beta-form (relative)", worst_r, tol, cases)]


def quadratic_identities(channels_factory: Callable, rng, cases: int, tol: float = 1e-10,
                         corrupt_c2: bool = False) -> List[CheckResult]:
    """The beta quadratic forms against direct products of the cascaded channels.

    ``corrupt_c2`` perturbs the radar-leakage matrix; it exists so the suite
    can be shown to catch a wrong matrix.
    """
    w3 = w2 = w1 = wa = 0.0
    for _ in range(cases):
        ch = channels_factory(rng)
        bf = random_beamformer(rng, ch.num_antennas, ch.num_users)
        beta = rng.random(ch.num_elements)
        hris = HrisConfig(beta)
        m = build_propagation_matrices(ch, bf)
        C2 = m.C2 * (1.0 + 1e-3) if corrupt_c2 else m.C2
        h_e = cascaded_channel(ch, hris)
        for k in range(ch.num_users):
            direct = abs(h_e[k] @ bf.W_c[:, k]) ** 2
            w3 = max(w3, abs(np.real(beta @ m.C3[k] @ beta) - direct))
        a_hat, A_r = cascaded_radar(ch, hris)
        leak = np.sum(np.abs(a_hat.conj() @ bf.W) ** 2)
        w2 = max(w2, abs(np.real(beta @ C2 @ beta) - leak))
        u = 1.0 - beta
        sig = abs(A_r) ** 2 * abs(np.vdot(ch.a_t, bf.w_r)) ** 2
        w1 = max(w1, abs(np.real(u @ m.C1 @ u) - sig))
        wa = max(wa, abs(np.vdot(u, ch.a_r) - A_r))
    return [CheckResult("user power: beta^T C3 beta = |h_hat^H w_k|^2", w3, tol, cases),
            CheckResult("radar leakage: beta^T C2 beta = a_hat^H W W^H a_hat", w2, tol, cases),
            CheckResult("echo power: (1-beta)^T C1 (1-beta) = |A_r|^2 |a_t^H w_r|^2", w1, tol, cases),
            CheckResult("receive factor: A_r = (1-beta)^H a_r", wa, tol, cases)]


def finite_difference_error(ctx: HrisContext, pen: PenaltyParams, beta, step: float = 1e-5) -> float:
    """Worst per-coordinate relative error of the analytic gradient.

    Coordinates whose derivative is tiny compared with the largest one are
    judged against ``1e-3 * max|g|`` so cancellation noise does not dominate.
    """
    g = gradient(beta, ctx, pen)
    eye = np.eye(beta.size) * step
    fd = np.array([(penalty_objective(beta + e, ctx, pen) - penalty_objective(beta - e, ctx, pen))
                   / (2 * step) for e in eye])
    floor = 1e-3 * max(np.abs(g).max(), np.finfo(float).tiny)
    return float(np.max(np.abs(g - fd) / np.maximum(np.abs(g), floor)))


def random_penalty(rng) -> PenaltyParams:
    return PenaltyParams(lambda1=float(10 ** rng.uniform(-1, 2)), lambda2=float(10 ** rng.uniform(-1, 1)),
                         alpha1=float(rng.uniform(1.5, 6)), alpha2=int(2 * rng.integers(1, 6)),
                         gamma_c=float(10 ** rng.uniform(-1, 1)))


def gradient_check(channels_factory: Callable, rng, cases: int, tol: float = 1e-5,
                   sigma2: float = 1.0) -> CheckResult:
    worst = 0.0
    for _ in range(cases):
        ch = channels_factory(rng)
        bf = random_beamformer(rng, ch.num_antennas, ch.num_users)
        ctx = HrisContext.from_design(ch, bf, sigma2)
        beta = rng.uniform(0.05, 0.95, ch.num_elements)
        worst = max(worst, finite_difference_error(ctx, random_penalty(rng), beta))
    return CheckResult("penalty gradient vs central differences (relative)", worst, tol, cases)


def monte_carlo_check(channels: Channels, beamformer: Beamformer, hris: HrisConfig, sigma2: float,
                      n_samples: int, seed: int = 0, rtol: Optional[float] = None) -> List[CheckResult]:
    """Empirical against closed-form SINRs.

    With ``rtol`` the relative error is checked; otherwise the deviation in
    units of the estimator's standard error is checked against 3.
    """
    mc = monte_carlo_stats(channels, beamformer, hris, sigma2, n_samples, seed)
    eta_r = sinr_radar(beamformer, channels, hris, sigma2)
    eta_c = sinr_comm_w(beamformer, cascaded_channel(channels, hris), sigma2)
    if rtol is not None:
        return [CheckResult("Monte-Carlo radar SINR (relative)", _rel(mc.report.eta_r, eta_r), rtol, n_samples),
                CheckResult("Monte-Carlo comm SINR (relative)", _rel(mc.report.eta_c, eta_c), rtol, n_samples)]

    def z(est, ref, se):
        est, ref, se = (np.atleast_1d(np.asarray(x, float)) for x in (est, ref, se))
        return float(np.max(np.abs(est - ref) / np.maximum(se, np.finfo(float).tiny)))

    return [CheckResult("Monte-Carlo radar SINR (standard errors)", z(mc.report.eta_r, eta_r, mc.eta_r_stderr),
                        3.0, n_samples),
            CheckResult("Monte-Carlo comm SINR (standard errors)", z(mc.report.eta_c, eta_c, mc.eta_c_stderr),
                        3.0, n_samples)]
