"""Alternating optimization: HRIS power splitting, then BS beams, until f settles."""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .bs_opt import CommInfeasibleError, FeasibilityProblem, solve_bs
from .hris_opt import (AgdParams, FgsParams, HrisContext, PenaltyParams, optimize_hris,
                       penalty_objective)
from .model import Beamformer, CovarianceSet, HrisConfig, SinrReport, evaluate
from .scene import Channels, Scene, build_channels

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimizerConfig:
    """Everything the alternating loop needs beyond the scene.

    ``gamma_c`` is linear; ``penalty.gamma_c`` is ignored in favour of it.
    """

    gamma_c: float = 10 ** 0.5
    penalty: PenaltyParams = PenaltyParams()
    agd: AgdParams = AgdParams()
    fgs: Optional[FgsParams] = FgsParams()
    epsilon: float = 1e-3
    max_outer: int = 20
    bisect_tol: float = 1e-9
    bisect_rtol: float = 1e-7
    solver: str = "CLARABEL"
    lambda1_growth: float = 10.0
    # Replacement for the grid-search + descent HRIS step:
    # (context, penalty, warm_beta) -> HrisResult.
    hris_solver: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_outer < 1:
            raise ValueError("max_outer must be >= 1")
        if not self.gamma_c >= 0:
            raise ValueError("gamma_c must be non-negative")

    def penalty_with(self, lambda1: float) -> PenaltyParams:
        return dataclasses.replace(self.penalty, gamma_c=self.gamma_c, lambda1=lambda1)


@dataclass
class IterationRecord:
    iteration: int
    f_value: float
    report: SinrReport
    gamma_r_star: float
    rank_ratios: np.ndarray
    lambda1: float
    comm_infeasible: bool = False
    hris_trace: np.ndarray = field(default=None, repr=False)
    hris_context: Optional[HrisContext] = field(default=None, repr=False)
    hris_path: Optional[np.ndarray] = field(default=None, repr=False)
    bisection: Optional[object] = field(default=None, repr=False)


@dataclass
class AlternatingState:
    channels: Channels
    sigma2: float
    p_t: float
    iteration: int
    beta: np.ndarray
    beamformer: Beamformer
    covs: CovarianceSet
    f_value: float
    lambda1: float
    epsilon: float
    max_outer: int
    records: List[IterationRecord] = field(default_factory=list)

    @property
    def history(self) -> List[SinrReport]:
        return [r.report for r in self.records]


def initial_beamformer(channels: Channels, p_t: float) -> Beamformer:
    """Equal split over K+1 constant-modulus beams.

    Each user beam is phase-matched to its full-reflection cascaded channel,
    the radar beam to the target steering vector. Every entry has magnitude
    sqrt(p_t / (K+1)), so each antenna radiates exactly ``p_t``.
    """
    K = channels.num_users
    cascade = channels.H @ channels.G
    dirs = np.column_stack([np.conj(cascade).T, channels.a_t]) if K else channels.a_t[:, None]
    phases = np.exp(1j * np.angle(dirs))
    return Beamformer.from_matrix(phases * np.sqrt(p_t / (K + 1)))


def objective_at(state_channels: Channels, beamformer: Beamformer, beta, sigma2, pen) -> float:
    ctx = HrisContext.from_design(state_channels, beamformer, sigma2)
    return penalty_objective(beta, ctx, pen)


def initialize(scene: Scene, config: OptimizerConfig, channels: Optional[Channels] = None,
               beta=None, beamformer: Optional[Beamformer] = None) -> AlternatingState:
    """Start state: beta = 0 and the equal-split beams unless a warm design is given."""
    channels = build_channels(scene) if channels is None else channels
    p_t, sigma2 = scene.per_antenna_power, scene.noise_power
    beta = np.zeros(channels.num_elements) if beta is None else np.asarray(beta, float)
    bf = initial_beamformer(channels, p_t) if beamformer is None else beamformer
    lam = config.penalty.lambda1
    f = objective_at(channels, bf, beta, sigma2, config.penalty_with(lam))
    return AlternatingState(channels, sigma2, p_t, 0, beta, bf, bf.covariances(), f, lam,
                            config.epsilon, config.max_outer)


def step(state: AlternatingState, config: OptimizerConfig) -> AlternatingState:
    """One outer iteration: HRIS step with W fixed, then BS step with beta fixed."""
    ch, sigma2 = state.channels, state.sigma2
    pen = config.penalty_with(state.lambda1)
    ctx = HrisContext.from_design(ch, state.beamformer, sigma2)
    warm = state.beta if state.iteration > 0 else None
    if config.hris_solver is not None:
        hres = config.hris_solver(ctx, pen, warm)
    else:
        hres = optimize_hris(ctx, pen, config.agd, config.fgs, warm=warm)
    beta = hres.beta
    hris = HrisConfig(beta)

    problem = FeasibilityProblem.from_design(ch, hris, config.gamma_c, sigma2, state.p_t)
    lam_next = state.lambda1
    try:
        sol = solve_bs(problem, incumbent=state.beamformer, tol=config.bisect_tol,
                       rtol=config.bisect_rtol, solver=config.solver)
        bf, covs, g_star, ratios, infeasible = (sol.beamformer, sol.covs, sol.gamma_r_star,
                                                sol.rank_ratios, False)
        bisection = sol.bisection
    except CommInfeasibleError:
        log.warning("iteration %d: comm constraints unsatisfiable at current beta; "
                    "keeping W and raising lambda1 to %g", state.iteration + 1,
                    state.lambda1 * config.lambda1_growth)
        bf, covs, g_star, infeasible = state.beamformer, state.covs, float("nan"), True
        ratios = np.full(ch.num_users + 1, np.nan)
        bisection = None
        lam_next = state.lambda1 * config.lambda1_growth

    f = objective_at(ch, bf, beta, sigma2, pen)
    report = evaluate(ch, hris, bf, sigma2, config.gamma_c)
    rec = IterationRecord(state.iteration + 1, f, report, g_star, ratios, state.lambda1,
                          infeasible, hres.trace, ctx, hres.path, bisection)
    return dataclasses.replace(state, iteration=state.iteration + 1, beta=beta, beamformer=bf,
                               covs=covs, f_value=f, lambda1=lam_next,
                               records=state.records + [rec])


@dataclass
class RunResult:
    beamformer: Beamformer
    beta: np.ndarray
    records: List[IterationRecord]
    converged: bool
    report: SinrReport
    from_warm_start: bool = False

    @property
    def history(self) -> List[SinrReport]:
        return [r.report for r in self.records]

    @property
    def iterations(self) -> int:
        return len(self.records)


def _rank_key(report: SinrReport, f_value: float):
    """Sort key: comm-feasible designs first, then radar SINR, then lower f."""
    ok = report.comm_satisfied(1e-3)
    return (ok, report.eta_r if ok else -f_value)


def run_from(state: AlternatingState, config: OptimizerConfig, warm_candidate: bool = False) -> RunResult:
    """Iterate ``step`` from ``state``.

    The returned design is the best iterate (comm-feasible first, then highest
    radar SINR). With ``warm_candidate`` the start design competes too, so a
    warm-started run never returns something worse than its start.
    """
    designs = []
    if warm_candidate:
        start = evaluate(state.channels, HrisConfig(state.beta), state.beamformer, state.sigma2,
                         config.gamma_c)
        designs.append((state.beta, state.beamformer, start, state.f_value))
    converged = False
    while state.iteration < state.max_outer:
        prev_f, prev_lam = state.f_value, state.lambda1
        state = step(state, config)
        rec = state.records[-1]
        designs.append((state.beta, state.beamformer, rec.report, rec.f_value))
        log.info("outer %d: f=%.6g eta_r=%.6g min eta_c=%.6g", rec.iteration, rec.f_value,
                 rec.report.eta_r, rec.report.min_eta_c)
        if rec.iteration >= 2:
            drop = state.records[-2].report.eta_r - rec.report.eta_r
            if drop > 1e-6 * max(1.0, abs(rec.report.eta_r)):
                log.info("outer %d: radar SINR fell by %.3g", rec.iteration, drop)
        # A lambda1 change redefines f, so that comparison does not count.
        if (not rec.comm_infeasible and state.lambda1 == prev_lam
                and abs(state.f_value - prev_f) < state.epsilon):
            converged = True
            break
    if not converged:
        log.warning("no convergence in %d outer iterations; returning the best iterate",
                    state.max_outer)
    i = max(range(len(designs)), key=lambda j: _rank_key(designs[j][2], designs[j][3]))
    beta, bf, report, _ = designs[i]
    return RunResult(bf, beta, state.records, converged, report, warm_candidate and i == 0)


def run(scene: Scene, config: OptimizerConfig, channels: Optional[Channels] = None,
        beta=None, beamformer: Optional[Beamformer] = None) -> RunResult:
    """Alternate until |f(t) - f(t-1)| < epsilon or ``max_outer`` iterations.

    ``beta`` and ``beamformer`` give a warm start (both required together).
    """
    if (beta is None) != (beamformer is None):
        raise ValueError("a warm start needs both beta and beamformer")
    state = initialize(scene, config, channels, beta, beamformer)
    return run_from(state, config, warm_candidate=beta is not None)
