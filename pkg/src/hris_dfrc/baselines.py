"""Reference systems and a genetic-algorithm HRIS optimizer for comparisons.

BS_ONLY: no surface; users are served over direct line-of-sight links and the
radar SINR is ``a_t^H R_r a_t / sigma2`` (two-way gain of unit-modulus
steering, no interference path).
BS_RIS: the surface reflects everything (beta = 1) and the echo is picked up by
one ideal element at the surface center; the reflected leakage still
interferes with that receiver.
"""
from __future__ import annotations

import dataclasses
import enum
import time
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .bs_opt import FeasibilityProblem, design_sinrs, solve_bs
from .hris_opt import HrisContext, HrisResult, PenaltyParams, penalty_objective
from .model import Beamformer, HrisConfig, SinrReport
from .orchestrator import IterationRecord, OptimizerConfig, run
from .scene import Channels, Scene, build_channels, direct_user_channels, single_element_response


class BaselineKind(enum.Enum):
    HRIS = "HRIS"
    BS_ONLY = "BS_ONLY"
    BS_RIS = "BS_RIS"
    HRIS_GA = "HRIS_GA"
    HRIS_AGD_NO_FGS = "HRIS_AGD_NO_FGS"


def bs_only_problem(scene: Scene, channels: Channels, gamma_c: float) -> FeasibilityProblem:
    T = channels.num_antennas
    return FeasibilityProblem(
        a_t=np.asarray(channels.a_t), a_bar_h=np.zeros(T, complex), A_bar_r=1.0 + 0j,
        h_hat=direct_user_channels(scene), gamma_r=0.0, gamma_c=gamma_c,
        sigma2=scene.noise_power, p_t=scene.per_antenna_power)


def bs_ris_problem(scene: Scene, channels: Channels, gamma_c: float) -> FeasibilityProblem:
    hris = HrisConfig.uniform(channels.num_elements, 1.0)
    base = FeasibilityProblem.from_design(channels, hris, gamma_c, scene.noise_power,
                                          scene.per_antenna_power)
    return dataclasses.replace(base, A_bar_r=single_element_response(scene, scene.target))


def _solve_fixed(problem: FeasibilityProblem, config: OptimizerConfig,
                 incumbent: Optional[Beamformer]):
    sol = solve_bs(problem, incumbent=incumbent, tol=config.bisect_tol,
                   rtol=config.bisect_rtol, solver=config.solver)
    eta_r, eta_c = design_sinrs(problem, sol.beamformer)
    return sol, SinrReport(eta_r=float(eta_r), eta_c=np.asarray(eta_c), gamma_c=problem.gamma_c)


def solve_bs_only(scene: Scene, config: OptimizerConfig, incumbent: Optional[Beamformer] = None,
                  channels: Optional[Channels] = None):
    """BS beams only, direct links; returns ``(beamformer, report, bs_solution)``."""
    channels = build_channels(scene) if channels is None else channels
    sol, report = _solve_fixed(bs_only_problem(scene, channels, config.gamma_c), config, incumbent)
    return sol.beamformer, report, sol


def solve_bs_ris(scene: Scene, config: OptimizerConfig, incumbent: Optional[Beamformer] = None,
                 channels: Optional[Channels] = None):
    """Fully reflecting surface plus side receiver; returns ``(beamformer, hris, report, bs_solution)``."""
    channels = build_channels(scene) if channels is None else channels
    hris = HrisConfig.uniform(channels.num_elements, 1.0)
    sol, report = _solve_fixed(bs_ris_problem(scene, channels, config.gamma_c), config, incumbent)
    return sol.beamformer, hris, report, sol


@dataclass(frozen=True)
class GaParams:
    population: int = 100
    generations: int = 500
    mutation_rate: Optional[float] = None  # None means 1/N
    mutation_sigma: float = 0.1
    tournament: int = 2
    blend_alpha: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.population < 1 or self.generations < 0 or self.tournament < 1:
            raise ValueError("population and tournament must be >= 1, generations >= 0")


def ga_search(objective, n: int, ga: GaParams, rng: Optional[np.random.Generator] = None):
    """Real-coded GA minimizing ``objective`` (batch -> values) over [0, 1]^n.

    Tournament selection, BLX-alpha crossover, per-gene Gaussian mutation,
    clipping and one elite. Returns ``(best, best_value)``.
    """
    rng = np.random.default_rng(ga.seed) if rng is None else rng
    P = ga.population
    rate = 1.0 / n if ga.mutation_rate is None else ga.mutation_rate
    pop = np.clip(rng.random((P, n)), 0.0, 1.0)
    fit = np.asarray(objective(pop), float)
    b = int(np.argmin(fit))
    best, best_f = pop[b].copy(), fit[b]
    for _ in range(ga.generations):
        entrants = rng.integers(0, P, size=(P, 2, ga.tournament))
        winners = np.take_along_axis(entrants, np.argmin(fit[entrants], axis=-1)[..., None], -1)[..., 0]
        p1, p2 = pop[winners[:, 0]], pop[winners[:, 1]]
        lo, hi = np.minimum(p1, p2), np.maximum(p1, p2)
        span = hi - lo
        child = lo - ga.blend_alpha * span + rng.random((P, n)) * (1 + 2 * ga.blend_alpha) * span
        mutate = rng.random((P, n)) < rate
        child = child + mutate * rng.normal(0.0, ga.mutation_sigma, (P, n))
        child = np.clip(child, 0.0, 1.0)
        child[0] = best
        pop = child
        fit = np.asarray(objective(pop), float)
        b = int(np.argmin(fit))
        if fit[b] < best_f:
            best, best_f = pop[b].copy(), fit[b]
    return best, float(best_f)


def ga_optimize_hris(ctx: HrisContext, pen: PenaltyParams, ga: GaParams = GaParams(),
                     rng: Optional[np.random.Generator] = None) -> np.ndarray:
    best, _ = ga_search(lambda b: penalty_objective(b, ctx, pen), ctx.num_elements, ga, rng)
    return best


def ga_hris_solver(ga: GaParams = GaParams()):
    """HRIS step for the alternating loop that uses the GA.

    One generator is shared by all outer iterations so a run is reproducible
    from ``ga.seed``; the warm iterate replaces the GA result when better.
    """
    rng = np.random.default_rng(ga.seed)

    def solve(ctx: HrisContext, pen: PenaltyParams, warm) -> HrisResult:
        beta = ga_optimize_hris(ctx, pen, ga, rng)
        f = penalty_objective(beta, ctx, pen)
        if warm is not None and penalty_objective(warm, ctx, pen) < f:
            beta, f = np.asarray(warm, float), penalty_objective(warm, ctx, pen)
        report = ctx.report(beta, pen.gamma_c)
        return HrisResult(beta, report, f, beta, np.array([f]),
                          not report.comm_satisfied(1e-3), beta[None])

    return solve


@dataclass
class SystemResult:
    kind: BaselineKind
    beamformer: Beamformer
    beta: Optional[np.ndarray]
    report: SinrReport
    converged: bool
    outer_iters: int
    wall_ms: float
    records: List[IterationRecord]


def system_config(kind: BaselineKind, config: OptimizerConfig, ga: GaParams = GaParams()) -> OptimizerConfig:
    if kind is BaselineKind.HRIS_GA:
        return dataclasses.replace(config, hris_solver=ga_hris_solver(ga))
    if kind is BaselineKind.HRIS_AGD_NO_FGS:
        return dataclasses.replace(config, fgs=None)
    return config


def solve_system(kind: BaselineKind, scene: Scene, config: OptimizerConfig,
                 warm: Optional[SystemResult] = None, ga: GaParams = GaParams(),
                 channels: Optional[Channels] = None) -> SystemResult:
    """Run one system on one scene; ``warm`` is a previous result for the same system."""
    t0 = time.perf_counter()
    channels = build_channels(scene) if channels is None else channels
    inc = warm.beamformer if warm is not None else None
    if inc is not None:
        # Rescale to this scene's per-antenna power so the warm design stays admissible.
        p_old = np.mean(inc.antenna_powers())
        inc = inc.scaled(np.sqrt(scene.per_antenna_power / p_old)) if p_old > 0 else None
    if kind is BaselineKind.BS_ONLY:
        bf, report, _ = solve_bs_only(scene, config, inc, channels)
        out = (bf, None, report, True, 1, [])
    elif kind is BaselineKind.BS_RIS:
        bf, hris, report, _ = solve_bs_ris(scene, config, inc, channels)
        out = (bf, hris.beta, report, True, 1, [])
    else:
        cfg = system_config(kind, config, ga)
        beta = warm.beta if (warm is not None and inc is not None) else None
        res = run(scene, cfg, channels, beta=beta, beamformer=inc if beta is not None else None)
        out = (res.beamformer, res.beta, res.report, res.converged, res.iterations, res.records)
    wall = (time.perf_counter() - t0) * 1e3
    return SystemResult(kind, *out[:3], out[3], out[4], wall, out[5])
