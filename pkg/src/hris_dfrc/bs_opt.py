"""BS transmit design for a fixed HRIS configuration.

The radar-SINR maximization is solved by bisection over a trial radar SINR,
each trial being a semidefinite-relaxed feasibility problem over the
sub-covariances ``R_1..R_{K+1}``. Beams are recovered in closed form from the
feasible covariances.
"""
from __future__ import annotations

import enum
import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import cvxpy as cp
import numpy as np

from .model import (
    Beamformer,
    CovarianceSet,
    HrisConfig,
    cascaded_channel,
    cascaded_radar,
    sinr_comm_w,
    sinr_radar_cov,
)
from .scene import Channels

log = logging.getLogger(__name__)

DELTA_FEAS = 1e-7
# Eigenvalues below this fraction of the largest one count as zero when
# reading off block ranks.
RANK_RTOL = 1e-7


class FeasibilityStatus(enum.Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    NUMERICAL_FAILURE = "numerical_failure"


class CommInfeasibleError(RuntimeError):
    """The communication constraints cannot be met even with zero radar SINR."""


@dataclass(frozen=True)
class FeasibilityProblem:
    """One trial of the relaxed design problem.

    ``h_hat`` holds the cascaded user channels as rows (``h_hat_k^H``), the
    same layout as ``cascaded_channel``. ``a_bar_h`` is the T-vector whose
    quadratic form with ``R`` gives the radar leakage, and ``A_bar_r`` scales
    the echo on reception.
    """

    a_t: np.ndarray
    a_bar_h: np.ndarray
    A_bar_r: complex
    h_hat: np.ndarray
    gamma_r: float
    gamma_c: float
    sigma2: float
    p_t: float

    def __post_init__(self):
        if self.gamma_r < 0:
            raise ValueError("gamma_r must be non-negative")
        if self.h_hat.shape[0] and not self.gamma_c > 0:
            raise ValueError("gamma_c must be positive")
        h = np.atleast_2d(np.asarray(self.h_hat, complex))
        if h.size == 0:
            h = np.zeros((0, np.asarray(self.a_t).shape[0]), complex)
        object.__setattr__(self, "h_hat", h)

    @property
    def num_antennas(self) -> int:
        return np.asarray(self.a_t).shape[0]

    @property
    def num_users(self) -> int:
        return self.h_hat.shape[0]

    def with_gamma_r(self, gamma_r: float) -> "FeasibilityProblem":
        return replace(self, gamma_r=float(gamma_r))

    @classmethod
    def from_design(cls, channels: Channels, hris: HrisConfig, gamma_c: float, sigma2: float,
                    p_t: float, gamma_r: float = 0.0) -> "FeasibilityProblem":
        a_hat, A_r = cascaded_radar(channels, hris)
        return cls(
            a_t=np.asarray(channels.a_t),
            a_bar_h=a_hat,
            A_bar_r=A_r,
            h_hat=cascaded_channel(channels, hris),
            gamma_r=gamma_r,
            gamma_c=gamma_c,
            sigma2=sigma2,
            p_t=p_t,
        )

    def radar_ceiling(self) -> float:
        """Interference-free radar SINR bound with all power on the matched beam."""
        a = np.asarray(self.a_t)
        T = self.num_antennas
        return abs(self.A_bar_r) ** 2 * self.p_t * T * np.vdot(a, a).real / self.sigma2

    # Constraint functionals, normalized so that each is >= 0 when satisfied and
    # reads roughly as a relative SINR slack.
    def coefficient_matrices(self):
        """Return ``(A, offsets, weights)`` describing the SINR constraints.

        Constraint ``m`` reads ``sum_i tr(A[m, i] R_i) - offsets[m] >= 0``
        with ``R_i`` the sub-covariances; ``weights[m]`` normalizes it.
        """
        T, K = self.num_antennas, self.num_users
        A = np.zeros((K + 1, K + 1, T, T), complex)
        offsets = np.zeros(K + 1)
        weights = np.ones(K + 1)
        for k in range(K):
            h = self.h_hat[k].conj()
            hh = np.outer(h, h.conj()) / self.sigma2
            A[k, :] = -hh
            A[k, k] = hh / self.gamma_c
            offsets[k] = 1.0
        a = np.asarray(self.a_t)
        ab = np.asarray(self.a_bar_h)
        s = abs(self.A_bar_r) ** 2 / self.sigma2
        g = self.gamma_r
        A[K, :] = -s * g * np.outer(ab, ab.conj())
        A[K, K] += s * np.outer(a, a.conj())
        offsets[K] = g
        weights[K] = 1.0 + g
        return A, offsets, weights

    def constraint_values(self, covs: CovarianceSet) -> np.ndarray:
        """Normalized slacks of all SINR constraints (negative means violated)."""
        A, offsets, weights = self.coefficient_matrices()
        vals = np.real(np.einsum("mitu,iut->m", A, covs.blocks))
        return (vals - offsets) / weights


@dataclass
class FeasibilityResult:
    status: FeasibilityStatus
    covs: Optional[CovarianceSet] = None
    residual: float = np.inf
    margin: float = -np.inf
    iterations: int = 0

    @property
    def feasible(self) -> bool:
        return self.status is FeasibilityStatus.FEASIBLE


def polish_covariances(blocks: np.ndarray, p_t: float) -> np.ndarray:
    """Hermitize, clip negative eigenvalues and rescale so ``diag(R) = p_t`` exactly."""
    blocks = 0.5 * (blocks + np.conj(np.transpose(blocks, (0, 2, 1))))
    w, V = np.linalg.eigh(blocks)
    w = np.clip(w, 0.0, None)
    blocks = np.einsum("bij,bj,bkj->bik", V, w, V.conj())
    d = np.real(np.einsum("bii->i", blocks))
    scale = np.sqrt(p_t / np.maximum(d, np.finfo(float).tiny))
    return blocks * scale[None, :, None] * scale[None, None, :]


def feasibility_residual(problem: FeasibilityProblem, covs: CovarianceSet) -> float:
    viol = np.clip(-problem.constraint_values(covs), 0.0, None)
    diag_err = np.abs(np.real(np.diag(covs.R)) - problem.p_t).max() / problem.p_t
    neg_eig = max(0.0, -covs.min_eigenvalue()) / problem.p_t
    return float(max(viol.max(initial=0.0), diag_err, neg_eig))


class CvxpyFeasibility:
    """Margin-maximizing SDP for one base problem, parametric in ``gamma_r``.

    The compiled problem is cached on the instance, so one instance serves one
    bisection; create a fresh one per thread.
    """

    def __init__(self, base: FeasibilityProblem, solver: str = "CLARABEL",
                 delta_feas: float = DELTA_FEAS, **solver_opts):
        self.base = base
        self.solver = solver
        self.delta_feas = delta_feas
        self.solver_opts = solver_opts
        self._build()

    def _build(self):
        p = self.base
        T, K = p.num_antennas, p.num_users
        # Work with X_i = R_i / p_t so diag(sum X_i) = 1.
        X = [cp.Variable((T, T), hermitian=True) for _ in range(K + 1)]
        t = cp.Variable()
        g = cp.Parameter(nonneg=True)
        Xsum = sum(X)
        cons = [Xi >> 0 for Xi in X]
        cons.append(cp.real(cp.diag(Xsum)) == 1.0)
        cons.append(t <= 1.0)
        pt, s2 = p.p_t, p.sigma2
        for k in range(K):
            h = p.h_hat[k].conj()
            hh = np.outer(h, h.conj()) * (pt / s2)
            own = cp.real(cp.trace(hh @ X[k]))
            tot = cp.real(cp.trace(hh @ Xsum))
            cons.append(own / p.gamma_c + own - tot - 1.0 >= t)
        a = np.asarray(p.a_t)
        ab = np.asarray(p.a_bar_h)
        s = abs(p.A_bar_r) ** 2 * pt / s2
        sig = cp.real(cp.trace(s * np.outer(a, a.conj()) @ X[K]))
        leak = cp.real(cp.trace(s * np.outer(ab, ab.conj()) @ Xsum))
        cons.append(sig - g * leak - g >= t + g * t)
        self._X, self._t, self._gamma = X, t, g
        self._problem = cp.Problem(cp.Maximize(t), cons)

    def check(self, gamma_r: float) -> FeasibilityResult:
        problem = self.base.with_gamma_r(gamma_r)
        self._gamma.value = float(gamma_r)
        try:
            with warnings.catch_warnings():
                # Inaccurate statuses are classified below; the generic warning adds nothing.
                warnings.filterwarnings("ignore", message="Solution may be inaccurate")
                self._problem.solve(solver=self.solver, **self.solver_opts)
        except cp.error.SolverError as exc:
            log.debug("solver failure at gamma_r=%g: %s", gamma_r, exc)
            return FeasibilityResult(FeasibilityStatus.NUMERICAL_FAILURE)
        stats = self._problem.solver_stats
        iters = int(stats.num_iters or 0) if stats is not None else 0
        status = self._problem.status
        if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
            # t is unbounded below only if the power constraints alone fail, which cannot happen.
            return FeasibilityResult(FeasibilityStatus.NUMERICAL_FAILURE, iterations=iters)
        if status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE) or self._t.value is None:
            return FeasibilityResult(FeasibilityStatus.NUMERICAL_FAILURE, iterations=iters)
        margin = float(self._t.value)
        blocks = np.stack([Xi.value for Xi in self._X]) * self.base.p_t
        covs = CovarianceSet(polish_covariances(blocks, self.base.p_t))
        residual = feasibility_residual(problem, covs)
        ok = margin >= -self.delta_feas and residual <= self.delta_feas
        return FeasibilityResult(
            FeasibilityStatus.FEASIBLE if ok else FeasibilityStatus.INFEASIBLE,
            covs=covs if ok else None,
            residual=residual,
            margin=margin,
            iterations=iters,
        )


def check_feasibility(problem: FeasibilityProblem, solver: str = "CLARABEL",
                      delta_feas: float = DELTA_FEAS) -> FeasibilityResult:
    return CvxpyFeasibility(problem, solver=solver, delta_feas=delta_feas).check(problem.gamma_r)


@dataclass
class BisectionTrial:
    gamma_r: float
    status: FeasibilityStatus
    margin: float
    iterations: int


@dataclass
class BisectionResult:
    gamma_r: float
    covs: CovarianceSet
    lo: float
    hi: float
    trials: list = field(default_factory=list)

    @property
    def numerical_failures(self) -> int:
        return sum(t.status is FeasibilityStatus.NUMERICAL_FAILURE for t in self.trials)


def bisect_gamma_r(check: Callable[[float], FeasibilityResult], lo: float, hi: float,
                   tol: float = 1e-3, rtol: float = 0.0, max_iter: int = 200) -> BisectionResult:
    """Largest feasible trial value, to within ``max(tol, rtol * lo)``.

    ``check`` must be monotone: feasible at ``g`` implies feasible below ``g``.
    ``lo`` must be feasible; a numerical failure counts as infeasible.
    """
    trials = []

    def run(g):
        res = check(g)
        trials.append(BisectionTrial(g, res.status, res.margin, res.iterations))
        return res

    first = run(lo)
    if not first.feasible:
        raise CommInfeasibleError(f"lower bracket gamma_r={lo:g} is infeasible ({first.status.value})")
    best = first.covs
    if hi <= lo:
        # Zero ceiling: no echo reaches the receiver, so nothing above lo is attainable.
        return BisectionResult(gamma_r=lo, covs=best, lo=lo, hi=lo, trials=trials)
    res = run(hi)
    expansions = 0
    while res.feasible and expansions < 60:
        # Only reachable with a caller-supplied bracket that is too tight.
        lo, best = hi, res.covs
        hi *= 2.0
        expansions += 1
        res = run(hi)
    for _ in range(max_iter):
        if hi - lo <= max(tol, rtol * lo):
            break
        mid = 0.5 * (lo + hi)
        res = run(mid)
        if res.feasible:
            lo, best = mid, res.covs
        else:
            hi = mid
    return BisectionResult(gamma_r=lo, covs=best, lo=lo, hi=hi, trials=trials)


def _hermitian_basis(r: int) -> np.ndarray:
    """Real basis (r*r elements) of the r x r Hermitian matrices."""
    basis = []
    for i in range(r):
        E = np.zeros((r, r), complex)
        E[i, i] = 1.0
        basis.append(E)
        for j in range(i + 1, r):
            E = np.zeros((r, r), complex)
            E[i, j] = E[j, i] = 1.0
            basis.append(E)
            E = np.zeros((r, r), complex)
            E[i, j], E[j, i] = 1j, -1j
            basis.append(E)
    return np.array(basis).reshape(-1, r, r)


def _factor(block, rtol=RANK_RTOL):
    w, V = np.linalg.eigh(0.5 * (block + block.conj().T))
    keep = w > rtol * max(w.max(), 0.0)
    return V[:, keep] * np.sqrt(w[keep])


def _constraint_state(problem: FeasibilityProblem, blocks: np.ndarray) -> np.ndarray:
    vals = problem.constraint_values(CovarianceSet(blocks))
    diag = np.real(np.einsum("bii->i", blocks)) / problem.p_t
    return np.concatenate([vals, diag])


def reduce_rank(problem: FeasibilityProblem, covs: CovarianceSet, max_steps: int = 100,
                tol: float = 1e-9) -> CovarianceSet:
    """Lower the block ranks while keeping every constraint value fixed.

    All constraints are linear in the blocks, so moving inside the null space
    of the constraint map keeps feasibility; each step drives one eigenvalue
    of one block to zero. Stops once no such direction exists, which happens
    at the latest when ``sum(rank_i^2) <= T + K + 1``, or when a step would
    move any normalized constraint value by more than ``tol``.
    """
    blocks = np.array(covs.blocks)
    if rank_one_diagnostic(covs).min() >= 1.0 - RANK_RTOL:
        return CovarianceSet(polish_covariances(blocks, problem.p_t))
    A, _, weights = problem.coefficient_matrices()
    A = A / weights[:, None, None, None]
    T = problem.num_antennas
    start = _constraint_state(problem, blocks)
    for _ in range(max_steps):
        factors = [_factor(b) for b in blocks]
        ranks = [F.shape[1] for F in factors]
        if any(r == 0 for r in ranks) or all(r == 1 for r in ranks):
            break
        cols, owners = [], []
        for i, F in enumerate(factors):
            for E in _hermitian_basis(ranks[i]):
                D = F @ E @ F.conj().T
                row = [np.real(np.trace(A[m, i] @ D)) for m in range(A.shape[0])]
                row += list(np.real(np.diag(D)) / problem.p_t)
                cols.append(row)
                owners.append((i, E))
        L = np.array(cols).T
        _, _, Vh = np.linalg.svd(L)
        x = Vh[-1]
        scale = max(np.abs(L).max(), np.finfo(float).tiny)
        if np.linalg.norm(L @ x) > 1e-10 * scale:
            break
        deltas = [np.zeros((r, r), complex) for r in ranks]
        for coef, (i, E) in zip(x, owners):
            deltas[i] = deltas[i] + coef * E
        top = max(np.linalg.eigvalsh(d).max() for d in deltas)
        if top <= 1e-12:
            deltas = [-d for d in deltas]
            top = max(np.linalg.eigvalsh(d).max() for d in deltas)
        trial = np.array([F @ (np.eye(r) - d / top) @ F.conj().T
                          for F, r, d in zip(factors, ranks, deltas)])
        if np.abs(_constraint_state(problem, trial) - start).max() > tol:
            break
        blocks = trial
    return CovarianceSet(polish_covariances(blocks, problem.p_t))


def block_ranks(covs: CovarianceSet, rtol: float = 1e-6) -> list:
    out = []
    for b in covs.blocks:
        w = np.linalg.eigvalsh(0.5 * (b + b.conj().T))
        out.append(int(np.sum(w > rtol * max(w.max(), 0.0))) if w.max() > 0 else 0)
    return out


def rank_one_diagnostic(covs: CovarianceSet) -> np.ndarray:
    """Largest-eigenvalue share of each block's trace (1 for rank one)."""
    out = []
    for b in covs.blocks:
        w = np.linalg.eigvalsh(0.5 * (b + b.conj().T))
        tr = w.sum()
        out.append(w.max() / tr if tr > 0 else 0.0)
    return np.array(out)


def extract_beamformers(covs: CovarianceSet, h_hat: np.ndarray, a_t: np.ndarray,
                        radar_fallback: bool = False) -> Beamformer:
    """Closed-form beams from the sub-covariances.

    ``w_k = R_k h_k / sqrt(h_k^H R_k h_k)`` and the radar beam likewise from
    the radar block and ``a_t``. ``h_hat`` rows are ``h_hat_k^H``.

    With ``radar_fallback`` a radar block orthogonal to ``a_t`` (radar SINR is
    then zero for any beam) yields its leading eigen-factor instead of an
    error, which keeps the interference seen by the users unchanged.
    """
    K = covs.num_users
    h_hat = np.atleast_2d(h_hat) if K else np.zeros((0, covs.blocks.shape[1]))
    cols = []
    for k in range(K):
        h = h_hat[k].conj()
        Rh = covs.blocks[k] @ h
        q = np.real(np.vdot(h, Rh))
        if not q > 0:
            raise ValueError(f"communication block {k} carries no power toward user {k}")
        cols.append(Rh / np.sqrt(q))
    a_t = np.asarray(a_t)
    Ra = covs.radar @ a_t
    q = np.real(np.vdot(a_t, Ra))
    W_c = np.column_stack(cols) if cols else np.zeros((a_t.shape[0], 0), complex)
    if q > 0:
        return Beamformer(W_c, Ra / np.sqrt(q))
    if not radar_fallback:
        raise ValueError("radar block carries no power toward the target")
    vals, vecs = np.linalg.eigh(covs.radar)
    return Beamformer(W_c, vecs[:, -1] * np.sqrt(max(vals[-1], 0.0)))


def enforce_antenna_power(beamformer: Beamformer, p_t: float) -> Beamformer:
    """Scale each antenna's row of W so its total power is exactly ``p_t``."""
    W = beamformer.W
    row = np.sqrt(np.sum(np.abs(W) ** 2, axis=1))
    W = W * (np.sqrt(p_t) / np.maximum(row, np.finfo(float).tiny))[:, None]
    return Beamformer.from_matrix(W)


def design_sinrs(problem: FeasibilityProblem, beamformer: Beamformer):
    """Radar and per-user SINRs of a beamformer under the problem's channels."""
    covs = beamformer.covariances()
    eta_r = sinr_radar_cov(covs, problem.a_t, problem.a_bar_h, problem.A_bar_r, problem.sigma2)
    if problem.num_users:
        eta_c = sinr_comm_w(beamformer, problem.h_hat, problem.sigma2)
    else:
        eta_c = np.zeros(0)
    return eta_r, eta_c


def design_is_feasible(problem: FeasibilityProblem, beamformer: Beamformer, rtol: float = 1e-6) -> bool:
    if beamformer.num_users != problem.num_users:
        return False
    powers = beamformer.antenna_powers()
    if np.abs(powers - problem.p_t).max() > rtol * problem.p_t:
        return False
    _, eta_c = design_sinrs(problem, beamformer)
    return bool(np.all(eta_c >= problem.gamma_c * (1.0 - rtol)))


@dataclass
class BsSolution:
    beamformer: Beamformer
    gamma_r_star: float
    covs: CovarianceSet
    eta_r: float
    eta_c: np.ndarray
    rank_ratios: np.ndarray
    bisection: BisectionResult
    used_incumbent: bool = False


def solve_bs(problem: FeasibilityProblem, incumbent: Optional[Beamformer] = None,
             tol: float = 1e-3, rtol: float = 0.0, solver: str = "CLARABEL",
             delta_feas: float = DELTA_FEAS) -> BsSolution:
    """Bisection + relaxation + closed-form extraction for one fixed HRIS state.

    ``incumbent`` is a known design; it is returned instead of the extracted
    one when it satisfies the constraints and has the higher radar SINR.
    Raises ``CommInfeasibleError`` if the communication constraints cannot
    be met at all.
    """
    oracle = CvxpyFeasibility(problem, solver=solver, delta_feas=delta_feas)
    hi = 2.0 * problem.radar_ceiling()
    result = bisect_gamma_r(oracle.check, 0.0, hi, tol=tol, rtol=rtol)
    at_star = problem.with_gamma_r(result.gamma_r)
    covs = reduce_rank(at_star, result.covs)
    h_hat = problem.h_hat
    bf = enforce_antenna_power(extract_beamformers(covs, h_hat, problem.a_t, radar_fallback=True), problem.p_t)
    eta_r, eta_c = design_sinrs(problem, bf)
    ratios = rank_one_diagnostic(covs)
    if ratios.min() < 1.0 - 1e-6:
        log.info("relaxed solution is not rank one (eigen-shares %s)", np.round(ratios, 6))
    used = False
    if incumbent is not None and design_is_feasible(problem, incumbent):
        inc_r, inc_c = design_sinrs(problem, incumbent)
        extracted_ok = design_is_feasible(problem, bf)
        if inc_r > eta_r or not extracted_ok:
            bf, eta_r, eta_c, used = incumbent, inc_r, inc_c, True
    return BsSolution(bf, result.gamma_r, covs, eta_r, eta_c, ratios, result, used)
