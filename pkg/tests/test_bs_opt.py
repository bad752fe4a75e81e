import numpy as np
import pytest
from hypothesis import given, strategies as st

from hris_dfrc.bs_opt import (BisectionTrial, CommInfeasibleError, CvxpyFeasibility,
                              FeasibilityProblem, FeasibilityResult, FeasibilityStatus,
                              bisect_gamma_r, block_ranks, check_feasibility, design_is_feasible,
                              design_sinrs, enforce_antenna_power, extract_beamformers,
                              polish_covariances, rank_one_diagnostic, reduce_rank, solve_bs)
from hris_dfrc.model import Beamformer, CovarianceSet, HrisConfig, evaluate
from hris_dfrc.scene import build_channels, table1_scene
from hris_dfrc.validation import crandn, random_channels

from oracles import brute_force_radar_sinr, random_toy_problems


def toy_problem(rng, gamma_c=1.0, n=4, t=2, k=1, p_t=1.0):
    ch = random_channels(rng, n, t, k)
    return FeasibilityProblem.from_design(ch, HrisConfig(rng.random(n)), gamma_c, 1.0, p_t)


def step_oracle(threshold):
    def check(g):
        if g <= threshold:
            return FeasibilityResult(FeasibilityStatus.FEASIBLE, covs=CovarianceSet(np.eye(1)[None]))
        return FeasibilityResult(FeasibilityStatus.INFEASIBLE)
    return check


# -- feasibility ------------------------------------------------------------------

def test_vacuous_radar_constraint_is_feasible(rng):
    prob = toy_problem(rng, gamma_c=1e-6).with_gamma_r(0.0)
    res = check_feasibility(prob)
    assert res.status is FeasibilityStatus.FEASIBLE
    assert res.residual <= 1e-7
    assert np.allclose(np.real(np.diag(res.covs.R)), prob.p_t, rtol=1e-9)


def test_above_ceiling_is_infeasible(rng):
    prob = toy_problem(rng, gamma_c=1e-6)
    # phase-only steering, where the coherent-combining form and the general bound coincide
    prob = FeasibilityProblem(np.exp(1j * np.angle(prob.a_t)), prob.a_bar_h, prob.A_bar_r,
                              prob.h_hat, 0.0, prob.gamma_c, prob.sigma2, prob.p_t)
    T = prob.num_antennas
    ceiling = abs(prob.A_bar_r) ** 2 * prob.p_t * T ** 2 * np.linalg.norm(prob.a_t / np.sqrt(T)) ** 4
    assert np.isclose(ceiling, prob.radar_ceiling())
    res = check_feasibility(prob.with_gamma_r(1.5 * ceiling))
    assert res.status is FeasibilityStatus.INFEASIBLE


def test_problem_validation(rng):
    prob = toy_problem(rng)
    with pytest.raises(ValueError):
        prob.with_gamma_r(-1.0)
    with pytest.raises(ValueError):
        FeasibilityProblem(prob.a_t, prob.a_bar_h, prob.A_bar_r, prob.h_hat, 0.0, 0.0, 1.0, 1.0)


def test_feasibility_monotone_on_ladders(rng):
    for _ in range(3):
        prob = toy_problem(rng)
        oracle = CvxpyFeasibility(prob)
        ladder = np.linspace(0.0, 1.2, 5) * prob.radar_ceiling()
        flags = [oracle.check(g).feasible for g in ladder]
        # once infeasible, every larger value is infeasible too
        first_bad = flags.index(False) if False in flags else len(flags)
        assert all(flags[:first_bad]) and not any(flags[first_bad:])


# -- bisection -----------------------------------------------------------------------

def test_bisection_on_step_oracle():
    res = bisect_gamma_r(step_oracle(5.0), 0.0, 10.0, tol=1e-6)
    assert abs(res.gamma_r - 5.0) <= 1e-6
    assert res.hi - res.lo <= 1e-6
    assert all(isinstance(t, BisectionTrial) for t in res.trials)


def test_bisection_expands_a_tight_bracket():
    res = bisect_gamma_r(step_oracle(37.0), 0.0, 1.0, tol=1e-6)
    assert abs(res.gamma_r - 37.0) <= 1e-6


def test_bisection_needs_feasible_lower_end():
    with pytest.raises(CommInfeasibleError):
        bisect_gamma_r(step_oracle(-1.0), 0.0, 10.0)


def test_numerical_failure_counts_as_infeasible():
    def check(g):
        if g <= 2.0:
            return FeasibilityResult(FeasibilityStatus.FEASIBLE, covs=CovarianceSet(np.eye(1)[None]))
        if g <= 4.0:
            return FeasibilityResult(FeasibilityStatus.NUMERICAL_FAILURE)
        return FeasibilityResult(FeasibilityStatus.INFEASIBLE)
    res = bisect_gamma_r(check, 0.0, 8.0, tol=1e-6)
    assert abs(res.gamma_r - 2.0) <= 1e-6
    assert res.numerical_failures > 0


@given(st.floats(0.0, 100.0), st.floats(1e-6, 1e-2))
def test_bisection_brackets_any_threshold(threshold, tol):
    res = bisect_gamma_r(step_oracle(threshold), 0.0, 200.0, tol=tol)
    assert res.gamma_r <= threshold < res.hi + 1e-12
    assert res.hi - res.lo <= tol


# -- extraction -------------------------------------------------------------------------

def test_rank_one_fixed_point(rng):
    h = crandn(rng, 3)
    a_t = crandn(rng, 3)
    blocks = np.stack([np.outer(h, h.conj()), np.outer(a_t, a_t.conj())])
    bf = extract_beamformers(CovarianceSet(blocks), h.conj()[None, :], a_t)
    assert np.allclose(bf.W_c[:, 0], h, atol=1e-12)
    assert np.allclose(bf.w_r, a_t, atol=1e-12)


def test_matched_radar_beam(rng):
    a_t = np.exp(1j * rng.uniform(0, 2 * np.pi, 4))
    R = 2.0 * 4 * np.outer(a_t, a_t.conj()) / np.vdot(a_t, a_t).real
    bf = extract_beamformers(CovarianceSet(R[None]), np.zeros((0, 4)), a_t)
    ratio = bf.w_r / a_t
    assert np.allclose(ratio, ratio[0], atol=1e-12)


def test_extraction_identity(rng):
    for _ in range(20):
        T, K = 4, 2
        blocks = []
        for _ in range(K + 1):
            F = crandn(rng, T, 2)
            blocks.append(F @ F.conj().T)
        covs = CovarianceSet(np.stack(blocks))
        h_hat = crandn(rng, K, T)
        a_t = crandn(rng, T)
        bf = extract_beamformers(covs, h_hat, a_t)
        for k in range(K):
            want = np.real(h_hat[k] @ covs.blocks[k] @ h_hat[k].conj())
            got = abs(h_hat[k] @ bf.W_c[:, k]) ** 2
            assert abs(got - want) <= 1e-10 * want
        want = np.real(np.vdot(a_t, covs.radar @ a_t))
        assert abs(abs(np.vdot(a_t, bf.w_r)) ** 2 - want) <= 1e-10 * want


def test_degenerate_blocks_rejected(rng):
    a_t = crandn(rng, 2)
    null = np.array([-np.conj(a_t[1]), np.conj(a_t[0])])
    blocks = np.stack([np.eye(2), np.outer(null, null.conj())]).astype(complex)
    with pytest.raises(ValueError):
        extract_beamformers(CovarianceSet(blocks), crandn(rng, 1, 2), a_t)
    bf = extract_beamformers(CovarianceSet(blocks), crandn(rng, 1, 2), a_t, radar_fallback=True)
    assert np.allclose(np.outer(bf.w_r, bf.w_r.conj()), blocks[1], atol=1e-12)
    with pytest.raises(ValueError):
        extract_beamformers(CovarianceSet(np.zeros((2, 2, 2))), crandn(rng, 1, 2), a_t)


def test_rank_one_diagnostic_values(rng):
    v = crandn(rng, 4)
    ratios = rank_one_diagnostic(CovarianceSet(np.stack([np.outer(v, v.conj()), np.eye(4)])))
    assert np.isclose(ratios[0], 1.0) and np.isclose(ratios[1], 0.25)
    assert block_ranks(CovarianceSet(np.stack([np.outer(v, v.conj()), np.eye(4)]))) == [1, 4]


def test_polish_and_power_enforcement(rng):
    F = crandn(rng, 3, 3)
    raw = np.stack([F @ F.conj().T, -1e-12 * np.eye(3)])
    blocks = polish_covariances(raw, 2.0)
    covs = CovarianceSet(blocks)
    assert np.allclose(np.real(np.diag(covs.R)), 2.0, rtol=1e-12)
    assert covs.min_eigenvalue() > -1e-12
    bf = enforce_antenna_power(Beamformer.from_matrix(crandn(rng, 3, 2)), 2.0)
    assert np.allclose(bf.antenna_powers(), 2.0, rtol=1e-12)


def test_rank_reduction_keeps_constraints(rng):
    prob = toy_problem(rng, t=4, k=2, gamma_c=0.5)
    oracle = CvxpyFeasibility(prob)
    res = oracle.check(0.0)
    assert res.feasible
    before = prob.constraint_values(res.covs)
    covs = reduce_rank(prob, res.covs)
    after = prob.constraint_values(covs)
    assert np.max(np.abs(after - before)) <= 1e-7
    assert np.allclose(np.real(np.diag(covs.R)), prob.p_t, rtol=1e-9)
    assert sum(r * r for r in block_ranks(covs)) <= prob.num_antennas + prob.num_users + 1


# -- full BS step ----------------------------------------------------------------------------

def test_solved_design_meets_every_contract(rng):
    for _ in range(3):
        prob = toy_problem(rng, t=4, k=2, gamma_c=0.5, p_t=2.0)
        sol = solve_bs(prob, tol=1e-9, rtol=1e-9)
        bf = sol.beamformer
        assert np.max(np.abs(bf.antenna_powers() - 2.0)) <= 1e-6 * 2.0
        eta_r, eta_c = design_sinrs(prob, bf)
        assert np.all(eta_c >= 0.5 * (1 - 1e-6))
        assert eta_r >= sol.gamma_r_star * (1 - 1e-6)
        assert design_is_feasible(prob, bf)
        assert len(sol.rank_ratios) == 3


def test_sdr_matches_rank_one_grid_on_one_toy(rng):
    (prob, best, count), = random_toy_problems(rng, 1)
    assert count >= 6e5
    sol = solve_bs(prob, tol=1e-9, rtol=1e-9)
    # the relaxation upper-bounds every rank-one design and is reached by the extracted beams
    assert sol.gamma_r_star >= best * (1 - 1e-6)
    assert abs(sol.gamma_r_star - best) <= 0.01 * best


def test_comm_unsatisfiable_raises(rng):
    prob = toy_problem(rng, gamma_c=1e6)
    with pytest.raises(CommInfeasibleError):
        solve_bs(prob)


def test_incumbent_kept_when_better(rng):
    prob = toy_problem(rng)
    sol = solve_bs(prob, tol=1e-9, rtol=1e-9)
    again = solve_bs(prob, incumbent=sol.beamformer, tol=1e-1)
    assert again.used_incumbent
    assert again.eta_r >= sol.eta_r


def test_full_reflection_has_zero_radar_ceiling(table1):
    scene, ch = table1
    prob = FeasibilityProblem.from_design(ch, HrisConfig(np.ones(16)), 10 ** 0.5, 1.0, 1.0)
    sol = solve_bs(prob)
    assert sol.gamma_r_star == 0.0
    assert np.all(sol.eta_c >= 10 ** 0.5 * (1 - 1e-6))


def test_radar_optimum_grows_with_power(table1):
    scene, ch = table1
    hris = HrisConfig.uniform(16, 0.5)
    values = []
    for p_db in (0, 5, 10, 15):
        prob = FeasibilityProblem.from_design(ch, hris, 10 ** 0.5, 1.0, 10 ** (p_db / 10))
        values.append(solve_bs(prob, tol=1e-6, rtol=1e-7).gamma_r_star)
    assert all(b >= a * (1 - 1e-6) for a, b in zip(values, values[1:]))
