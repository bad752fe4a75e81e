import dataclasses

import numpy as np
import pytest

from hris_dfrc import orchestrator
from hris_dfrc.bs_opt import BsSolution, CommInfeasibleError
from hris_dfrc.hris_opt import AgdParams, HrisResult, penalty_objective
from hris_dfrc.model import HrisConfig, evaluate
from hris_dfrc.orchestrator import (OptimizerConfig, initial_beamformer, initialize, objective_at,
                                    run, run_from, step)
from hris_dfrc.scene import build_channels, small_scene

FAST = OptimizerConfig(agd=AgdParams(max_iters=200), max_outer=4)


@pytest.fixture(scope="module")
def toy():
    scene = small_scene(4, num_antennas=4)
    return scene, build_channels(scene)


def test_config_validation():
    with pytest.raises(ValueError):
        OptimizerConfig(epsilon=0.0)
    with pytest.raises(ValueError):
        OptimizerConfig(max_outer=0)
    assert OptimizerConfig().penalty_with(3.0).lambda1 == 3.0
    assert OptimizerConfig(gamma_c=2.0).penalty_with(1.0).gamma_c == 2.0


def test_initial_state(table1):
    scene, ch = table1
    st = initialize(scene, OptimizerConfig(), ch)
    assert st.beamformer.W.shape == (8, 2)
    assert np.array_equal(st.beta, np.zeros(16))
    assert np.max(np.abs(st.beamformer.antenna_powers() - scene.per_antenna_power)) <= 1e-9
    assert st.iteration == 0 and st.history == []
    W = st.beamformer.W
    # comm beam phase-matched to the full-reflection cascade, radar beam to the target
    cascade = ch.H @ ch.G
    assert np.allclose(np.angle(W[:, 0] * cascade[0]), 0.0, atol=1e-12)
    assert np.allclose(np.angle(W[:, 1] * np.conj(ch.a_t)), 0.0, atol=1e-12)


def test_initial_power_scales(table1):
    _, ch = table1
    bf = initial_beamformer(ch, 10.0)
    assert np.allclose(bf.antenna_powers(), 10.0, rtol=1e-12)


def test_huge_epsilon_stops_after_one_iteration(toy):
    scene, ch = toy
    res = run(scene, dataclasses.replace(FAST, epsilon=1e9), ch)
    assert res.converged and res.iterations == 1


def test_runs_are_reproducible(toy):
    scene, ch = toy
    a, b = run(scene, FAST, ch), run(scene, FAST, ch)
    assert [r.f_value for r in a.records] == [r.f_value for r in b.records]
    assert [r.report.eta_r for r in a.records] == [r.report.eta_r for r in b.records]
    assert np.array_equal(a.beamformer.W, b.beamformer.W) and np.array_equal(a.beta, b.beta)


def test_invariants_after_every_step(toy):
    scene, ch = toy
    cfg = FAST
    st = initialize(scene, cfg, ch)
    for _ in range(3):
        st = step(st, cfg)
        assert np.all((st.beta >= 0) & (st.beta <= 1))
        assert np.max(np.abs(st.beamformer.antenna_powers() - scene.per_antenna_power)) <= 1e-6
        rec = st.records[-1]
        assert rec.report.min_eta_c >= cfg.gamma_c * (1 - 1e-3)
        assert np.isclose(rec.f_value, objective_at(ch, st.beamformer, st.beta, 1.0,
                                                    cfg.penalty_with(rec.lambda1)))
        assert len(st.history) == st.iteration


def test_synthetic_fixed_point(toy, monkeypatch):
    scene, ch = toy
    st = initialize(scene, FAST, ch, beta=np.full(4, 0.4),
                    beamformer=initial_beamformer(ch, scene.per_antenna_power))

    def keep_beta(ctx, pen, warm):
        beta = np.full(4, 0.4)
        return HrisResult(beta, ctx.report(beta), penalty_objective(beta, ctx, pen), beta,
                          np.array([0.0]))

    def keep_w(problem, incumbent=None, **kw):
        r = evaluate(ch, HrisConfig(np.full(4, 0.4)), incumbent, 1.0)
        return BsSolution(incumbent, 0.0, incumbent.covariances(), r.eta_r, r.eta_c,
                          np.ones(2), None, True)

    monkeypatch.setattr(orchestrator, "solve_bs", keep_w)
    cfg = dataclasses.replace(FAST, hris_solver=keep_beta)
    nxt = step(st, cfg)
    assert abs(nxt.f_value - st.f_value) <= 1e-12
    assert np.array_equal(nxt.beamformer.W, st.beamformer.W)


def test_comm_infeasibility_raises_lambda1(toy, monkeypatch):
    scene, ch = toy

    def fail(*a, **kw):
        raise CommInfeasibleError("synthetic")

    monkeypatch.setattr(orchestrator, "solve_bs", fail)
    cfg = dataclasses.replace(FAST, max_outer=3)
    st = initialize(scene, cfg, ch)
    res = run_from(st, cfg)
    lams = [r.lambda1 for r in res.records]
    assert lams == [10.0, 100.0, 1000.0]
    assert all(r.comm_infeasible for r in res.records)
    assert not res.converged
    assert np.array_equal(res.beamformer.W, st.beamformer.W)


def test_warm_start_never_worse(toy):
    scene, ch = toy
    first = run(scene, FAST, ch)
    again = run(scene, dataclasses.replace(FAST, max_outer=1), ch, beta=first.beta,
                beamformer=first.beamformer)
    assert again.report.eta_r >= first.report.eta_r * (1 - 1e-9)
    with pytest.raises(ValueError):
        run(scene, FAST, ch, beta=first.beta)


def test_non_convergence_returns_best_so_far(toy):
    scene, ch = toy
    res = run(scene, dataclasses.replace(FAST, epsilon=1e-12, max_outer=2), ch)
    assert not res.converged and res.iterations == 2
    best = max(r.report.eta_r for r in res.records if r.report.comm_satisfied(1e-3))
    assert res.report.eta_r == best


def test_table1_run_behaviour(table1, table1_run):
    scene, ch = table1
    res = table1_run
    assert res.converged and res.iterations <= 10
    gamma_c = 10 ** 0.5
    for r in res.records:
        assert r.report.min_eta_c >= gamma_c * (1 - 1e-3)
    # near-monotone radar SINR; judged relative to its size (see the run log for dips)
    etas = [r.report.eta_r for r in res.records]
    for a, b in zip(etas, etas[1:]):
        assert b >= a - 1e-6 * a
    assert 10 * np.log10(res.report.min_eta_c) >= 5.0 - 0.05
    start = initialize(scene, OptimizerConfig(), ch)
    eta0 = evaluate(ch, HrisConfig(start.beta), start.beamformer, 1.0).eta_r
    assert res.report.eta_r > eta0
    assert np.all(res.records[-1].rank_ratios >= 1 - 1e-4)
