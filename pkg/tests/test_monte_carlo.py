import numpy as np
import pytest

from hris_dfrc.model import Beamformer, HrisConfig, cascaded_channel, sinr_comm_w, sinr_radar
from hris_dfrc.monte_carlo import monte_carlo_sinr, monte_carlo_stats
from hris_dfrc.orchestrator import initial_beamformer
from hris_dfrc.validation import monte_carlo_check, random_beamformer, random_channels


def test_same_seed_same_estimate(table1):
    scene, ch = table1
    bf, hris = initial_beamformer(ch, 1.0), HrisConfig.uniform(16, 0.5)
    a = monte_carlo_sinr(scene, bf, hris, 5000, seed=4, channels=ch)
    b = monte_carlo_sinr(scene, bf, hris, 5000, seed=4, channels=ch)
    assert a.eta_r == b.eta_r and np.array_equal(a.eta_c, b.eta_c)


def test_invalid_sample_count(table1):
    scene, ch = table1
    with pytest.raises(ValueError):
        monte_carlo_stats(ch, initial_beamformer(ch, 1.0), HrisConfig.uniform(16, 0.5), 1.0, 0)


def test_no_leakage_no_noise_is_interference_free():
    # beta = 1 leaves nothing for the HRIS receiver, so the radar branch has
    # zero signal and zero leakage; users with W = identity see only noise.
    rng = np.random.default_rng(0)
    ch = random_channels(rng, 3, 2, 1)
    bf = Beamformer.from_matrix(np.eye(2, dtype=complex))
    mc = monte_carlo_stats(ch, bf, HrisConfig.uniform(3, 1.0), 1e-30, 1, seed=1)
    assert mc.report.eta_r == 0.0


def test_single_sample_ratio_is_exact_for_one_stream():
    # one user, w_r = 0: the only interference is noise, so eta_c is the
    # sample ratio |g x|^2 / |n|^2 and the estimator reproduces it exactly.
    rng = np.random.default_rng(2)
    ch = random_channels(rng, 2, 2, 1)
    W = np.zeros((2, 2), complex)
    W[:, 0] = [1.0, 0.5j]
    bf = Beamformer.from_matrix(W)
    hris = HrisConfig.uniform(2, 0.7)
    mc = monte_carlo_stats(ch, bf, hris, 0.3, 1, seed=9)
    g = (cascaded_channel(ch, hris) @ W[:, 0])[0]
    r = np.random.default_rng(9)
    x = np.sqrt(0.5) * (r.standard_normal((2, 1)) + 1j * r.standard_normal((2, 1)))
    n = np.sqrt(0.15) * (r.standard_normal((1, 1)) + 1j * r.standard_normal((1, 1)))
    assert np.isclose(mc.report.eta_c[0], abs(g * x[0, 0]) ** 2 / abs(n[0, 0]) ** 2, rtol=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_random_designs_within_three_standard_errors(seed):
    rng = np.random.default_rng(100 + seed)
    ch = random_channels(rng, 4, 3, 2)
    bf = random_beamformer(rng, 3, 2)
    hris = HrisConfig(rng.random(4))
    for res in monte_carlo_check(ch, bf, hris, 0.5, 200000, seed=seed):
        assert res.passed, res.line()


def test_closed_form_targets_match_model(table1):
    scene, ch = table1
    bf, hris = initial_beamformer(ch, 1.0), HrisConfig.uniform(16, 0.5)
    mc = monte_carlo_stats(ch, bf, hris, 1.0, 200000, seed=0)
    assert np.isclose(mc.report.eta_r, sinr_radar(bf, ch, hris, 1.0), rtol=0.05)
    assert np.allclose(mc.report.eta_c, sinr_comm_w(bf, cascaded_channel(ch, hris), 1.0), rtol=0.05)
