"""Brute-force references shared by the unit and acceptance tests."""
import numpy as np


def _rank_one_grid(prob, rho1, rho2, pc, pr):
    """Radar SINR of every two-antenna, one-user rank-one design on a grid.

    Antenna ``j`` gives a share ``rho_j`` of its power to the user beam and the
    rest to the radar beam; ``pc`` and ``pr`` are the relative phases of the
    second antenna (the common phase of a beam does not matter). Designs that
    miss the user's threshold score ``-inf``.
    """
    R1, R2, PC, PR = np.meshgrid(rho1, rho2, pc, pr, indexing="ij")
    amp = np.sqrt(prob.p_t)
    wc = np.stack([np.sqrt(R1) + 0j, np.sqrt(R2) * np.exp(1j * PC)], -1) * amp
    wr = np.stack([np.sqrt(1 - R1) + 0j, np.sqrt(1 - R2) * np.exp(1j * PR)], -1) * amp
    h = prob.h_hat[0]
    eta_c = np.abs(wc @ h) ** 2 / (np.abs(wr @ h) ** 2 + prob.sigma2)
    gain = abs(prob.A_bar_r) ** 2
    at, ab = np.conj(prob.a_t), np.conj(prob.a_bar_h)
    leak = gain * (np.abs(wc @ ab) ** 2 + np.abs(wr @ ab) ** 2)
    eta_r = gain * np.abs(wr @ at) ** 2 / (leak + prob.sigma2)
    eta_r = np.where(eta_c >= prob.gamma_c, eta_r, -np.inf)
    pts = np.stack([R1.ravel(), R2.ravel(), PC.ravel(), PR.ravel()], 1)
    return eta_r.ravel(), pts


def brute_force_radar_sinr(prob, coarse=24, fine=12, starts=3, zooms=5):
    """Best radar SINR over about 6.4e5 rank-one candidates (T=2, K=1).

    A uniform ``coarse^4`` grid is followed by ``zooms`` successively halved
    ``fine^4`` grids around each of the ``starts`` best coarse points.
    Returns ``(best, n_candidates)``; ``best`` is ``-inf`` when no candidate
    meets the threshold.
    """
    r = np.linspace(0.0, 1.0, coarse)
    p = np.linspace(0.0, 2 * np.pi, coarse, endpoint=False)
    vals, pts = _rank_one_grid(prob, r, r, p, p)
    count = vals.size
    best = vals.max()
    if not np.isfinite(best):
        return best, count
    for j in np.argsort(-vals)[:starts]:
        if not np.isfinite(vals[j]):
            continue
        c = pts[j].copy()
        w = np.array([1 / (coarse - 1), 1 / (coarse - 1), 2 * np.pi / coarse, 2 * np.pi / coarse])
        for _ in range(zooms):
            axes = [np.linspace(c[d] - w[d], c[d] + w[d], fine) for d in range(4)]
            axes[0], axes[1] = np.clip(axes[0], 0, 1), np.clip(axes[1], 0, 1)
            v, x = _rank_one_grid(prob, *axes)
            count += v.size
            k = int(np.argmax(v))
            if np.isfinite(v[k]):
                best = max(best, v[k])
                c = x[k]
            w = w / 2
    return float(best), count


def random_toy_problems(rng, count, gamma_c=1.0, n=4, **grid):
    """Random T=2, K=1 problems with at least one feasible grid design.

    ``grid`` is passed on to ``brute_force_radar_sinr``.
    """
    from hris_dfrc.bs_opt import FeasibilityProblem
    from hris_dfrc.model import HrisConfig
    from hris_dfrc.validation import random_channels

    out = []
    while len(out) < count:
        ch = random_channels(rng, n, 2, 1)
        prob = FeasibilityProblem.from_design(ch, HrisConfig(rng.random(n)), gamma_c, 1.0, 1.0)
        best, cnt = brute_force_radar_sinr(prob, **grid)
        if np.isfinite(best):
            out.append((prob, best, cnt))
    return out
