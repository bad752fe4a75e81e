"""Sample-based SINR estimates that cross-check the closed forms."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import Beamformer, HrisConfig, SinrReport, cascaded_channel, cascaded_radar
from .scene import Channels, Scene, build_channels

_CHUNK = 1 << 16


def _cn(rng, shape, power=1.0):
    return np.sqrt(power / 2.0) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


class _RatioAccumulator:
    """Running sums for a ratio of means plus its delta-method standard error."""

    def __init__(self, size):
        self.n = 0
        self.sa = np.zeros(size)
        self.sb = np.zeros(size)
        self.saa = np.zeros(size)
        self.sbb = np.zeros(size)
        self.sab = np.zeros(size)

    def add(self, a, b):
        self.n += a.shape[-1]
        self.sa += a.sum(-1)
        self.sb += b.sum(-1)
        self.saa += (a * a).sum(-1)
        self.sbb += (b * b).sum(-1)
        self.sab += (a * b).sum(-1)

    def ratio(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.sb > 0, self.sa / self.sb, np.where(self.sa > 0, np.inf, 0.0))

    def stderr(self):
        n = self.n
        ma, mb = self.sa / n, self.sb / n
        va = self.saa / n - ma ** 2
        vb = self.sbb / n - mb ** 2
        cab = self.sab / n - ma * mb
        r = self.ratio()
        with np.errstate(divide="ignore", invalid="ignore"):
            var = (va - 2 * r * cab + r * r * vb) / (n * mb ** 2)
        return np.sqrt(np.clip(np.nan_to_num(var, nan=0.0, posinf=0.0), 0.0, None))


@dataclass
class MonteCarloResult:
    report: SinrReport
    eta_r_stderr: float
    eta_c_stderr: np.ndarray
    n_samples: int


def monte_carlo_stats(channels: Channels, beamformer: Beamformer, hris: HrisConfig,
                      sigma2: float, n_samples: int, seed: int = 0,
                      gamma_c: float = 0.0) -> MonteCarloResult:
    """Simulate the received samples and form empirical SINRs.

    Symbols and noise are i.i.d. unit-power (noise: ``sigma2``) circular
    Gaussians. Each user sees its own stream as signal and everything else
    (other users, the radar stream, noise) as interference. The HRIS receiver
    sees the target echo of the radar stream as signal and the reflected
    leakage of all streams plus noise as interference.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    W = beamformer.W
    K = beamformer.num_users
    h_e = cascaded_channel(channels, hris)
    a_hat, A_r = cascaded_radar(channels, hris)
    user_gain = h_e @ W                        # (K, K+1): user k, stream i
    leak_gain = A_r * (a_hat.conj() @ W)       # (K+1,)
    echo_gain = A_r * np.vdot(channels.a_t, beamformer.w_r)
    comm = _RatioAccumulator(K)
    radar = _RatioAccumulator(1)
    done = 0
    while done < n_samples:
        m = min(_CHUNK, n_samples - done)
        x = _cn(rng, (K + 1, m))
        noise_c = _cn(rng, (K, m), sigma2)
        noise_r = _cn(rng, (m,), sigma2)
        rx = user_gain @ x                    # (K, m), before noise
        own = np.diagonal(user_gain)[:, None] * x[:K]
        comm.add(np.abs(own) ** 2, np.abs(rx - own + noise_c) ** 2)
        sig = echo_gain * x[K]
        radar.add((np.abs(sig) ** 2)[None], (np.abs(leak_gain @ x + noise_r) ** 2)[None])
        done += m
    report = SinrReport(eta_r=float(radar.ratio()[0]), eta_c=comm.ratio(), gamma_c=gamma_c)
    return MonteCarloResult(report, float(radar.stderr()[0]), comm.stderr(), n_samples)


def monte_carlo_sinr(scene: Scene, beamformer: Beamformer, hris: HrisConfig, n_samples: int,
                     seed: int = 0, channels: Optional[Channels] = None,
                     gamma_c: float = 0.0) -> SinrReport:
    channels = build_channels(scene) if channels is None else channels
    return monte_carlo_stats(channels, beamformer, hris, scene.noise_power, n_samples, seed,
                             gamma_c).report
