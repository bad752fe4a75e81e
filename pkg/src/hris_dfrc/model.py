"""Signal model: cascaded channels, SINR metrics and the beta-quadratic forms.

Conventions
-----------
* ``H_e`` rows are ``h_hat_k^H = h_k^H Psi(beta) G``.
* ``a_hat`` is the T-vector with ``a_hat^H = a_h^H Psi(beta) G``.
* ``A_r = phi(beta)^H a_r`` with ``phi_l = (1 - beta_l) exp(1j*gamma_l)``.
* All SINRs are linear power ratios.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .scene import Channels
from .units import linear_to_db

# Tolerance (relative to sigma^2) on a negative interference-plus-noise term
# before it is treated as a broken PSD invariant rather than round-off.
_NEG_DEN_RTOL = 1e-9


def _ro(a, dtype=None):
    a = np.array(a, dtype=dtype)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class HrisConfig:
    """Power-splitting factors ``beta`` and the (fixed) reflect/receive phases."""

    beta: np.ndarray
    psi: Optional[np.ndarray] = None
    gamma: Optional[np.ndarray] = None

    def __post_init__(self):
        beta = _ro(np.atleast_1d(self.beta), float)
        if np.any(beta < 0) or np.any(beta > 1):
            raise ValueError("power-splitting factors must lie in [0, 1]")
        n = beta.shape[0]
        psi = np.zeros(n) if self.psi is None else self.psi
        gamma = np.zeros(n) if self.gamma is None else self.gamma
        psi, gamma = _ro(psi, float), _ro(gamma, float)
        if psi.shape != beta.shape or gamma.shape != beta.shape:
            raise ValueError("beta, psi and gamma must have the same length")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "gamma", gamma)

    @classmethod
    def uniform(cls, n: int, value: float) -> "HrisConfig":
        return cls(np.full(n, float(value)))

    @property
    def reflection(self) -> np.ndarray:
        """Diagonal of Psi(beta)."""
        return self.beta * np.exp(1j * self.psi)

    @property
    def reception(self) -> np.ndarray:
        """The vector phi(beta)."""
        return (1.0 - self.beta) * np.exp(1j * self.gamma)


@dataclass(frozen=True)
class Beamformer:
    W_c: np.ndarray
    w_r: np.ndarray

    def __post_init__(self):
        w_r = _ro(np.ravel(self.w_r), complex)
        W_c = np.asarray(self.W_c, dtype=complex)
        if W_c.ndim == 1:
            W_c = W_c.reshape(-1, 1) if W_c.size else np.zeros((w_r.size, 0), complex)
        if W_c.shape[0] != w_r.shape[0]:
            raise ValueError("W_c and w_r must have the same number of rows")
        object.__setattr__(self, "W_c", _ro(W_c))
        object.__setattr__(self, "w_r", w_r)

    @classmethod
    def from_matrix(cls, W) -> "Beamformer":
        W = np.asarray(W, dtype=complex)
        return cls(W[:, :-1], W[:, -1])

    @property
    def W(self) -> np.ndarray:
        return np.column_stack([self.W_c, self.w_r])

    @property
    def num_users(self) -> int:
        return self.W_c.shape[1]

    @property
    def num_antennas(self) -> int:
        return self.w_r.shape[0]

    def antenna_powers(self) -> np.ndarray:
        W = self.W
        return np.sum(np.abs(W) ** 2, axis=1)

    def covariances(self) -> "CovarianceSet":
        W = self.W
        return CovarianceSet(np.einsum("ti,si->its", W, W.conj()))

    def scaled(self, factor: float) -> "Beamformer":
        return Beamformer(self.W_c * factor, self.w_r * factor)


@dataclass(frozen=True)
class CovarianceSet:
    """Sub-covariances ``R_1..R_K`` (communication) and ``R_{K+1}`` (radar), stacked."""

    blocks: np.ndarray

    def __post_init__(self):
        blocks = np.asarray(self.blocks, dtype=complex)
        if blocks.ndim != 3 or blocks.shape[1] != blocks.shape[2] or blocks.shape[0] < 1:
            raise ValueError("blocks must have shape (K+1, T, T)")
        object.__setattr__(self, "blocks", _ro(blocks))

    @property
    def R(self) -> np.ndarray:
        return self.blocks.sum(axis=0)

    @property
    def comm(self) -> np.ndarray:
        return self.blocks[:-1]

    @property
    def radar(self) -> np.ndarray:
        return self.blocks[-1]

    @property
    def num_users(self) -> int:
        return self.blocks.shape[0] - 1

    def min_eigenvalue(self) -> float:
        herm = 0.5 * (self.blocks + np.conj(np.transpose(self.blocks, (0, 2, 1))))
        return float(np.linalg.eigvalsh(herm).min())


@dataclass(frozen=True)
class PropagationMatrices:
    """Quadratic-form matrices for fixed BS beams, all N x N Hermitian.

    ``C3[k]`` gives the desired power of user ``k`` as ``beta^T C3[k] beta`` and
    ``D[k]`` its total received power (desired + interference) the same way.
    ``a_r`` is the receive steering with the receive phases folded in, so that
    ``A_r = (1 - beta)^T a_r``.
    """

    C1: np.ndarray
    C2: np.ndarray
    C3: np.ndarray
    D: np.ndarray
    a_r: np.ndarray

    @property
    def num_users(self) -> int:
        return self.C3.shape[0]


@dataclass
class SinrReport:
    eta_r: float
    eta_c: np.ndarray
    gamma_c: float = 0.0
    # Only filled by estimators that separate the power terms.
    comm_interference: Optional[np.ndarray] = field(default=None, repr=False)
    radar_interference: Optional[float] = field(default=None, repr=False)

    def __post_init__(self):
        self.eta_c = np.atleast_1d(np.asarray(self.eta_c, dtype=float))
        self.eta_r = float(self.eta_r)

    @property
    def min_eta_c(self) -> float:
        return float(self.eta_c.min()) if self.eta_c.size else np.inf

    def comm_satisfied(self, rtol: float = 1e-3) -> bool:
        return self.min_eta_c >= self.gamma_c * (1.0 - rtol)

    @property
    def eta_r_db(self) -> float:
        return linear_to_db(self.eta_r)

    @property
    def eta_c_db(self) -> np.ndarray:
        return np.atleast_1d(linear_to_db(self.eta_c))

    @property
    def min_eta_c_db(self) -> float:
        return linear_to_db(self.min_eta_c)


# ---------------------------------------------------------------------------
# W-parameterized metrics
# ---------------------------------------------------------------------------


def _check_hris(channels: Channels, hris: HrisConfig):
    if hris.beta.shape[0] != channels.num_elements:
        raise ValueError(
            f"HRIS config has {hris.beta.shape[0]} elements, channels have {channels.num_elements}"
        )


def cascaded_channel(channels: Channels, hris: HrisConfig) -> np.ndarray:
    """``H_e = H Psi(beta) G`` (K x T)."""
    _check_hris(channels, hris)
    return (channels.H * hris.reflection) @ channels.G


def cascaded_radar(channels: Channels, hris: HrisConfig):
    """Return ``(a_hat, A_r)`` for the target cell."""
    _check_hris(channels, hris)
    a_hat_h = (channels.a_h.conj() * hris.reflection) @ channels.G
    A_r = np.vdot(hris.reception, channels.a_r)
    return a_hat_h.conj(), complex(A_r)


def _quad(M, x):
    """``x^H M x`` for each row ``x`` of a 2-D array (or a single vector)."""
    return np.real(np.einsum("...i,ij,...j->...", x.conj(), M, x))


def sinr_comm(covs: CovarianceSet, h_e: np.ndarray, sigma2: float) -> np.ndarray:
    """Per-user SINR from the sub-covariances; ``h_e`` rows are ``h_hat_k^H``."""
    K = h_e.shape[0]
    if K < 1:
        raise ValueError("need at least one user")
    if covs.num_users != K:
        raise ValueError(f"{covs.num_users} communication blocks for {K} users")
    # Row k of h_e is h_hat_k^H, so h_hat_k^H R h_hat_k = row R row^H.
    rows = h_e
    desired = np.array([np.real(rows[k] @ covs.blocks[k] @ rows[k].conj()) for k in range(K)])
    total = np.real(np.einsum("ki,ij,kj->k", rows, covs.R, rows.conj()))
    den = total - desired + sigma2
    if np.any(den < -_NEG_DEN_RTOL * sigma2):
        raise ValueError("negative interference-plus-noise power; covariances are not PSD")
    return desired / den


def sinr_comm_w(beamformer: Beamformer, h_e: np.ndarray, sigma2: float) -> np.ndarray:
    """Per-user SINR from the precoders, term by term (desired / inter-user / radar)."""
    K = h_e.shape[0]
    if beamformer.num_users != K:
        raise ValueError(f"{beamformer.num_users} precoders for {K} users")
    gains = h_e @ beamformer.W_c
    radar = h_e @ beamformer.w_r
    desired = np.abs(np.diag(gains)) ** 2
    inter = np.sum(np.abs(gains) ** 2, axis=1) - desired
    return desired / (inter + np.abs(radar) ** 2 + sigma2)


def sinr_radar(beamformer: Beamformer, channels: Channels, hris: HrisConfig, sigma2: float) -> float:
    a_hat, A_r = cascaded_radar(channels, hris)
    if beamformer.num_antennas != channels.num_antennas:
        raise ValueError("beamformer and channel antenna counts differ")
    gain = abs(A_r) ** 2
    signal = gain * abs(np.vdot(channels.a_t, beamformer.w_r)) ** 2
    leak = gain * np.sum(np.abs(a_hat.conj() @ beamformer.W) ** 2)
    return float(signal / (leak + sigma2))


def sinr_radar_cov(covs: CovarianceSet, a_t, a_hat, A_r, sigma2: float) -> float:
    """Radar SINR in terms of the sub-covariances (radar block is the last one)."""
    gain = abs(A_r) ** 2
    signal = gain * _quad(covs.radar, np.asarray(a_t))
    leak = gain * _quad(covs.R, np.asarray(a_hat))
    return float(signal / (leak + sigma2))


def evaluate(channels: Channels, hris: HrisConfig, beamformer: Beamformer, sigma2: float,
             gamma_c: float = 0.0) -> SinrReport:
    h_e = cascaded_channel(channels, hris)
    return SinrReport(
        eta_r=sinr_radar(beamformer, channels, hris, sigma2),
        eta_c=sinr_comm_w(beamformer, h_e, sigma2),
        gamma_c=gamma_c,
    )


# ---------------------------------------------------------------------------
# beta-parameterized metrics
# ---------------------------------------------------------------------------


def build_propagation_matrices(channels: Channels, beamformer: Beamformer,
                               psi=None, gamma=None) -> PropagationMatrices:
    N = channels.num_elements
    psi = np.zeros(N) if psi is None else np.asarray(psi, float)
    gamma = np.zeros(N) if gamma is None else np.asarray(gamma, float)
    phase = np.exp(1j * psi)
    GW = channels.G @ beamformer.W  # N x (K+1)

    radar_gain = abs(np.vdot(channels.a_t, beamformer.w_r)) ** 2
    a_r = np.exp(-1j * gamma) * channels.a_r
    C1 = radar_gain * np.outer(a_r, a_r.conj())

    V2 = (channels.a_h.conj() * phase)[:, None] * GW
    C2 = V2 @ V2.conj().T

    K = channels.num_users
    C3 = np.empty((K, N, N), complex)
    D = np.empty((K, N, N), complex)
    for k in range(K):
        Vk = (channels.H[k] * phase)[:, None] * GW
        C3[k] = np.outer(Vk[:, k], Vk[:, k].conj())
        D[k] = Vk @ Vk.conj().T
    return PropagationMatrices(_ro(C1), _ro(C2), _ro(C3), _ro(D), _ro(a_r))


def _bquad(M, beta):
    return float(np.real(beta @ M @ beta))


def sinr_comm_beta(beta, matrices: PropagationMatrices, sigma2: float) -> np.ndarray:
    beta = np.asarray(beta, float)
    desired = np.real(np.einsum("i,kij,j->k", beta, matrices.C3, beta))
    total = np.real(np.einsum("i,kij,j->k", beta, matrices.D, beta))
    return desired / (total - desired + sigma2)


def sinr_radar_beta(beta, matrices: PropagationMatrices, sigma2: float) -> float:
    beta = np.asarray(beta, float)
    u = 1.0 - beta
    signal = _bquad(matrices.C1, u)
    receive_gain = abs(u @ matrices.a_r) ** 2
    return signal / (receive_gain * _bquad(matrices.C2, beta) + sigma2)
