"""Geometry, steering vectors and propagation channels.

All positions are in meters. Steering vectors use a spherical-wavefront phase
model with unit amplitude: entry ``l`` toward a point ``p`` is
``exp(-1j * 2*pi/wavelength * |x_l - p|)``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

# Points closer than this (relative to the wavelength) to an element are degenerate.
_MIN_DISTANCE = 1e-9


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class ArrayLayout:
    element_positions: np.ndarray
    wavelength: float

    def __post_init__(self):
        pos = _frozen(np.atleast_2d(self.element_positions))
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError("element_positions must have shape (L, 3)")
        if pos.shape[0] < 1:
            raise ValueError("an array needs at least one element")
        if not self.wavelength > 0:
            raise ValueError("wavelength must be positive")
        if pos.shape[0] > 1:
            d = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
            d[np.diag_indices_from(d)] = np.inf
            if d.min() <= _MIN_DISTANCE * self.wavelength:
                raise ValueError("element positions must be pairwise distinct")
        object.__setattr__(self, "element_positions", pos)

    @property
    def num_elements(self) -> int:
        return self.element_positions.shape[0]

    @property
    def center(self) -> np.ndarray:
        return self.element_positions.mean(axis=0)

    @classmethod
    def ula(cls, center, count: int, spacing: float, wavelength: float, axis: str = "y"):
        """Uniform linear array of ``count`` elements along a coordinate axis."""
        if count < 1:
            raise ValueError("count must be >= 1")
        unit = np.zeros(3)
        unit["xyz".index(axis)] = 1.0
        offsets = (np.arange(count) - (count - 1) / 2.0) * spacing
        return cls(np.asarray(center, float) + offsets[:, None] * unit, wavelength)

    @classmethod
    def upa_yoz(cls, center, count: int, spacing: float, wavelength: float):
        """Square planar array in a plane parallel to YOZ.

        Element ``l = row * side + col`` sits at row ``row`` along z and column
        ``col`` along y, both ascending.
        """
        side = int(round(np.sqrt(count)))
        if side < 1 or side * side != count:
            raise ValueError(f"planar array needs a square element count, got {count}")
        offsets = (np.arange(side) - (side - 1) / 2.0) * spacing
        zz, yy = np.meshgrid(offsets, offsets, indexing="ij")
        pos = np.zeros((count, 3))
        pos[:, 1] = yy.ravel()
        pos[:, 2] = zz.ravel()
        return cls(np.asarray(center, float) + pos, wavelength)


def steering_vector(layout: ArrayLayout, point) -> np.ndarray:
    """Unit-amplitude spherical-phase response of ``layout`` toward ``point``."""
    point = np.asarray(point, dtype=float)
    dist = np.linalg.norm(layout.element_positions - point, axis=-1)
    if dist.min() <= _MIN_DISTANCE * layout.wavelength:
        raise ValueError(f"point {point} coincides with an array element")
    return np.exp(-2j * np.pi / layout.wavelength * dist)


class ChannelModel(enum.Enum):
    LOS_PHASE = "los_phase"
    RAYLEIGH = "rayleigh"


@dataclass(frozen=True)
class Scene:
    bs: ArrayLayout
    hris: ArrayLayout
    users: np.ndarray
    detect_grid: np.ndarray
    target_cell: tuple = (0, 0)
    noise_power: float = 1.0
    per_antenna_power: float = 1.0
    channel_model: ChannelModel = ChannelModel.LOS_PHASE
    seed: int = 0

    def __post_init__(self):
        users = _frozen(np.atleast_2d(self.users))
        grid = _frozen(self.detect_grid)
        if grid.ndim == 1:
            grid = _frozen(grid.reshape(1, 1, 3))
        if users.shape[0] < 1 or users.shape[1] != 3:
            raise ValueError("need at least one user position of shape (3,)")
        if grid.ndim != 3 or grid.shape[2] != 3:
            raise ValueError("detect_grid must have shape (P, Q, 3)")
        p, q = self.target_cell
        if not (0 <= p < grid.shape[0] and 0 <= q < grid.shape[1]):
            raise ValueError(f"target_cell {self.target_cell} outside a {grid.shape[:2]} grid")
        if not self.noise_power > 0:
            raise ValueError("noise_power must be positive")
        if not self.per_antenna_power > 0:
            raise ValueError("per_antenna_power must be positive")
        object.__setattr__(self, "users", users)
        object.__setattr__(self, "detect_grid", grid)
        object.__setattr__(self, "target_cell", (int(p), int(q)))
        object.__setattr__(self, "channel_model", ChannelModel(self.channel_model))

    @property
    def num_users(self) -> int:
        return self.users.shape[0]

    @property
    def target(self) -> np.ndarray:
        return self.detect_grid[self.target_cell]

    def replace(self, **changes) -> "Scene":
        from dataclasses import replace

        return replace(self, **changes)


@dataclass(frozen=True)
class Channels:
    """Propagation quantities for one scene.

    ``H`` stacks the user channels as rows, i.e. row ``k`` is ``h_k^H``.
    """

    G: np.ndarray
    H: np.ndarray
    a_t: np.ndarray
    a_h: np.ndarray
    a_r: np.ndarray

    @property
    def num_users(self) -> int:
        return self.H.shape[0]

    @property
    def num_elements(self) -> int:
        return self.G.shape[0]

    @property
    def num_antennas(self) -> int:
        return self.G.shape[1]


def _rayleigh(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def build_channels(scene: Scene) -> Channels:
    target = scene.target
    a_t = steering_vector(scene.bs, target)
    a_h = steering_vector(scene.hris, target)
    # Same path geometry in both directions, so reception equals reflection steering.
    a_r = a_h.copy()
    # Geometric validity is checked in both modes so configs behave the same.
    G = np.stack([steering_vector(scene.bs, x) for x in scene.hris.element_positions])
    H = np.stack([steering_vector(scene.hris, u) for u in scene.users])
    if scene.channel_model is ChannelModel.RAYLEIGH:
        rng = np.random.default_rng(scene.seed)
        G = _rayleigh(rng, G.shape)
        H = _rayleigh(rng, H.shape)
    return Channels(*(_frozen(x, complex) for x in (G, H, a_t, a_h, a_r)))


def direct_user_channels(scene: Scene) -> np.ndarray:
    """Line-of-sight BS-to-user channels as rows (K x T), for the HRIS-free baseline."""
    return np.stack([steering_vector(scene.bs, u) for u in scene.users])


def single_element_response(scene: Scene, point) -> complex:
    """Steering scalar of an ideal single receive element at the HRIS center."""
    rx = ArrayLayout(scene.hris.center[None, :], scene.hris.wavelength)
    return complex(steering_vector(rx, point)[0])


def table1_scene(
    num_antennas: int = 8,
    num_elements: int = 16,
    users_in_wavelengths=((75.0, 100.0, 0.0),),
    p_t_db: float = 0.0,
    noise_db: float = 0.0,
    wavelength: float = 0.1,
    channel_model: ChannelModel = ChannelModel.LOS_PHASE,
    seed: int = 0,
) -> Scene:
    """The evaluation geometry: BS at (0,0,300)λ, HRIS at (0,100,30)λ, target at the origin."""
    lam = wavelength
    bs = ArrayLayout.ula(np.array([0.0, 0.0, 300.0]) * lam, num_antennas, lam / 2, lam, axis="y")
    hris = ArrayLayout.upa_yoz(np.array([0.0, 100.0, 30.0]) * lam, num_elements, lam, lam)
    return Scene(
        bs=bs,
        hris=hris,
        users=np.asarray(users_in_wavelengths, float) * lam,
        detect_grid=np.zeros((1, 1, 3)),
        target_cell=(0, 0),
        noise_power=10 ** (noise_db / 10),
        per_antenna_power=10 ** (p_t_db / 10),
        channel_model=channel_model,
        seed=seed,
    )


def small_scene(num_elements: int, num_antennas: int = 2, num_users: int = 1,
                p_t_db: float = 0.0, channel_model: ChannelModel = ChannelModel.LOS_PHASE,
                seed: int = 0, wavelength: float = 0.1) -> Scene:
    """Reduced geometry for exhaustive checks: same placement, linear HRIS of any size."""
    lam = wavelength
    bs = ArrayLayout.ula(np.array([0.0, 0.0, 300.0]) * lam, num_antennas, lam / 2, lam, axis="y")
    hris = ArrayLayout.ula(np.array([0.0, 100.0, 30.0]) * lam, num_elements, lam, lam, axis="y")
    users = np.array([[75.0 + 75.0 * k, 100.0, 0.0] for k in range(num_users)]) * lam
    return Scene(bs=bs, hris=hris, users=users.reshape(num_users, 3),
                 detect_grid=np.zeros((1, 1, 3)), target_cell=(0, 0),
                 per_antenna_power=10 ** (p_t_db / 10), channel_model=channel_model, seed=seed)
