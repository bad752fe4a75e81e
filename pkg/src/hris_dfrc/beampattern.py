"""Radiated power versus direction for the BS streams and the HRIS reflection.

Directions use ``u(phi, theta) = (sin theta, cos theta cos phi, cos theta sin phi)``:
``phi`` turns in the YOZ plane from +y toward +z and ``theta`` tilts out of
that plane toward +x. Straight down is ``phi = 270``; a BS look-down angle
``d`` toward +y corresponds to ``phi = 270 + d``.

Responses are far-field plane waves written in the same phase convention as
the channel rows (``exp(-j 2 pi / lambda * distance)`` up to a common phase),
so a beam matched to a channel row peaks toward that row's point.
"""
from __future__ import annotations

import csv
from typing import Iterable, Optional

import numpy as np

from .model import Beamformer, HrisConfig
from .scene import ArrayLayout, Channels
from .units import DB_FLOOR, linear_to_db


def direction(phi_deg, theta_deg) -> np.ndarray:
    phi, theta = np.deg2rad(phi_deg), np.deg2rad(theta_deg)
    return np.stack(np.broadcast_arrays(np.sin(theta), np.cos(theta) * np.cos(phi),
                                        np.cos(theta) * np.sin(phi)), axis=-1)


def array_response(layout: ArrayLayout, directions) -> np.ndarray:
    """Rows of far-field responses, one per direction (shape (..., elements))."""
    u = np.asarray(directions, float)
    rel = layout.element_positions - layout.center
    return np.exp(2j * np.pi / layout.wavelength * (u @ rel.T))


def look_down_grid(step_deg: float = 0.5):
    """BS look-down angles in (-90, 90) and the matching phi values (theta = 0)."""
    d = np.arange(-90.0 + step_deg, 90.0, step_deg)
    return d, 270.0 + d


def bs_pattern(layout: ArrayLayout, beamformer: Beamformer, directions) -> np.ndarray:
    """Per-stream transmit power ``|a(dir) w_i|^2``; shape (..., K+1)."""
    if np.asarray(directions).size == 0:
        raise ValueError("empty direction grid")
    return np.abs(array_response(layout, directions) @ beamformer.W) ** 2


def hris_pattern(layout: ArrayLayout, channels: Channels, hris: HrisConfig,
                 beamformer: Beamformer, directions) -> np.ndarray:
    """Reflected power ``sum_i |a(dir) Psi(beta) G w_i|^2`` of the surface."""
    if np.asarray(directions).size == 0:
        raise ValueError("empty direction grid")
    incident = channels.G @ beamformer.W                 # (N, K+1)
    out = array_response(layout, directions) @ (hris.reflection[:, None] * incident)
    return np.sum(np.abs(out) ** 2, axis=-1)


def to_db(power, relative: bool = False) -> np.ndarray:
    power = np.asarray(power, float)
    if relative and power.max() > 0:
        power = power / power.max()
    return linear_to_db(power, floor=DB_FLOOR)


def peak_look_down(layout: ArrayLayout, beamformer: Beamformer, stream: int,
                   step_deg: float = 0.05) -> float:
    d, phi = look_down_grid(step_deg)
    p = bs_pattern(layout, beamformer, direction(phi, 0.0))[:, stream]
    return float(d[int(np.argmax(p))])


def write_pattern_csv(path, phi_deg: Iterable[float], theta_deg: Iterable[float], power_db) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["angle_deg_phi", "angle_deg_theta", "power_db"])
        for p, t, v in zip(phi_deg, theta_deg, power_db):
            w.writerow([f"{p:.6g}", f"{t:.6g}", f"{v:.10g}"])
