"""Altitude-dependent hover energy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .terrain import TerrainModel, elevation


@dataclass(frozen=True)
class EnergyParams:
    P0: float = 275.204  # W, hover power at ground level
    H_s: float = 44330.0  # m, atmospheric scale height
    t_d: float = 900.0  # s
    H_safe: float = 50.0  # m
    exponent: float = 2.128

    def __post_init__(self):
        if not all(v > 0 for v in (self.P0, self.H_s, self.t_d, self.H_safe, self.exponent)):
            raise ValueError("energy parameters must be positive")
        if not self.H_safe < self.H_s:
            raise ValueError("H_safe must be below H_s")

    def as_array(self):
        return np.array([self.P0, self.H_s, self.t_d, self.H_safe, self.exponent])


def hover_energy(h, ep: EnergyParams):
    """Hover energy (J) at relative altitude ``h`` in (0, H_s); arrays accepted."""
    ha = np.asarray(h, dtype=np.float64)
    if np.any(ha <= 0.0) or np.any(ha >= ep.H_s):
        raise ValueError(f"relative altitude must lie in (0, {ep.H_s}), got {h}")
    e = ep.P0 * ep.t_d * (1.0 - ha / ep.H_s) ** (-ep.exponent)
    return float(e) if e.ndim == 0 else e


def avg_excess_energy(positions, terrain: TerrainModel, ep: EnergyParams) -> float:
    """Fleet-mean hover energy above the ``H_safe`` reference, from (M, 3) positions."""
    pos = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    h = pos[:, 2] - elevation(terrain, pos[:, 0], pos[:, 1])
    bad = np.nonzero((h <= 0.0) | (h >= ep.H_s))[0]
    if bad.size:
        raise ValueError(f"UAV {int(bad[0])} has relative altitude {h[bad[0]]:.3f} m outside (0, {ep.H_s})")
    ref = hover_energy(ep.H_safe, ep)
    return float(np.mean(hover_energy(h, ep) - ref))
