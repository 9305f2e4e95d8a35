"""Eigenvalue-ratio detection, directional gain and cooperative OR fusion.

All quantities are linear-domain; dB conversion happens at scenario load.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .los import Bvh, build_bvh, los_query
from .terrain import TerrainModel

_HPBW = 2.0 * math.sqrt(2.0 * math.log(2.0))
_SQRT2 = math.sqrt(2.0)


def qfunc(x: float) -> float:
    """Standard normal upper tail."""
    return 0.5 * math.erfc(x / _SQRT2)


def qfunc_inv(p: float) -> float:
    """Inverse of :func:`qfunc` by safeguarded Newton iteration inside a bisection bracket."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"probability must lie in (0, 1), got {p}")
    if p == 0.5:
        return 0.0
    if p > 0.5:
        # 1 - p is exact here; solving in the upper tail avoids cancellation near 1
        return -qfunc_inv(1.0 - p)
    lo, hi = -40.0, 40.0
    x = 0.0
    for _ in range(200):
        f = qfunc(x) - p
        if f > 0.0:
            lo = x
        else:
            hi = x
        pdf = math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
        step = f / pdf if pdf > 0.0 else math.inf
        xn = x + step
        if not (lo < xn < hi):
            xn = 0.5 * (lo + hi)
        if abs(xn - x) <= 1e-15 * max(1.0, abs(x)):
            return xn
        x = xn
    return x


@dataclass(frozen=True)
class EbdParams:
    K: int = 1000
    L: int = 4
    P_fa: float = 1e-3

    def __post_init__(self):
        if self.K < 2:
            raise ValueError("K must be >= 2")
        if self.L < 1:
            raise ValueError("L must be >= 1")
        if not 0.0 < self.P_fa < 1.0:
            raise ValueError("P_fa must lie in (0, 1)")
        if self.K < 10 * self.L:
            warnings.warn(f"K={self.K} is not much larger than L={self.L}; Gaussian approximation is poor",
                          stacklevel=2)

    @property
    def q_inv_pfa(self):
        return qfunc_inv(self.P_fa)


@dataclass(frozen=True)
class AntennaParams:
    alpha_a: float  # azimuth half-power beamwidth, rad
    alpha_e: float  # elevation half-power beamwidth, rad

    def __post_init__(self):
        if not 0.0 < self.alpha_a < math.pi:
            raise ValueError("alpha_a must lie in (0, pi)")
        if not 0.0 < self.alpha_e < math.pi / 2:
            raise ValueError("alpha_e must lie in (0, pi/2)")

    @classmethod
    def from_degrees(cls, a_deg, e_deg):
        return cls(math.radians(a_deg), math.radians(e_deg))

    @property
    def sigma_eta(self):
        return self.alpha_a / _HPBW

    @property
    def sigma_zeta(self):
        return self.alpha_e / _HPBW


@dataclass(frozen=True)
class LinkBudget:
    beta_0: float = 0.01
    N_t: int = 7
    sigma_n2: float = 1e-11

    def __post_init__(self):
        if not (self.beta_0 > 0 and self.N_t > 0 and self.sigma_n2 > 0):
            raise ValueError("link budget terms must be positive")


@dataclass(frozen=True)
class Target:
    position: tuple
    channels: tuple
    tx_power: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        ch = tuple(float(c) for c in self.channels)
        if not ch:
            raise ValueError("target needs at least one channel")
        if any(b <= a for a, b in zip(ch, ch[1:])):
            raise ValueError("channels must be strictly increasing")
        object.__setattr__(self, "channels", ch)
        if not self.tx_power > 0:
            raise ValueError("tx_power must be positive")


@dataclass(frozen=True)
class UavState:
    position: tuple
    eta: float
    zeta: float
    band: tuple

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        object.__setattr__(self, "band", (float(self.band[0]), float(self.band[1])))
        if not self.band[0] < self.band[1]:
            raise ValueError("band must satisfy f_min < f_max")

    def in_band(self, f):
        return self.band[0] < f < self.band[1]


def wrap_angle(a: float) -> float:
    """Wrap into (-pi, pi]."""
    d = math.fmod(a, 2.0 * math.pi)
    if d > math.pi:
        d -= 2.0 * math.pi
    elif d <= -math.pi:
        d += 2.0 * math.pi
    return d


def ebd_threshold(p: EbdParams) -> float:
    return 1.0 + math.sqrt(2.0 / p.K) * p.q_inv_pfa


def detection_probability(snr: float, p: EbdParams) -> float:
    if not (math.isfinite(snr) and snr >= 0.0):
        raise ValueError(f"snr must be finite and non-negative, got {snr}")
    return qfunc((p.q_inv_pfa - snr * math.sqrt(p.K / 2.0)) / (1.0 + snr))


def pointing_angles(src, dst):
    """Azimuth and elevation of ``dst`` seen from ``src``."""
    dx, dy, dz = dst[0] - src[0], dst[1] - src[1], dst[2] - src[2]
    hd = math.hypot(dx, dy)
    return math.atan2(dy, dx), math.atan2(dz, hd)


def antenna_gain(uav: UavState, target: Target, ap: AntennaParams, los: int) -> float:
    if tuple(uav.position) == tuple(target.position):
        raise ValueError("UAV and target positions coincide")
    az, el = pointing_angles(uav.position, target.position)
    de = wrap_angle(az - uav.eta)
    dz = el - uav.zeta
    if abs(de) > ap.alpha_a or abs(dz) > ap.alpha_e:
        return 0.0
    g = math.exp(-de * de / (2.0 * ap.sigma_eta ** 2) - dz * dz / (2.0 * ap.sigma_zeta ** 2))
    return float(los) * g


def sinr(tx_power: float, lb: LinkBudget, gain: float, d: float) -> float:
    """Received signal-to-noise ratio; the model carries no interference term."""
    if not d > 0:
        raise ValueError("distance must be positive")
    return tx_power * lb.beta_0 * lb.N_t * gain / (d * d * lb.sigma_n2)


@dataclass(frozen=True)
class SensingContext:
    terrain: TerrainModel
    bvh: Bvh
    ebd: EbdParams
    antenna: AntennaParams
    link: LinkBudget
    epsilon: float = 1e-5

    @classmethod
    def build(cls, terrain, ebd, antenna, link, k_o=2.0, epsilon=1e-5):
        return cls(terrain, build_bvh(terrain, k_o), ebd, antenna, link, epsilon)


def link_detection_probability(uav: UavState, target: Target, f: float, ctx: SensingContext) -> float:
    if f not in target.channels:
        raise ValueError(f"channel {f} not allocated to target")
    if not uav.in_band(f):
        return 0.0
    los = los_query(ctx.bvh, ctx.terrain, uav.position, target.position, ctx.epsilon).visible
    g = antenna_gain(uav, target, ctx.antenna, los)
    d = math.dist(uav.position, target.position)
    return detection_probability(sinr(target.tx_power, ctx.link, g, d), ctx.ebd)


def fuse_or(probs) -> float:
    out = 1.0
    for p in probs:
        out *= 1.0 - p
    return 1.0 - out


def cooperative_sum(uavs: Sequence[UavState], targets: Sequence[Target], ctx: SensingContext):
    """Return ``(p_sum, per_target)`` where ``per_target[n][j]`` fuses channel ``j`` of target ``n``."""
    if not uavs or not targets:
        raise ValueError("need at least one UAV and one target")
    per_target = []
    for t in targets:
        row = [fuse_or(link_detection_probability(u, t, f, ctx) for u in uavs) for f in t.channels]
        per_target.append(row)
    return float(sum(sum(r) for r in per_target)), per_target


# ----------------------------------------------------------------------- simulation


def simulate_ebd(p: EbdParams, snr: float, trials: int, seed: int, signal: str = "rank1", chunk: int = 250):
    """Monte Carlo max/min eigenvalue test. Returns ``(empirical_P_d, empirical_P_fa)``.

    Noise is unit-variance circular complex Gaussian. ``signal="rank1"`` adds a
    single source seen coherently by all elements with per-element variance
    ``snr``; ``signal="white"`` adds spatially white signal, under which the
    ratio statistic is scale-invariant and P_d equals P_fa in distribution.
    """
    if p.L < 2:
        raise ValueError("eigenvalue ratio needs L >= 2")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if signal not in ("rank1", "white"):
        raise ValueError(f"unknown signal model {signal!r}")
    thr = ebd_threshold(p)
    rng = np.random.default_rng(seed)
    K, L = p.K, p.L
    det1 = det0 = 0
    done = 0
    while done < trials:
        n = min(chunk, trials - done)
        noise0 = (rng.standard_normal((n, K, L)) + 1j * rng.standard_normal((n, K, L))) / _SQRT2
        noise1 = (rng.standard_normal((n, K, L)) + 1j * rng.standard_normal((n, K, L))) / _SQRT2
        if signal == "rank1":
            s = (rng.standard_normal((n, K, 1)) + 1j * rng.standard_normal((n, K, 1))) / _SQRT2
            y1 = noise1 + math.sqrt(snr) * s
        else:
            s = (rng.standard_normal((n, K, L)) + 1j * rng.standard_normal((n, K, L))) / _SQRT2
            y1 = noise1 + math.sqrt(snr) * s
        for y, is_h1 in ((noise0, False), (y1, True)):
            R = np.einsum("nkl,nkm->nlm", y.conj(), y) / K
            lam = np.linalg.eigvalsh(R)
            hit = int(np.count_nonzero(lam[:, -1] / lam[:, 0] > thr))
            if is_h1:
                det1 += hit
            else:
                det0 += hit
        done += n
    return det1 / trials, det0 / trials
