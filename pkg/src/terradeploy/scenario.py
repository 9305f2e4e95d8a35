"""Scenario definition and JSON loading.

dB / dBm inputs are converted to linear watts here; everything downstream is
linear-domain.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .deploy import ConstraintBounds, FitnessWeights
from .energy import EnergyParams
from .los import build_bvh
from .sensing import AntennaParams, EbdParams, LinkBudget, SensingContext, Target
from .terrain import TerrainModel, load_model, model_from_dict


class ConfigError(ValueError):
    """Invalid scenario, plan or optimiser configuration."""


def db_to_lin(db):
    return 10.0 ** (db / 10.0)


def dbm_to_w(dbm):
    return 10.0 ** ((dbm - 30.0) / 10.0)


class Problem:
    """Flat float arrays consumed by the kernels."""

    def __init__(self, sc: "Scenario"):
        self.terr = np.ascontiguousarray(sc.terrain.params)
        self.base = float(sc.terrain.base)
        bvh = build_bvh(sc.terrain, sc.k_o)
        self.bvh = bvh
        self.box, self.left, self.right, self.comp = bvh.arrays()
        self.eps = float(sc.epsilon)
        self.tgt = np.array([t.position for t in sc.targets], dtype=np.float64).reshape(-1, 3)
        self.pw = np.array([t.tx_power for t in sc.targets], dtype=np.float64)
        self.chf = np.array([f for t in sc.targets for f in t.channels], dtype=np.float64)
        self.cht = np.array([n for n, t in enumerate(sc.targets) for _ in t.channels], dtype=np.int64)
        self.bands = np.array(sc.uav_bands, dtype=np.float64).reshape(-1, 2)
        a = sc.antenna
        self.sens = np.array([sc.ebd.q_inv_pfa, math.sqrt(sc.ebd.K / 2.0), a.sigma_eta, a.sigma_zeta,
                              a.alpha_a, a.alpha_e, sc.link.beta_0, float(sc.link.N_t), sc.link.sigma_n2])
        self.en = sc.energy.as_array()
        self.cb = sc.bounds.as_array()

    def kernel_args(self):
        return (self.terr, self.base, self.box, self.left, self.right, self.comp, self.eps,
                self.tgt, self.pw, self.chf, self.cht, self.bands, self.sens, self.en, self.cb)


@dataclass(frozen=True)
class Scenario:
    terrain: TerrainModel
    targets: tuple
    uav_bands: tuple
    bounds: ConstraintBounds
    ebd: EbdParams = field(default_factory=EbdParams)
    antenna: AntennaParams = field(default_factory=lambda: AntennaParams.from_degrees(15.0, 15.0))
    link: LinkBudget = field(default_factory=LinkBudget)
    energy: EnergyParams = field(default_factory=EnergyParams)
    weights: FitnessWeights = field(default_factory=FitnessWeights)
    k_o: float = 2.0
    epsilon: float = 1e-5
    energy_term: str = "avg_ex"

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        object.__setattr__(self, "uav_bands", tuple((float(a), float(b)) for a, b in self.uav_bands))
        if not self.targets:
            raise ConfigError("scenario needs at least one target")
        if not self.uav_bands:
            raise ConfigError("scenario needs at least one UAV band")
        for a, b in self.uav_bands:
            if not a < b:
                raise ConfigError(f"UAV band ({a}, {b}) must satisfy f_min < f_max")
        if self.energy_term not in ("avg_ex", "total_ex"):
            raise ConfigError("energy_term must be 'avg_ex' or 'total_ex'")
        if not 0 < self.epsilon < 1:
            raise ConfigError("epsilon must lie in (0, 1)")

    @property
    def M(self):
        return len(self.uav_bands)

    @property
    def N(self):
        return len(self.targets)

    @cached_property
    def problem(self) -> Problem:
        return Problem(self)

    @property
    def sensing_context(self) -> SensingContext:
        return SensingContext(self.terrain, self.problem.bvh, self.ebd, self.antenna, self.link, self.epsilon)

    def with_uavs(self, M):
        """Same scenario restricted to the first ``M`` UAV bands."""
        if M > len(self.uav_bands):
            raise ConfigError(f"scenario defines {len(self.uav_bands)} UAV bands, {M} requested")
        return replace(self, uav_bands=self.uav_bands[:M])

    def with_targets(self, targets):
        return replace(self, targets=tuple(targets))

    def channel_count(self):
        return sum(len(t.channels) for t in self.targets)


def _channels(entry):
    if isinstance(entry, dict):
        start, stop, step = float(entry["start"]), float(entry["stop"]), float(entry["step"])
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [start + i * step for i in range(n)]
    return [float(f) for f in entry]


def _terrain(entry, root):
    if entry is None:
        return TerrainModel()
    if isinstance(entry, str):
        return load_model(os.path.join(root, entry))
    if "model" in entry:
        return load_model(os.path.join(root, entry["model"]))
    return model_from_dict(entry)


def scenario_from_dict(d, root=".") -> Scenario:
    try:
        targets = [
            Target(tuple(t["pos"]), tuple(_channels(t["channels"])), dbm_to_w(float(t.get("tx_power_dbm", 20.0))))
            for t in d["targets"]
        ]
        e = d.get("ebd", {})
        ebd = EbdParams(int(e.get("K", 1000)), int(e.get("L", 4)), float(e.get("P_fa", 1e-3)))
        a = d.get("antenna", {})
        ant = AntennaParams.from_degrees(float(a.get("alpha_a_deg", 15.0)), float(a.get("alpha_e_deg", 15.0)))
        lk = d.get("link", {})
        link = LinkBudget(db_to_lin(float(lk.get("beta0_db", -20.0))), int(lk.get("Nt", 7)),
                          dbm_to_w(float(lk.get("noise_dbm", -80.0))))
        b = d["bounds"]
        bounds = ConstraintBounds(tuple(b["region"]), float(b.get("Smin_m", 500.0)), float(b.get("Rmin_m", 200.0)),
                                  float(b.get("Hsafe_m", 50.0)), float(b.get("Hmax_m", 6000.0)))
        en = d.get("energy", {})
        energy = EnergyParams(float(en.get("P0_w", 275.204)), float(en.get("Hs_m", 44330.0)),
                              float(en.get("td_s", 900.0)), float(en.get("Hsafe_m", bounds.H_safe)),
                              float(en.get("exponent", 2.128)))
        w = d.get("weights", {})
        weights = FitnessWeights(float(w.get("lambda_S", 2.0)), float(w.get("lambda_E", 5e-3)),
                                 float(w.get("lambda_pen", 1e6)))
        los = d.get("los", {})
        return Scenario(
            terrain=_terrain(d.get("terrain"), root),
            targets=tuple(targets),
            uav_bands=tuple(tuple(bd) for bd in d["uav_bands"]),
            bounds=bounds, ebd=ebd, antenna=ant, link=link, energy=energy, weights=weights,
            k_o=float(los.get("k_o", 2.0)), epsilon=float(los.get("epsilon", 1e-5)),
            energy_term=d.get("energy_term", "avg_ex"),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError, OSError) as exc:
        raise ConfigError(f"invalid scenario: {exc}") from exc


def load_scenario(path) -> Scenario:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return scenario_from_dict(d, os.path.dirname(os.path.abspath(path)))
