"""Deployment encoding, constraint measures, repair and penalised fitness.

A deployment of M UAVs is an (M, 5) float array with rows
``[x, y, z, eta, zeta]``. Functions here accept either that array or a
:class:`Deployment` wrapping it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._accel import get_backend

VIOLATION_NAMES = ("region", "target_sep", "uav_sep", "orientation", "altitude")
REPAIR_ROUNDS = 50


@dataclass(frozen=True)
class ConstraintBounds:
    region: tuple  # (xmin, xmax, ymin, ymax)
    S_min: float = 500.0
    R_min: float = 200.0
    H_safe: float = 50.0
    H_max: float = 6000.0

    def __post_init__(self):
        xmin, xmax, ymin, ymax = (float(v) for v in self.region)
        object.__setattr__(self, "region", (xmin, xmax, ymin, ymax))
        if not (xmin < xmax and ymin < ymax):
            raise ValueError("deployable region is degenerate")
        if not (self.S_min >= 0 and self.R_min >= 0 and self.H_safe > 0 and self.H_max > 0):
            raise ValueError("constraint bounds must be positive")

    def as_array(self):
        return np.array([*self.region, self.S_min, self.R_min, self.H_safe, self.H_max], dtype=np.float64)


@dataclass(frozen=True)
class FitnessWeights:
    lambda_S: float = 2.0
    lambda_E: float = 5e-3
    lambda_pen: float = 1e6

    def __post_init__(self):
        if min(self.lambda_S, self.lambda_E, self.lambda_pen) < 0:
            raise ValueError("fitness weights must be non-negative")


@dataclass
class Deployment:
    states: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.states = np.array(self.states, dtype=np.float64).reshape(-1, 5)
        if self.states.shape[0] < 1:
            raise ValueError("deployment needs at least one UAV")
        if not np.all(np.isfinite(self.states)):
            raise ValueError("deployment has non-finite coordinates")

    @property
    def M(self):
        return self.states.shape[0]

    @property
    def positions(self):
        return self.states[:, :3]

    def uav_states(self, bands):
        from .sensing import UavState

        return [UavState(tuple(s[:3]), s[3], s[4], tuple(b)) for s, b in zip(self.states, bands)]

    def to_dict(self):
        return {
            "uavs": [
                {"x": float(s[0]), "y": float(s[1]), "z": float(s[2]), "eta": float(s[3]), "zeta": float(s[4])}
                for s in self.states
            ],
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(np.array([[u["x"], u["y"], u["z"], u["eta"], u["zeta"]] for u in d["uavs"]]), d.get("meta", {}))


def _states(d):
    if isinstance(d, Deployment):
        return d.states
    return np.asarray(d, dtype=np.float64).reshape(-1, 5)


@dataclass(frozen=True)
class FitnessReport:
    p_sum: float
    e_avg_ex: float
    violations: tuple
    fitness: float

    @property
    def feasible(self):
        return all(v == 0.0 for v in self.violations)

    def to_dict(self):
        return {
            "p_sum": self.p_sum,
            "e_avg_ex": self.e_avg_ex,
            "violations": dict(zip(VIOLATION_NAMES, self.violations)),
            "feasible": bool(self.feasible),
            "fitness": self.fitness,
        }


def scalarize(p_sum, e_avg_ex, viol, weights: FitnessWeights, M=1, energy_term="avg_ex"):
    """Penalised objective; works elementwise on arrays (``viol`` last axis = 5)."""
    e = e_avg_ex * M if energy_term == "total_ex" else e_avg_ex
    return weights.lambda_S * p_sum - weights.lambda_E * e - weights.lambda_pen * np.sum(viol, axis=-1)


def violations(d, scenario, backend=None) -> np.ndarray:
    """Five non-negative constraint deficits (m or rad); all zero iff feasible."""
    st = _states(d)
    prob = scenario.problem
    kern = get_backend(backend)
    if kern.__name__.endswith("_np"):
        return kern._violations(st, prob.terr, prob.base, prob.tgt, prob.cb)
    out = np.empty(5)
    kern._violations(np.ascontiguousarray(st), prob.terr, prob.base, prob.tgt, prob.cb, out)
    return out


def repair(d, scenario, movable=None, max_rounds=REPAIR_ROUNDS, backend=None) -> Deployment:
    """Project onto the box constraints, then push apart separation violations.

    Order: wrap azimuth / clamp elevation angle, clamp (x, y) into the region,
    clamp z into ``[terrain + H_safe, H_max]``, then up to ``max_rounds`` of
    simultaneous displacement along each offending segment with a re-clamp
    after every round. Separations are pushed to the bound plus 1e-6 m so the
    result does not sit on the boundary through rounding. ``movable`` marks
    which UAVs may be changed (default: all). ``meta`` reports any residual
    separation deficit left after ``max_rounds``.
    """
    st = _states(d)
    M = st.shape[0]
    mov = np.ones(M, dtype=bool) if movable is None else np.asarray(movable, dtype=bool)
    out = get_backend(backend).repair_batch(st[None], mov, scenario.problem, max_rounds)[0]
    v = violations(out, scenario, backend)
    meta = {"converged": bool(v[1] == 0.0 and v[2] == 0.0)}
    if not meta["converged"]:
        meta["residual"] = {"target_sep": float(v[1]), "uav_sep": float(v[2])}
    return Deployment(out, meta)


def fitness(d, scenario, weights: FitnessWeights | None = None, backend=None) -> FitnessReport:
    st = _states(d)
    w = weights or scenario.weights
    psum, eavg, viol = get_backend(backend).evaluate_batch(st[None], scenario.problem)
    f = scalarize(psum[0], eavg[0], viol[0], w, st.shape[0], scenario.energy_term)
    return FitnessReport(float(psum[0]), float(eavg[0]), tuple(float(v) for v in viol[0]), float(f))


class Evaluator:
    """Batched fitness for the optimisers. Counts evaluations."""

    def __init__(self, scenario, backend=None, check_repaired=False):
        self.scenario = scenario
        self.kern = get_backend(backend)
        self.backend = backend
        self.n_evals = 0
        self.check_repaired = check_repaired

    def __call__(self, states):
        states = np.ascontiguousarray(states, dtype=np.float64)
        if states.ndim == 2:
            states = states[None]
        psum, eavg, viol = self.kern.evaluate_batch(states, self.scenario.problem)
        if self.check_repaired:
            hard = viol[:, [0, 3, 4]]
            if np.any(hard != 0.0):
                raise AssertionError("evaluated a candidate with box-constraint violations")
        self.n_evals += states.shape[0]
        f = scalarize(psum, eavg, viol, self.scenario.weights, states.shape[1], self.scenario.energy_term)
        return f, psum, eavg, viol

    def repair(self, states, movable=None):
        states = np.asarray(states, dtype=np.float64)
        single = states.ndim == 2
        if single:
            states = states[None]
        M = states.shape[1]
        mov = np.ones(M, dtype=bool) if movable is None else np.asarray(movable, dtype=bool)
        out = self.kern.repair_batch(states, mov, self.scenario.problem, REPAIR_ROUNDS)
        return out[0] if single else out

    def report(self, states):
        f, psum, eavg, viol = self(states)
        return FitnessReport(float(psum[0]), float(eavg[0]), tuple(float(v) for v in viol[0]), float(f[0]))


def random_states(scenario, n, rng) -> np.ndarray:
    """``n`` uniform draws inside the box constraints, shape (n, M, 5)."""
    M = scenario.M
    cb = scenario.bounds
    xmin, xmax, ymin, ymax = cb.region
    out = np.empty((n, M, 5))
    out[..., 0] = rng.uniform(xmin, xmax, (n, M))
    out[..., 1] = rng.uniform(ymin, ymax, (n, M))
    u = rng.uniform(0.0, 1.0, (n, M))
    floor = scenario.terrain.elevation(out[..., 0], out[..., 1]) + cb.H_safe
    out[..., 2] = floor + u * np.maximum(cb.H_max - floor, 0.0)
    out[..., 3] = rng.uniform(-math.pi, math.pi, (n, M))
    out[..., 4] = rng.uniform(-0.5 * math.pi, 0.5 * math.pi, (n, M))
    return out
