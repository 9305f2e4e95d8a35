"""Hierarchical GA + per-UAV PSO deployment search, and the two reference schemes.

Randomness comes from one root seed. Every stage draws from its own
``SeedSequence`` keyed by a fixed label tuple, and a stage's draws happen
before any of its candidates are evaluated, so results do not depend on
evaluation order or worker count.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .deploy import Deployment, Evaluator, FitnessReport, random_states
from .los import los_query
from .terrain import elevation

# label prefixes for RNG sub-streams
_GA_INIT, _GA_GEN, _PSO_STEP, _PSO_INIT, _PSO_ONLY_INIT = 1, 2, 3, 4, 5


def _rng(seed, *labels):
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *labels]))


@dataclass
class GaConfig:
    N_g: int = 50
    T_g: int = 100
    p_mut: float = 0.1
    delta: tuple | None = None  # per-component half-widths; default 10% of each range
    mu_elite: int = 5
    l: int = 4
    offspring: str = "pair"  # "pair": one tournament per generation; "full": N_g // 2 tournaments

    def __post_init__(self):
        if self.N_g < 2:
            raise ValueError("N_g must be >= 2")
        if not 1 <= self.mu_elite < self.N_g:
            raise ValueError("need 1 <= mu_elite < N_g")
        if not 2 <= self.l <= self.N_g:
            raise ValueError("need 2 <= l <= N_g")
        if not 0.0 <= self.p_mut <= 1.0:
            raise ValueError("p_mut must lie in [0, 1]")
        if self.T_g < 0:
            raise ValueError("T_g must be >= 0")
        if self.offspring not in ("pair", "full"):
            raise ValueError("offspring must be 'pair' or 'full'")
        if self.delta is not None:
            self.delta = tuple(float(v) for v in self.delta)
            if len(self.delta) != 5 or min(self.delta) < 0:
                raise ValueError("delta needs five non-negative half-widths (x, y, z, eta, zeta)")


@dataclass
class PsoConfig:
    N_p: int = 30
    T_p: int = 50
    w_max: float = 0.7
    w_min: float = 0.4
    c1: float = 1.5
    c2: float = 2.0
    v_init_frac: float = 0.1
    outer_rounds: int = 1

    def __post_init__(self):
        if self.N_p < 1:
            raise ValueError("N_p must be >= 1")
        if not self.w_max >= self.w_min >= 0:
            raise ValueError("need w_max >= w_min >= 0")
        if self.T_p < 0 or self.outer_rounds < 1:
            raise ValueError("T_p must be >= 0 and outer_rounds >= 1")


@dataclass
class OptTrace:
    ga_best: list = field(default_factory=list)
    pso_gbest: list = field(default_factory=list)  # one list per (round, uav)
    final: FitnessReport | None = None
    seed: int = 0
    wall_clock: float = 0.0
    n_evals: int = 0

    def to_dict(self):
        d = asdict(self)
        d["final"] = self.final.to_dict() if self.final else None
        return d


def component_ranges(scenario, n_grid=65):
    """Widths of the feasible box per component (x, y, z, eta, zeta)."""
    xmin, xmax, ymin, ymax = scenario.bounds.region
    gx, gy = np.meshgrid(np.linspace(xmin, xmax, n_grid), np.linspace(ymin, ymax, n_grid))
    low = float(np.min(elevation(scenario.terrain, gx, gy))) + scenario.bounds.H_safe
    zspan = max(scenario.bounds.H_max - low, 1.0)
    return np.array([xmax - xmin, ymax - ymin, zspan, 2.0 * math.pi, math.pi])


def _rank(fit):
    """Indices sorted by fitness descending, ties to lower index."""
    return np.lexsort((np.arange(fit.size), -fit))


def crossover(a, b, u):
    mask = u < 0.5
    return np.where(mask, a, b), np.where(mask, b, a)


def mutate(c, hit, delta_draw):
    return c + np.where(hit, delta_draw, 0.0)


def pso_velocity(V, S, pbest, gbest, w, c1, c2, r1, r2):
    """Inertia plus personal and global attraction; ``r1``, ``r2`` are (N_p, 1)."""
    return w * V + c1 * r1 * (pbest - S) + c2 * r2 * (gbest - S)


def ga_stage(scenario, ga: GaConfig | None = None, seed: int = 0, evaluator: Evaluator | None = None):
    """Steady-state elitist GA over full deployments. Returns ``(Deployment, best_per_generation)``."""
    ga = ga or GaConfig()
    ev = evaluator or Evaluator(scenario)
    M = scenario.M
    D = M * 5
    delta = np.tile(np.asarray(ga.delta) if ga.delta is not None else 0.1 * component_ranges(scenario), M)

    pop = ev.repair(random_states(scenario, ga.N_g, _rng(seed, _GA_INIT)))
    fit = ev(pop)[0]
    best = [float(fit.max())]
    pairs = 1 if ga.offspring == "pair" else max(ga.N_g // 2, 1)
    for t in range(ga.T_g):
        rng = _rng(seed, _GA_GEN, t)
        kids = []
        for _ in range(pairs):
            idx = rng.choice(ga.N_g, size=ga.l, replace=False)
            idx = sorted(idx, key=lambda i: (-fit[i], i))
            a = pop[idx[0]].reshape(D)
            b = pop[idx[1]].reshape(D)
            c1, c2 = crossover(a, b, rng.random(D))
            for c in (c1, c2):
                hit = rng.random(D) < ga.p_mut
                kids.append(mutate(c, hit, rng.uniform(-delta, delta)).reshape(M, 5))
        kids = ev.repair(np.array(kids))
        kfit = ev(kids)[0]
        allpop = np.concatenate([pop, kids])
        allfit = np.concatenate([fit, kfit])
        keep = _rank(allfit)[: ga.N_g]
        pop, fit = allpop[keep], allfit[keep]
        best.append(float(fit[0]))
    i = int(_rank(fit)[0])
    return Deployment(pop[i].copy(), {"fitness": float(fit[i])}), best


def pso_stage(g_star, scenario, pso: PsoConfig | None = None, seed: int = 0, evaluator: Evaluator | None = None):
    """Refine each UAV in turn with the others frozen. Returns ``(Deployment, gbest_traces)``.

    Particle 0 starts at the UAV's current state, so the returned fitness is
    never below that of ``g_star``.
    """
    pso = pso or PsoConfig()
    ev = evaluator or Evaluator(scenario)
    cur = np.array(g_star.states if isinstance(g_star, Deployment) else g_star, dtype=np.float64).copy()
    M = cur.shape[0]
    vr = pso.v_init_frac * component_ranges(scenario)
    traces = []
    cur_fit = float(ev(cur)[0][0])
    for r in range(pso.outer_rounds):
        for m in range(M):
            rng = _rng(seed, _PSO_INIT, r, m)
            mov = np.zeros(M, dtype=bool)
            mov[m] = True
            X = np.repeat(cur[None], pso.N_p, axis=0)
            X[1:, m] = random_states(scenario, pso.N_p - 1, rng)[:, m] if pso.N_p > 1 else X[1:, m]
            V = rng.uniform(-vr, vr, (pso.N_p, 5))
            if pso.N_p > 1:
                X[1:] = ev.repair(X[1:], mov)
            S = X[:, m].copy()
            F = ev(X)[0]
            pbest, pbest_f = S.copy(), F.copy()
            g = int(_rank(F)[0])
            gbest, gbest_f = S[g].copy(), float(F[g])
            trace = [gbest_f]
            for t in range(pso.T_p):
                w = pso.w_max - (pso.w_max - pso.w_min) / pso.T_p * t
                step_rng = _rng(seed, _PSO_STEP, r, m, t)
                r1 = step_rng.random(pso.N_p)[:, None]
                r2 = step_rng.random(pso.N_p)[:, None]
                V = pso_velocity(V, S, pbest, gbest, w, pso.c1, pso.c2, r1, r2)
                X = np.repeat(cur[None], pso.N_p, axis=0)
                X[:, m] = S + V
                X = ev.repair(X, mov)
                S = X[:, m].copy()
                F = ev(X)[0]
                up = F > pbest_f
                pbest[up] = S[up]
                pbest_f[up] = F[up]
                g = int(_rank(F)[0])
                if F[g] > gbest_f:
                    gbest, gbest_f = S[g].copy(), float(F[g])
                trace.append(gbest_f)
            cur[m] = gbest
            cur_fit = gbest_f
            traces.append(trace)
    return Deployment(cur, {"fitness": cur_fit}), traces


def optimize(scenario, ga: GaConfig | None = None, pso: PsoConfig | None = None, seed: int = 0, backend=None):
    """GA global search followed by per-UAV PSO refinement."""
    t0 = time.perf_counter()
    ev = Evaluator(scenario, backend, check_repaired=True)
    g_star, ga_best = ga_stage(scenario, ga, seed, ev)
    final, traces = pso_stage(g_star, scenario, pso, seed, ev)
    report = ev.report(final.states)
    final.meta.update({"scheme": "ga_pso", "ga_fitness": g_star.meta["fitness"], "fitness": report.fitness})
    trace = OptTrace(ga_best, traces, report, int(seed), time.perf_counter() - t0, ev.n_evals)
    return final, trace


def baseline_pso_only(scenario, pso: PsoConfig | None = None, seed: int = 0, backend=None):
    """Per-UAV PSO from a repaired random deployment (no GA stage)."""
    t0 = time.perf_counter()
    ev = Evaluator(scenario, backend, check_repaired=True)
    init = ev.repair(random_states(scenario, 1, _rng(seed, _PSO_ONLY_INIT))[0])
    final, traces = pso_stage(init, scenario, pso, seed, ev)
    report = ev.report(final.states)
    final.meta.update({"scheme": "pso_only", "fitness": report.fitness})
    trace = OptTrace([], traces, report, int(seed), time.perf_counter() - t0, ev.n_evals)
    return final, trace


def assigned_targets(scenario, m):
    """Targets with at least one channel strictly inside UAV ``m``'s band."""
    lo, hi = scenario.uav_bands[m]
    return [n for n, t in enumerate(scenario.targets) if any(lo < f < hi for f in t.channels)]


def _aim(state, point):
    dx, dy, dz = point[0] - state[0], point[1] - state[1], point[2] - state[2]
    state[3] = math.atan2(dy, dx)
    state[4] = math.atan2(dz, math.hypot(dx, dy))


_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_max(f, lo, hi, iters):
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


def baseline_non_optimized(scenario, altitude_step=10.0, sweeps=3, golden_iters=30, backend=None):
    """Place each UAV near its targets, climb until LoS, then tune the boresight.

    Each UAV is anchored at the centroid of its assigned targets projected
    into the region at ``terrain + H_safe``, climbs in ``altitude_step``
    increments until it sees all assigned targets (or reaches ``H_max``), and
    finally runs cyclic golden-section sweeps over (eta, zeta). ``meta``
    records per-UAV LoS success and per-sweep fitness.
    """
    t0 = time.perf_counter()
    ev = Evaluator(scenario, backend)
    cb = scenario.bounds
    M = scenario.M
    tgt = scenario.problem.tgt
    bvh = scenario.problem.bvh
    st = np.zeros((M, 5))
    groups = []
    for m in range(M):
        grp = assigned_targets(scenario, m) or list(range(scenario.N))
        groups.append(grp)
        c = tgt[grp].mean(axis=0)
        x = min(max(c[0], cb.region[0]), cb.region[1])
        y = min(max(c[1], cb.region[2]), cb.region[3])
        st[m, :3] = (x, y, elevation(scenario.terrain, x, y) + cb.H_safe)
        _aim(st[m], c)
    st = ev.repair(st)

    def sees_all(m):
        return all(los_query(bvh, scenario.terrain, st[m, :3], tgt[n], scenario.epsilon, backend).visible
                   for n in groups[m])

    reached = []
    for m in range(M):
        ok = sees_all(m)
        while not ok and st[m, 2] + altitude_step <= cb.H_max:
            st[m, 2] += altitude_step
            ok = sees_all(m)
        reached.append(bool(ok))
    st = ev.repair(st)
    for m in range(M):
        _aim(st[m], tgt[groups[m]].mean(axis=0))
    st = ev.repair(st)

    cur = float(ev(st)[0][0])
    history = [cur]
    half = (scenario.antenna.alpha_a, scenario.antenna.alpha_e)
    for _ in range(sweeps):
        for m in range(M):
            for j, hw in ((3, half[0]), (4, half[1])):
                base = st[m, j]

                def f(v, m=m, j=j):
                    trial = st.copy()
                    trial[m, j] = v
                    return float(ev(ev.repair(trial))[0][0])

                v, fv = _golden_max(f, base - 2.0 * hw, base + 2.0 * hw, golden_iters)
                if fv > cur:
                    trial = st.copy()
                    trial[m, j] = v
                    st = ev.repair(trial)
                    cur = fv
        history.append(cur)
    report = ev.report(st)
    meta = {"scheme": "non_optimized", "los_reached": reached, "sweep_fitness": history,
            "fitness": report.fitness}
    trace = OptTrace([], [], report, 0, time.perf_counter() - t0, ev.n_evals)
    return Deployment(st, meta), trace
