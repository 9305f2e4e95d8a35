"""Timing comparison of the numba and numpy kernels on a synthetic workload."""

from __future__ import annotations

import time

import numpy as np

from ._accel import HAVE_NUMBA, get_backend
from .deploy import ConstraintBounds, random_states
from .los import build_bvh, k_o_for_tolerance
from .scenario import Scenario
from .sensing import Target
from .terrain import random_model


def _timed(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def workload(seed=0, n_bumps=50, n_queries=2000, batch=200, M=3):
    rng = np.random.default_rng(seed)
    model = random_model(rng, n_bumps, (0.0, 5000.0, 0.0, 5000.0), h_range=(50.0, 400.0))
    xy1 = rng.uniform(0, 5000, (n_queries, 2))
    xy2 = rng.uniform(0, 5000, (n_queries, 2))
    z1 = model.elevation(xy1[:, 0], xy1[:, 1]) + rng.uniform(5, 300, n_queries)
    z2 = model.elevation(xy2[:, 0], xy2[:, 1]) + rng.uniform(5, 300, n_queries)
    P1 = np.column_stack([xy1, z1])
    P2 = np.column_stack([xy2, z2])
    targets = [Target((x, y, model.elevation(x, y) + 10), tuple(f0 + 10e6 * i for i in range(15)))
               for x, y, f0 in ((1000.0, 1200.0, 105e6), (3800.0, 4000.0, 205e6))]
    sc = Scenario(model, targets, [(100e6, 250e6), (200e6, 350e6), (100e6, 350e6)][:M],
                  ConstraintBounds((0.0, 5000.0, 0.0, 5000.0)))
    states = random_states(sc, batch, rng)
    return model, P1, P2, sc, states


def run(seed=0, n_queries=2000, batch=200, repeat=3, epsilon=1e-5):
    """Return a dict of timings (seconds, best of ``repeat``) and agreement checks."""
    model, P1, P2, sc, states = workload(seed, n_queries=n_queries, batch=batch)
    prob = sc.problem
    res = {"n_queries": n_queries, "batch": batch, "backends": {}}
    backends = ["numpy"] + (["numba"] if HAVE_NUMBA else [])
    outputs = {}
    for name in backends:
        kern = get_backend(name)
        bvh = build_bvh(model, 2.0)
        args = (model.params, model.base, *bvh.arrays())
        if name == "numba":  # compile outside the timed region
            kern.los_many(*args, P1[:2], P2[:2], epsilon)
            kern.evaluate_batch(states[:2], prob)
            kern.repair_batch(states[:2], np.ones(sc.M, dtype=bool), prob, 50)
        t_los, (vis, nev) = _timed(lambda: kern.los_many(*args, P1, P2, epsilon), repeat)
        t_fit, ev = _timed(lambda: kern.evaluate_batch(states, prob), repeat)
        t_rep, rep = _timed(lambda: kern.repair_batch(states, np.ones(sc.M, dtype=bool), prob, 50), repeat)
        outputs[name] = (vis, ev, rep)
        res["backends"][name] = {"los_s": t_los, "fitness_s": t_fit, "repair_s": t_rep,
                                 "los_mean_evaluations": float(np.mean(nev))}
    if len(outputs) == 2:
        (v0, e0, r0), (v1, e1, r1) = outputs["numpy"], outputs["numba"]
        res["agreement"] = {
            "los": float(np.mean(v0 == v1)),
            "p_sum_max_abs_diff": float(np.max(np.abs(e0[0] - e1[0]))),
            "repair_max_abs_diff": float(np.max(np.abs(r0 - r1))),
        }
        res["speedup"] = {k: res["backends"]["numpy"][k] / max(res["backends"]["numba"][k], 1e-12)
                          for k in ("los_s", "fitness_s", "repair_s")}
    # how often the default 2-sigma leaf boxes change the answer vs a tight tail bound
    kern = get_backend()
    tight = build_bvh(model, k_o_for_tolerance(model, 1e-3))
    loose = build_bvh(model, 2.0)
    vt, _ = kern.los_many(model.params, model.base, *tight.arrays(), P1, P2, epsilon)
    vl, _ = kern.los_many(model.params, model.base, *loose.arrays(), P1, P2, epsilon)
    res["k_o_2_disagreement"] = float(np.mean(vt != vl))
    return res


def format_report(res) -> str:
    lines = [f"workload: {res['n_queries']} LoS queries, fitness/repair batch of {res['batch']}"]
    for name, b in res["backends"].items():
        lines.append(f"{name:6s} los {b['los_s'] * 1e3:9.2f} ms  fitness {b['fitness_s'] * 1e3:9.2f} ms  "
                     f"repair {b['repair_s'] * 1e3:9.2f} ms  mean LoS evals {b['los_mean_evaluations']:.2f}")
    if "speedup" in res:
        s = res["speedup"]
        lines.append(f"speedup (numpy/numba): los {s['los_s']:.1f}x  fitness {s['fitness_s']:.1f}x  "
                     f"repair {s['repair_s']:.1f}x")
        a = res["agreement"]
        lines.append(f"agreement: los {a['los']:.4f}  p_sum max diff {a['p_sum_max_abs_diff']:.3g}  "
                     f"repair max diff {a['repair_max_abs_diff']:.3g}")
    lines.append(f"LoS answers changed by k_o=2 leaf boxes vs tail bound 1e-3 m: {res['k_o_2_disagreement']:.4f}")
    return "\n".join(lines)
