"""Monte Carlo comparison of deployment schemes, statistics and report files.

Seeds are derived up front from ``(root_seed, labels...)``, so a plan gives
the same records at any worker count. Wall-clock times go to
``timings.csv``. They are kept out of ``runs.csv`` and ``summary.json`` so
those two files stay byte-identical across repeat runs.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np
from scipy import stats

from .deploy import VIOLATION_NAMES
from .optimizer import GaConfig, PsoConfig, baseline_non_optimized, baseline_pso_only, optimize
from .scenario import ConfigError, scenario_from_dict
from .terrain import elevation

SCHEMES = ("ga_pso", "pso_only", "non_optimized")
_SCHEME_CODE = {s: i + 1 for i, s in enumerate(SCHEMES)}
_RUN, _TARGETS = 11, 12
_MASK63 = (1 << 63) - 1


def derive_seed(root_seed, *labels) -> int:
    ss = np.random.SeedSequence([int(root_seed) & 0xFFFFFFFFFFFFFFFF, *labels])
    return int(ss.generate_state(1, dtype=np.uint64)[0]) & _MASK63


def worker_count(requested=None) -> int:
    """Explicit request first, then ``TERRADEPLOY_WORKERS``, then 1."""
    if requested is not None:
        n = int(requested)
    else:
        env = os.environ.get("TERRADEPLOY_WORKERS", "").strip()
        try:
            n = int(env) if env else 1
        except ValueError as exc:
            raise ConfigError(f"TERRADEPLOY_WORKERS must be an integer, got {env!r}") from exc
    if n < 1:
        raise ConfigError("worker count must be >= 1")
    return n


@dataclass
class ExperimentPlan:
    scenario: dict  # scenario JSON template
    schemes: tuple = SCHEMES
    uav_counts: tuple = (2,)
    runs: int = 1
    target_placement: dict = field(default_factory=lambda: {"mode": "fixed"})
    root_seed: int = 0
    ga: GaConfig = field(default_factory=GaConfig)
    pso: PsoConfig = field(default_factory=PsoConfig)
    root: str = "."  # directory for resolving relative terrain paths

    def __post_init__(self):
        self.schemes = tuple(self.schemes)
        self.uav_counts = tuple(int(m) for m in self.uav_counts)
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if not self.uav_counts or min(self.uav_counts) < 1:
            raise ConfigError("uav_counts must be a non-empty list of positive integers")
        if not self.schemes:
            raise ConfigError("schemes must be non-empty")
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad:
            raise ConfigError(f"unknown schemes {bad}; choose from {list(SCHEMES)}")
        mode = self.target_placement.get("mode", "fixed")
        if mode not in ("fixed", "uniform_random"):
            raise ConfigError(f"unknown target placement mode {mode!r}")
        if mode == "uniform_random" and "box" not in self.target_placement:
            raise ConfigError("uniform_random placement needs a 'box' [xmin, xmax, ymin, ymax]")
        n_bands = len(self.scenario.get("uav_bands", ()))
        if max(self.uav_counts) > n_bands:
            raise ConfigError(f"uav_counts up to {max(self.uav_counts)} but scenario lists {n_bands} UAV bands")

    @property
    def n_records(self):
        return len(self.schemes) * len(self.uav_counts) * self.runs

    def tasks(self):
        """``(index, scheme, M, run)`` in emission order."""
        i = 0
        for s in self.schemes:
            for m in self.uav_counts:
                for r in range(self.runs):
                    yield i, s, m, r
                    i += 1


def optimizer_configs(d):
    """``GaConfig`` and ``PsoConfig`` from ``{"ga": {...}, "pso": {...}}``.

    The PSO block may give the inertia ends as ``"w": [w_max, w_min]`` and the
    acceleration coefficients as ``"c": [c1, c2]``.
    """
    try:
        pso = dict(d.get("pso", {}))
        if "w" in pso:
            pso["w_max"], pso["w_min"] = pso.pop("w")
        if "c" in pso:
            pso["c1"], pso["c2"] = pso.pop("c")
        return GaConfig(**d.get("ga", {})), PsoConfig(**pso)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid optimiser config: {exc}") from exc


def plan_from_dict(d, root=".") -> ExperimentPlan:
    try:
        sc = d["scenario"]
        if isinstance(sc, str):
            path = os.path.join(root, sc)
            with open(path) as fh:
                sc = json.load(fh)
            root = os.path.dirname(os.path.abspath(path))
        ga, pso = optimizer_configs(d)
        return ExperimentPlan(
            scenario=sc,
            schemes=tuple(d.get("schemes", SCHEMES)),
            uav_counts=tuple(d.get("uav_counts", (len(sc["uav_bands"]),))),
            runs=int(d.get("runs", 1)),
            target_placement=dict(d.get("target_placement", {"mode": "fixed"})),
            root_seed=int(d.get("root_seed", 0)),
            ga=ga, pso=pso, root=root,
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError, OSError) as exc:
        raise ConfigError(f"invalid plan: {exc}") from exc


def load_plan(path) -> ExperimentPlan:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return plan_from_dict(d, os.path.dirname(os.path.abspath(path)))


def sample_targets(template, placement, rng, terrain, S_min, region):
    """Uniform (x, y) in ``placement['box']`` at ``height_agl`` above ground.

    Points closer than ``S_min`` to the deployable-region boundary are
    rejected so that a UAV can always sit at the required separation.
    """
    xmin, xmax, ymin, ymax = placement["box"]
    agl = float(placement.get("height_agl", 10.0))
    rx0, rx1, ry0, ry1 = region
    out = []
    for t in template:
        for _ in range(100000):
            x, y = rng.uniform(xmin, xmax), rng.uniform(ymin, ymax)
            if min(x - rx0, rx1 - x, y - ry0, ry1 - y) >= S_min:
                break
        else:
            raise ConfigError("target placement box leaves no point S_min inside the region")
        t = dict(t)
        t["pos"] = [x, y, float(elevation(terrain, x, y)) + agl]
        out.append(t)
    return out


def _scenario_hash(d):
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class RunRecord:
    index: int
    scheme: str
    M: int
    run: int
    seed: int
    scheme_seed: int
    scenario_hash: str
    P_sum: float
    E_avg_ex: float
    fitness: float
    feasible: bool
    v_region: float = 0.0
    v_target_sep: float = 0.0
    v_uav_sep: float = 0.0
    v_orientation: float = 0.0
    v_altitude: float = 0.0
    n_evals: int = 0
    error: str = ""
    wall_clock: float = 0.0


CSV_COLUMNS = tuple(f.name for f in fields(RunRecord) if f.name != "wall_clock")


def run_scenario_dict(plan: ExperimentPlan, M, run):
    """Scenario dict for ``run`` (targets resampled if randomised) and its hash."""
    d = copy.deepcopy(plan.scenario)
    if plan.target_placement.get("mode", "fixed") == "uniform_random":
        base = scenario_from_dict(d, plan.root)
        rng = np.random.default_rng(derive_seed(plan.root_seed, _TARGETS, run))
        d["targets"] = sample_targets(d["targets"], plan.target_placement, rng, base.terrain,
                                      base.bounds.S_min, base.bounds.region)
    return d, _scenario_hash(d)


def run_one(plan: ExperimentPlan, index, scheme, M, run) -> RunRecord:
    seed = derive_seed(plan.root_seed, _RUN, M, run)
    sseed = derive_seed(plan.root_seed, _SCHEME_CODE[scheme], M, run)
    t0 = time.perf_counter()
    shash = ""
    try:
        d, shash = run_scenario_dict(plan, M, run)
        sc = scenario_from_dict(d, plan.root).with_uavs(M)
        if scheme == "ga_pso":
            _, tr = optimize(sc, plan.ga, plan.pso, sseed)
        elif scheme == "pso_only":
            _, tr = baseline_pso_only(sc, plan.pso, sseed)
        else:
            _, tr = baseline_non_optimized(sc)
        rep = tr.final
        v = dict(zip(VIOLATION_NAMES, rep.violations))
        return RunRecord(index, scheme, M, run, seed, sseed, shash, rep.p_sum, rep.e_avg_ex, rep.fitness,
                         rep.feasible, v["region"], v["target_sep"], v["uav_sep"], v["orientation"],
                         v["altitude"], tr.n_evals, "", time.perf_counter() - t0)
    except Exception as exc:  # recorded, never aborts the batch
        nan = math.nan
        return RunRecord(index, scheme, M, run, seed, sseed, shash, nan, nan, nan, False, nan, nan, nan, nan, nan,
                         0, f"{type(exc).__name__}: {exc}", time.perf_counter() - t0)


def _run_task(args):
    return run_one(*args)


def run_experiment(plan: ExperimentPlan, workers=None) -> list:
    """Execute every (scheme, M, run) of the plan; records in plan order."""
    n = worker_count(workers)
    tasks = [(plan, *t) for t in plan.tasks()]
    if n == 1 or len(tasks) == 1:
        recs = [_run_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=min(n, len(tasks))) as ex:
            recs = list(ex.map(_run_task, tasks))
    return sorted(recs, key=lambda r: r.index)


# ------------------------------------------------------------------------ statistics


def confidence_interval(samples, level=0.95):
    """``(mean, half_width)`` of the Student-t interval."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size < 2:
        raise ValueError("confidence interval needs at least 2 samples")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    mean = float(np.mean(x))
    s = float(np.std(x, ddof=1))
    return mean, float(stats.t.ppf(0.5 * (1.0 + level), x.size - 1) * s / math.sqrt(x.size))


def _stat(values, level):
    x = np.array([v for v in values if math.isfinite(v)])
    if x.size == 0:
        return {"mean": None, "ci_half_width": None, "median": None, "n": 0}
    if x.size == 1:
        return {"mean": float(x[0]), "ci_half_width": None, "median": float(x[0]), "n": 1}
    m, h = confidence_interval(x, level)
    return {"mean": m, "ci_half_width": h, "median": float(np.median(x)), "n": int(x.size)}


METRICS = ("P_sum", "E_avg_ex", "fitness")


def summarize(records, level=0.95):
    groups = {}
    for r in records:
        groups.setdefault((r.scheme, r.M), []).append(r)
    out = []
    for (scheme, M), rs in groups.items():
        g = {"scheme": scheme, "M": M, "runs": len(rs), "failed": sum(1 for r in rs if r.error),
             "feasible_fraction": sum(1 for r in rs if r.feasible) / len(rs)}
        for k in METRICS:
            g[k] = _stat([getattr(r, k) for r in rs], level)
        out.append(g)
    return {"level": level, "groups": out}


# ------------------------------------------------------------------------ files


def _fmt(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def records_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def curves_csv(summary) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("scheme", "M", "metric", "mean", "ci"))
    for g in summary["groups"]:
        for k in METRICS:
            s = g[k]
            w.writerow((g["scheme"], g["M"], k, "" if s["mean"] is None else _fmt(s["mean"]),
                        "" if s["ci_half_width"] is None else _fmt(s["ci_half_width"])))
    return buf.getvalue()


def summary_json(summary) -> str:
    return json.dumps(summary, indent=2, sort_keys=False) + "\n"


def emit_report(records, out_dir, force=False, level=0.95):
    """Write runs.csv, summary.json, curves.csv and timings.csv; returns the paths."""
    if not records:
        raise ValueError("no records to report")
    names = ("runs.csv", "summary.json", "curves.csv", "timings.csv")
    paths = [os.path.join(out_dir, n) for n in names]
    if not force:
        clash = [p for p in paths if os.path.exists(p)]
        if clash:
            raise FileExistsError(f"{clash[0]} exists (use --force to overwrite)")
    os.makedirs(out_dir, exist_ok=True)
    summ = summarize(records, level)
    timings = "index,wall_clock\n" + "".join(f"{r.index},{_fmt(float(r.wall_clock))}\n" for r in records)
    for p, text in zip(paths, (records_csv(records), summary_json(summ), curves_csv(summ), timings)):
        with open(p, "w", newline="") as fh:
            fh.write(text)
    return paths


def _parse(name, s):
    ftype = {f.name: f.type for f in fields(RunRecord)}[name]
    if ftype == "bool":
        return s == "1"
    if ftype == "int":
        return int(s)
    if ftype == "float":
        return float(s)
    return s


def parse_runs_csv(text) -> list:
    rows = list(csv.DictReader(io.StringIO(text)))
    return [RunRecord(**{k: _parse(k, v) for k, v in row.items()}) for row in rows]


def load_records(in_dir) -> list:
    with open(os.path.join(in_dir, "runs.csv"), newline="") as fh:
        recs = parse_runs_csv(fh.read())
    tpath = os.path.join(in_dir, "timings.csv")
    if os.path.exists(tpath):
        with open(tpath) as fh:
            t = {int(r["index"]): float(r["wall_clock"]) for r in csv.DictReader(fh)}
        for r in recs:
            r.wall_clock = t.get(r.index, 0.0)
    return recs
