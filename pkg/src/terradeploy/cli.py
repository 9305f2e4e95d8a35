"""Command-line entry point.

Exit codes: 0 success, 1 configuration / input error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import harness
from .deploy import VIOLATION_NAMES
from .optimizer import baseline_non_optimized, baseline_pso_only, optimize
from .scenario import ConfigError, load_scenario
from .terrain import HeightmapError, fit_gaussians, load_heightmap_file, load_model, save_model

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _point(s):
    try:
        v = [float(t) for t in s.split(",")]
    except ValueError as exc:
        raise ConfigError(f"bad point {s!r}: {exc}") from exc
    if len(v) != 3:
        raise ConfigError(f"point needs x,y,z, got {s!r}")
    return v


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _check_out(out_dir, names, force):
    if force:
        return
    for n in names:
        p = os.path.join(out_dir, n)
        if os.path.exists(p):
            raise ConfigError(f"{p} exists (use --force to overwrite)")


def cmd_los_check(a):
    from .los import build_bvh, los_dense_oracle, los_query

    try:
        model = load_model(a.terrain)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"{a.terrain}: {exc}") from exc
    p1, p2 = _point(a.from_), _point(a.to)
    try:
        res = los_query(build_bvh(model, a.k_o), model, p1, p2, a.epsilon)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    print(int(res.visible))
    print(f"evaluations {res.evaluations}")
    if a.oracle_step is not None:
        try:
            o = los_dense_oracle(model, p1, p2, a.oracle_step)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        print(f"oracle {int(o.visible)}")
        print(f"oracle_evaluations {o.evaluations}")
    return EXIT_OK


def cmd_optimize(a):
    sc = load_scenario(a.scenario)
    cfg = _load_json(a.config) if a.config else {}
    ga, pso = harness.optimizer_configs(cfg)
    _check_out(a.out, ("deployment.json", "trace.json", "runs.csv", "summary.json"), a.force)
    if a.scheme == "ga_pso":
        dep, tr = optimize(sc, ga, pso, a.seed)
    elif a.scheme == "pso_only":
        dep, tr = baseline_pso_only(sc, pso, a.seed)
    else:
        dep, tr = baseline_non_optimized(sc)
    rep = tr.final
    v = dict(zip(VIOLATION_NAMES, rep.violations))
    rec = harness.RunRecord(0, a.scheme, sc.M, 0, a.seed, a.seed, "", rep.p_sum, rep.e_avg_ex, rep.fitness,
                            rep.feasible, v["region"], v["target_sep"], v["uav_sep"], v["orientation"],
                            v["altitude"], tr.n_evals, "", tr.wall_clock)
    os.makedirs(a.out, exist_ok=True)
    trace = tr.to_dict()
    trace.pop("wall_clock")
    files = {
        "deployment.json": json.dumps({**dep.to_dict(), "report": rep.to_dict()}, indent=2) + "\n",
        "trace.json": json.dumps(trace) + "\n",
        "runs.csv": harness.records_csv([rec]),
        "summary.json": json.dumps({"scheme": a.scheme, "M": sc.M, "seed": a.seed, **rep.to_dict()}, indent=2) + "\n",
    }
    for name, text in files.items():
        with open(os.path.join(a.out, name), "w", newline="") as fh:
            fh.write(text)
    print(f"fitness {rep.fitness:.6f}  P_sum {rep.p_sum:.6f}  E_avg_ex {rep.e_avg_ex:.3f} J  "
          f"feasible {int(rep.feasible)}  evaluations {tr.n_evals}  ({tr.wall_clock:.2f} s)")
    return EXIT_OK


def cmd_benchmark(a):
    plan = harness.load_plan(a.plan)
    workers = harness.worker_count(a.workers)
    _check_out(a.out, ("runs.csv", "summary.json", "curves.csv", "timings.csv"), a.force)
    recs = harness.run_experiment(plan, workers)
    harness.emit_report(recs, a.out, force=True)
    failed = [r for r in recs if r.error]
    print(f"{len(recs)} runs, {len(failed)} failed; wrote {a.out}")
    for r in failed:
        print(f"run {r.index} ({r.scheme}, M={r.M}, run {r.run}): {r.error}", file=sys.stderr)
    return EXIT_OK


def cmd_fit_terrain(a):
    fmt = a.format or ("csv" if a.grid.lower().endswith(".csv") else "esri_ascii")
    try:
        grid = load_heightmap_file(a.grid, fmt, **({"cell_size": a.cell_size} if fmt == "csv" else {}))
    except OSError as exc:
        raise ConfigError(f"{a.grid}: {exc}") from exc
    if a.components < 1:
        raise ConfigError("--components must be >= 1")
    model, rmse = fit_gaussians(grid, a.components, seed=a.seed)
    save_model(model, a.out)
    print(f"components {model.n_components}  rmse {rmse:.6g} m  wrote {a.out}")
    return EXIT_OK


def cmd_report(a):
    path = os.path.join(a.in_, "runs.csv")
    if not os.path.exists(path):
        raise ConfigError(f"{path} not found")
    try:
        recs = harness.load_records(a.in_)
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not recs:
        raise ConfigError(f"{path} has no records")
    summ = harness.summarize(recs, a.level)
    sys.stdout.write(harness.summary_json(summ) if a.format == "json" else harness.curves_csv(summ))
    return EXIT_OK


def cmd_bench_kernels(a):
    from . import bench

    res = bench.run(seed=a.seed, n_queries=a.queries, batch=a.batch, repeat=a.repeat)
    print(json.dumps(res, indent=2) if a.json else bench.format_report(res))
    return EXIT_OK


def build_parser():
    p = _Parser(prog="terradeploy", description="UAV spectrum-sensing deployment over Gaussian-mixture terrain.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("los-check", help="line-of-sight between two points")
    s.add_argument("--terrain", required=True)
    s.add_argument("--from", dest="from_", required=True, metavar="X,Y,Z")
    s.add_argument("--to", required=True, metavar="X,Y,Z")
    s.add_argument("--epsilon", type=float, default=1e-5)
    s.add_argument("--k-o", type=float, default=2.0, help="leaf box half-width in sigmas")
    s.add_argument("--oracle-step", type=float, default=None, help="dense oracle step in t, at most 1e-3")
    s.set_defaults(fn=cmd_los_check)

    s = sub.add_parser("optimize", help="optimise one scenario")
    s.add_argument("--scenario", required=True)
    s.add_argument("--config", default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--scheme", choices=harness.SCHEMES, default="ga_pso")
    s.add_argument("--out", required=True)
    s.add_argument("--force", action="store_true")
    s.set_defaults(fn=cmd_optimize)

    s = sub.add_parser("benchmark", help="run a Monte Carlo experiment plan")
    s.add_argument("--plan", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--workers", type=int, default=None)
    s.add_argument("--force", action="store_true")
    s.set_defaults(fn=cmd_benchmark)

    s = sub.add_parser("fit-terrain", help="fit Gaussian bumps to a heightmap")
    s.add_argument("--grid", required=True)
    s.add_argument("--components", type=int, default=50)
    s.add_argument("--out", required=True)
    s.add_argument("--format", choices=("esri_ascii", "csv"), default=None)
    s.add_argument("--cell-size", type=float, default=1.0, help="CSV only")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(fn=cmd_fit_terrain)

    s = sub.add_parser("report", help="summarise an existing results directory")
    s.add_argument("--in", dest="in_", required=True)
    s.add_argument("--format", choices=("csv", "json"), default="json")
    s.add_argument("--level", type=float, default=0.95)
    s.set_defaults(fn=cmd_report)

    s = sub.add_parser("bench-kernels", help="time numba vs numpy kernels")
    s.add_argument("--queries", type=int, default=2000)
    s.add_argument("--batch", type=int, default=200)
    s.add_argument("--repeat", type=int, default=3)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--json", action="store_true")
    s.set_defaults(fn=cmd_bench_kernels)
    return p


def main(argv=None) -> int:
    try:
        a = build_parser().parse_args(argv)
        return a.fn(a)
    except (ConfigError, HeightmapError, FileExistsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
