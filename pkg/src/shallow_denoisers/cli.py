"""Command-line runner: experiment specs, builtin figure runs, property suites.

Exit codes: 0 ok, 2 configuration error, 3 numerical failure, 4 acceptance miss.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import closed_form as cf
from . import experiments as ex
from .analysis import svg_overlay, write_alignment_csv, write_csv
from .errors import ConfigParse, DenoiserError
from .gaussian_moments import moments_bench, write_bench_csv
from .geometry import classify_simplex
from .network import dumps as dump_net
from .training import write_trace_csv

OK, CONFIG_ERROR, NUMERIC_FAILURE, ACCEPTANCE_MISS = 0, 2, 3, 4

FIG2_MIN_COS = {"obtuse": 0.98, "equilateral": 0.95}
EQUILATERAL_COST = 6.0


class AcceptanceMiss(Exception):
    pass


def _pmap(fn, items, threads):
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# --- artifacts --------------------------------------------------------------------


def _boundaries(f):
    """Predicted boundary lines (normal, offset) of a closed-form denoiser."""
    if not isinstance(f, cf.RankOneSumDenoiser):
        return []
    return [(u.u, float(t + u.u @ u.z)) for u in f.units for t in u.profile.knots]


def write_run(res: ex.RunResult, out_dir: str):
    """Write every artifact of one run into ``out_dir``; returns the file names."""
    os.makedirs(out_dir, exist_ok=True)
    spec = res.spec
    written = []

    def path(name):
        written.append(name)
        return os.path.join(out_dir, name)

    if "csv" in spec.outputs:
        names, Y, cols = ex.function_grid(res)
        write_csv(path("function.csv"), names + list(cols),
                  [tuple(float(v) for v in Y[i]) + tuple(float(c[i]) for c in cols.values())
                   for i in range(len(Y))])
        write_trace_csv(path("trace.csv"), res.trace)
        if res.alignment is not None:
            write_alignment_csv(path("alignment.csv"), res.alignment)
    write_csv(path("summary.csv"), ["key", "value"], [(k, _cell(v)) for k, v in res.summary.items()]
              + ([("closed_form_error", res.closed_error)] if res.closed_error else []))
    with open(path("weights.json"), "w") as fh:
        fh.write(dump_net(res.net) + "\n")
    if res.closed is not None:
        with open(path("closed_form.json"), "w") as fh:
            fh.write(cf.dumps(res.closed) + "\n")
    if "svg" in spec.outputs and res.clean.d == 2:
        tag = classify_simplex(res.clean)
        apex = getattr(tag, "apex", None)
        N = res.clean.N
        edges = [(apex, j) for j in range(N) if j != apex] if apex is not None else \
            [(i, j) for i in range(N) for j in range(i + 1, N)]
        rho = spec.rho or (res.noisy.ball_radius() if res.noisy is not None else None)
        with open(path("overlay.svg"), "w") as fh:
            fh.write(svg_overlay(res.clean, rho, res.net, spec.significance, edges,
                                 _boundaries(res.closed), title=spec.name))
    return written


def _cell(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return float(v)
    return str(v)


# --- commands -----------------------------------------------------------------------


def _load_spec(path, seed):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as err:
        raise ConfigParse(0, f"cannot read {path}: {err.strerror}") from None
    return ex.spec_from_text(text, seed)


def cmd_run(args):
    spec = _load_spec(args.spec, args.seed).scaled(args.budget_scale)
    res = ex.run_spec(spec)
    files = write_run(res, os.path.join(args.out_dir, spec.name))
    _report({"run": spec.name, "files": files, **{k: _cell(v) for k, v in res.summary.items()}})
    if res.closed_error and "closed_form" in spec.comparisons:
        raise DenoiserError(res.closed_error)
    return OK


def cmd_check(args):
    spec = _load_spec(args.spec, args.seed)
    clean = spec.clean()
    _report({"check": spec.name, "N": clean.N, "d": clean.d, "mode": spec.train.mode,
             "iterations": spec.train.iterations, "comparisons": list(spec.comparisons)})
    return OK


def _fig1(seed, budget_scale, out_dir):
    online, offline = (s.scaled(budget_scale) for s in ex.fig1_specs(seed))
    results = [ex.run_spec(online), ex.run_spec(offline)]
    for r in results:
        write_run(r, os.path.join(out_dir, r.spec.name))
    clean = results[0].clean
    noisy = results[1].noisy
    y = np.linspace(-9, 9, 1801)
    cols = {"online": results[0].net(y), "offline": results[1].net(y),
            "emmse": ex.EmmseDenoiser(clean, offline.train.sigma)(y)}
    closed = results[1].closed
    if closed is not None:
        cols["closed_form"] = closed(y)
    write_csv(os.path.join(out_dir, "fig1.csv"), ["y", *cols],
              [(float(y[i]), *[float(c[i]) for c in cols.values()]) for i in range(len(y))])
    report = {"figure": "fig1", "well_separated": bool(results[1].summary["well_separated"]),
              "min_gap": results[1].summary["min_gap"],
              "offline_train_mse": results[1].summary["train_mse"]}
    if closed is None:
        report["verdict"] = "closed form undefined: " + results[1].closed_error
        _report(report)
        raise AcceptanceMiss("fig1 noise clusters overlap, no closed form to compare against")
    dev = ex.fig1_deviation(results[1].net, closed)
    gap = ex.emmse_gap(clean, offline.train.sigma, closed)
    report.update(max_deviation=dev, emmse_gap=gap)
    _report(report)
    if not (dev <= 0.15 and gap >= 0.5 and noisy is not None):
        raise AcceptanceMiss("fig1 trained curve does not match the closed form")


def _fig2_trial(item):
    kind, seed, budget_scale, out_dir = item
    spec = (ex.equilateral_cost_spec(seed) if kind == "equilateral_cost"
            else ex.fig2_spec(kind, seed)).scaled(budget_scale)
    res = ex.run_spec(spec)
    write_run(res, os.path.join(out_dir, spec.name))
    return kind, seed, res.summary


def _fig2(seed, budget_scale, out_dir, threads):
    items = [(k, seed + i, budget_scale, out_dir) for k in ("obtuse", "equilateral") for i in range(3)]
    items.append(("equilateral_cost", seed, budget_scale, out_dir))
    rows = []
    passes = {"obtuse": 0, "equilateral": 0}
    cost_ok = False
    for kind, s, summ in _pmap(_fig2_trial, items, threads):
        if kind == "equilateral_cost":
            cost_ok = abs(summ["balanced_cost"] - EQUILATERAL_COST) <= 0.1 * EQUILATERAL_COST
            rows.append((kind, s, "", summ["balanced_cost"], summ.get("closed_form_cost", ""),
                         "pass" if cost_ok else "fail"))
            continue
        good = summ.get("min_abs_cos", 0.0) >= FIG2_MIN_COS[kind]
        passes[kind] += good
        rows.append((kind, s, summ.get("min_abs_cos", ""), summ["balanced_cost"],
                     summ.get("closed_form_cost", ""), "pass" if good else "fail"))
    write_csv(os.path.join(out_dir, "fig2_summary.csv"),
              ["trial", "seed", "min_abs_cos", "balanced_cost", "closed_form_cost", "verdict"], rows)
    _report({"figure": "fig2", "obtuse_passes": passes["obtuse"],
             "equilateral_passes": passes["equilateral"], "equilateral_cost_ok": cost_ok})
    if passes["obtuse"] < 2 or passes["equilateral"] < 2 or not cost_ok:
        raise AcceptanceMiss("fig2 alignment or cost check missed")


def _suite_item(item):
    name, seed, budget_scale = item
    return ex.run_suite(name, seed, budget_scale)


def _suite(seed, budget_scale, out_dir, threads):
    os.makedirs(out_dir, exist_ok=True)
    results = _pmap(_suite_item, [(n, seed, budget_scale) for n in ex.SUITES], threads)
    for r in results:
        write_csv(os.path.join(out_dir, f"{r.name}.csv"), r.header, r.rows)
    write_csv(os.path.join(out_dir, "suite_summary.csv"), ["suite", "passed", "detail"],
              [(r.name, "true" if r.passed else "false", r.detail) for r in results])
    _report({"suite": {r.name: r.passed for r in results}})
    if not all(r.passed for r in results):
        raise AcceptanceMiss("property suite failures: "
                             + ", ".join(r.name for r in results if not r.passed))


def cmd_builtin(args):
    out = os.path.join(args.out_dir, args.which)
    os.makedirs(out, exist_ok=True)
    if args.which == "fig1":
        _fig1(args.seed or 0, args.budget_scale, out)
    elif args.which == "fig2":
        _fig2(args.seed or 0, args.budget_scale, out, args.threads)
    else:
        _suite(args.seed or 0, args.budget_scale, out, args.threads)
    return OK


def cmd_moments_bench(args):
    os.makedirs(args.out_dir, exist_ok=True)
    rows = moments_bench(args.samples, args.seed or 0, "sobol") + \
        moments_bench(args.samples, args.seed or 0, "plain")
    path = os.path.join(args.out_dir, "moments_bench.csv")
    write_bench_csv(path, rows)
    _report({"moments_bench": path, "max_normalized_error_sobol":
             max(r.normalized_error for r in rows if r.case.endswith("/sobol"))})
    return OK


def _report(obj):
    print(json.dumps(obj, default=str))


def build_parser():
    p = argparse.ArgumentParser(prog="shallow-denoisers", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the spec's seed")
    common.add_argument("--out-dir", default="out", help="artifact directory (default: out)")
    common.add_argument("--threads", type=int, default=1, help="parallel trials (default: 1)")
    common.add_argument("--budget-scale", type=float, default=1.0,
                        help="multiply training iterations and suite sizes (default: 1)")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", parents=[common], help="train and evaluate one spec file")
    r.add_argument("spec")
    r.set_defaults(func=cmd_run)
    c = sub.add_parser("check", parents=[common], help="validate a spec file without training")
    c.add_argument("spec")
    c.set_defaults(func=cmd_check)
    b = sub.add_parser("builtin", parents=[common], help="run a builtin experiment")
    b.add_argument("which", choices=["fig1", "fig2", "suite"])
    b.set_defaults(func=cmd_builtin)
    m = sub.add_parser("moments-bench", parents=[common], help="ReLU moment accuracy benchmark")
    m.add_argument("--samples", type=int, default=1_000_000)
    m.set_defaults(func=cmd_moments_bench)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigParse as err:
        return _fail(CONFIG_ERROR, err)
    except AcceptanceMiss as err:
        return _fail(ACCEPTANCE_MISS, err)
    except (DenoiserError, ArithmeticError) as err:
        return _fail(NUMERIC_FAILURE, err)
    except ValueError as err:
        return _fail(CONFIG_ERROR, err)


def _fail(code, err):
    print(json.dumps({"error": type(err).__name__, "message": str(err), "exit": code}),
          file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
