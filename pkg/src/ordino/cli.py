"""Command-line entry point ``ordino``.

Exit status: 0 on success, 1 on user error (bad flags, files or inputs),
2 on numerical failure (non-convergence, singular information, flat MRC
objective) or an incoherent structure in ``validate``.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .dgp import ConfigError, design, read_csv, write_csv, simulate
from .estimation import EstimationError, FitConfig, fit
from .harness import render_table, run_mc_study, worker_count
from .likelihood import DataError, ModelParams, cell_prob_matrix
from .mrc import FlatObjectiveError, MrcConfig, MrcError, fit_mrc
from .specfile import ModelSpec, SpecFileError, load_spec
from .structure import StructureError, detect_hierarchy, is_coherent, render_tree

EXIT_OK, EXIT_USER, EXIT_NUMERIC = 0, 1, 2


class UserError(Exception):
    pass


class NumericalFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UserError(f"{self.prog}: {message}")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write(path: Optional[str], text: str) -> None:
    if path:
        with open(path, "w") as fh:
            fh.write(text)


def _floats(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UserError(f"expected comma-separated numbers, got {text!r}") from None


# subcommands ---------------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = design(args.design)
    data = simulate(cfg, args.n, args.seed)
    write_csv(data, args.out)
    if args.spec_out:
        spec = ModelSpec(cfg.spec, data.names1, data.names2,
                         tuple(c for c, src in zip(data.names1, cfg.cols1) if src not in cfg.cols2),
                         tuple(c for c, src in zip(data.names2, cfg.cols2) if src not in cfg.cols1),
                         cfg.thresholds)
        _write(args.spec_out, spec.to_json() + "\n")
    info = {"design": cfg.name, "n": data.n, "seed": args.seed, "out": args.out,
            "columns1": dict(zip(data.names1, cfg.cols1)), "columns2": dict(zip(data.names2, cfg.cols2))}
    if args.json:
        sys.stdout.write(_dump(info))
    else:
        print(f"wrote {data.n} rows of {cfg.name} (seed {args.seed}) to {args.out}")
        for k, v in {**info["columns1"], **info["columns2"]}.items():
            print(f"  {k} = {v}")
    return EXIT_OK


def cmd_estimate(args) -> int:
    spec = load_spec(args.spec)
    data = read_csv(args.data)
    spec.check_data(data)
    config = FitConfig(lam=args.lam, multistart=args.multistart, seed=args.seed,
                       workers=worker_count(args.workers) if args.workers else 1)
    res = fit(data, spec.spec, args.model, config)
    doc = res.to_dict()
    _write(args.out, _dump(doc))
    if args.json:
        sys.stdout.write(_dump(doc))
    else:
        print(f"{args.model} fit, N={data.n}, loglik/N={res.loglik_at_max:.10g}, converged={res.converged}")
        se = doc["se"] or {}
        for name, val in doc["estimates"].items():
            s = se.get(name)
            print(f"  {name:32s} {val: .6g}" + (f"  ({s:.4g})" if s is not None else ""))
        if res.tie_report:
            print("  snapped ties: " + "; ".join("=".join(f"A{g}[{a},{b}]" for g, a, b in c) for c in res.tie_report))
        for msg in res.messages:
            print(f"  note: {msg}")
    if not res.converged or res.covariance is None:
        raise NumericalFailure("; ".join(res.messages) or "estimation failed")
    return EXIT_OK


def cmd_mc(args) -> int:
    config = FitConfig(lam=args.lam, multistart=args.multistart)
    summary = run_mc_study(args.design, args.reps, args.n, args.seed, config, workers=args.workers)
    _write(args.out, summary.to_json() + "\n")
    _write(args.table_out, render_table(summary, args.format))
    if args.json:
        sys.stdout.write(summary.to_json() + "\n")
    else:
        sys.stdout.write(render_table(summary, "markdown"))
        for m in summary.models():
            fails = summary.failures.get(m, [])
            print(f"{m}: {summary.n_ok(m)}/{summary.reps} replications used"
                  + ("" if summary.sd_defined(m) else " (SD undefined with fewer than two)")
                  + (f", failed: {[r for r, _ in fails]}" if fails else ""))
    return EXIT_OK


def cmd_validate(args) -> int:
    spec = load_spec(args.spec)
    if spec.thresholds is None:
        raise UserError("spec has no \"thresholds\" to validate")
    ts = spec.thresholds
    report = is_coherent(ts, args.tol)
    tree = detect_hierarchy(ts, args.tol) if report.coherent else None
    doc = {"coherent": report.coherent, "violations": [list(v) for v in report.violations],
           "hierarchical": tree is not None, "tree": render_tree(tree) if (tree is not None and args.tree) else None}
    if args.json:
        sys.stdout.write(_dump(doc))
    else:
        print("coherent" if report.coherent else "INCOHERENT")
        for v in report.violations:
            print(f"  violation at interior corner {tuple(v)}")
        if report.coherent:
            print("hierarchical" if tree is not None else "not hierarchical (no full-spanning split)")
        if doc["tree"]:
            print(doc["tree"], end="" if doc["tree"].endswith("\n") else "\n")
    return EXIT_OK if report.coherent else EXIT_NUMERIC


def _load_params(path) -> ModelParams:
    with open(path) as fh:
        doc = json.load(fh)
    if "params" in doc and "beta1" not in doc:
        doc = doc["params"]
    try:
        return ModelParams.from_dict(doc)
    except KeyError as exc:
        raise UserError(f"params file lacks {exc}") from None


def cmd_probtable(args) -> int:
    params = _load_params(args.params)
    spec = load_spec(args.spec)
    if params.spec != spec.spec:
        raise UserError(f"params are {params.spec.M1}x{params.spec.M2} but spec declares {spec.spec.M1}x{spec.spec.M2}")
    grid = cell_prob_matrix(params, _floats(args.x1), _floats(args.x2))
    if args.json:
        sys.stdout.write(_dump({"cells": grid.tolist(), "total": float(grid.sum())}))
    else:
        M2 = grid.shape[1]
        print("j1\\j2 " + " ".join(f"{j:>12d}" for j in range(1, M2 + 1)))
        for j1, row in enumerate(grid, 1):
            print(f"{j1:5d} " + " ".join(f"{v:12.8f}" for v in row))
        print(f"total {grid.sum():.12f}")
    return EXIT_OK


def cmd_mrc(args) -> int:
    data = read_csv(args.data)
    exclusive = tuple(args.exclusive.split(",")) if args.exclusive else ()
    if not exclusive and args.spec:
        spec = load_spec(args.spec)
        exclusive = spec.exclusive1 if args.dim == 1 else spec.exclusive2
    if not exclusive:
        raise UserError("give --exclusive columns or a --spec declaring them")
    exclusive = tuple(int(c) if c.isdigit() else c for c in exclusive)
    lo, hi = _floats(args.range)
    cfg = MrcConfig(dim=args.dim, exclusive=exclusive,
                    bandwidths=tuple(_floats(args.bandwidth)) if args.bandwidth else None,
                    levels=args.levels, points=args.points, search_range=(lo, hi))
    res = fit_mrc(data, cfg)
    doc = res.to_dict()
    if args.json:
        sys.stdout.write(_dump(doc))
    else:
        print(f"MRC dimension {args.dim}: exclusive {list(res.exclusive)}")
        for name, b in zip(res.exclusive, res.beta):
            print(f"  {name:16s} {b: .6g}")
        print(f"  objective {res.objective:.10g} at grid resolution {res.resolution:.3g}")
    return EXIT_OK


# parser --------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ordino", description="Bivariate ordered response models with non-lattice thresholds.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="simulate a canned design to CSV")
    s.add_argument("--design", required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--spec-out", help="also write a matching v1 spec JSON")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("estimate", help="fit a model to a CSV dataset")
    e.add_argument("--data", required=True)
    e.add_argument("--spec", required=True)
    e.add_argument("--model", choices=["nonlattice", "lattice"], default="nonlattice")
    e.add_argument("--multistart", type=int, default=64)
    e.add_argument("--lambda", dest="lam", type=float, default=None, help="penalty weight (default N)")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--workers", type=int, default=None)
    e.add_argument("--out")
    e.set_defaults(func=cmd_estimate)

    m = sub.add_parser("mc", help="Monte Carlo study of a canned design")
    m.add_argument("--design", required=True)
    m.add_argument("--reps", type=int, required=True)
    m.add_argument("--n", type=int, default=5000)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--multistart", type=int, default=16)
    m.add_argument("--lambda", dest="lam", type=float, default=None)
    m.add_argument("--workers", type=int, default=None)
    m.add_argument("--out", help="JSON summary path")
    m.add_argument("--table-out", help="rendered table path")
    m.add_argument("--format", choices=["markdown", "csv"], default="markdown")
    m.set_defaults(func=cmd_mc)

    v = sub.add_parser("validate", help="coherency and hierarchy report for a spec's thresholds")
    v.add_argument("--spec", required=True)
    v.add_argument("--tol", type=float, default=1e-9)
    v.add_argument("--tree", action="store_true", help="print the decision tree")
    v.set_defaults(func=cmd_validate)

    t = sub.add_parser("probtable", help="cell probability grid at one covariate point")
    t.add_argument("--spec", required=True)
    t.add_argument("--params", required=True, help="params JSON or an estimate result")
    t.add_argument("--x1", required=True, help="comma-separated row of X1")
    t.add_argument("--x2", required=True, help="comma-separated row of X2")
    t.set_defaults(func=cmd_probtable)

    r = sub.add_parser("mrc", help="rank-based fit of exclusive-covariate coefficients")
    r.add_argument("--data", required=True)
    r.add_argument("--dim", type=int, choices=[1, 2], default=1)
    r.add_argument("--exclusive", help="comma-separated column names or 0-based indices")
    r.add_argument("--spec", help="take exclusive columns from a v1 spec")
    r.add_argument("--bandwidth", help="comma-separated bandwidths of the localized columns")
    r.add_argument("--levels", type=int, default=3)
    r.add_argument("--points", type=int, default=41)
    r.add_argument("--range", default="-3,3")
    r.set_defaults(func=cmd_mrc)

    for sp in (s, e, m, v, t, r):
        sp.add_argument("--json", action="store_true", help="machine-readable output")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except (NumericalFailure, EstimationError, FlatObjectiveError, np.linalg.LinAlgError) as exc:
        print(f"ordino: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UserError, ConfigError, DataError, SpecFileError, StructureError, MrcError,
            ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"ordino: error: {exc}", file=sys.stderr)
        return EXIT_USER


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
