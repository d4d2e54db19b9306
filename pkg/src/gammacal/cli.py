"""Command-line front end.

    gammacal simulate  --experiment 1 --seed 1 --out DIR
    gammacal bounds    --data obs.csv [--gamma-grid 1:20:20] [--interval ci]
    gammacal calibrate {ib,rct,nco} ...
    gammacal reproduce (--experiment N | --all) [--scale desk]

Exit codes: 0 success, 2 usage or configuration, 3 file I/O, 4 numerical failure.
"""

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import bounds_curve, critical_value, make_grid, parse_grid
from .calibration import default_lb_grid, informal_benchmark, nco_lower_bound, rct_lower_bound
from .data import Dataset
from .errors import InvalidInputError, NumericalError
from .harness import SCALES, run_all, run_experiment
from .simgen import EXPERIMENT_IDS, export_pair, make_config, sample_pair

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _default_threads():
    try:
        return max(1, int(os.environ.get("GAMMA_CAL_THREADS", "1")))
    except ValueError:
        return 1


def _alpha(text):
    a = float(text)
    if not 0.0 < a < 0.5:
        raise argparse.ArgumentTypeError("alpha must lie in (0, 0.5)")
    return a


def _grid(text):
    try:
        return parse_grid(text)
    except InvalidInputError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser():
    p = _Parser(prog="gammacal", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="generate an RCT/observational pair")
    s.add_argument("--experiment", type=int, default=1)
    s.add_argument("--seed", type=int, default=1)
    s.add_argument("--out", default=".")
    s.add_argument("--debug-oracle", action="store_true",
                   help="also export the hidden confounders and true propensities")

    b = sub.add_parser("bounds", help="sensitivity bounds for the ATE over a Gamma grid")
    b.add_argument("--data", required=True)
    b.add_argument("--gamma-grid", type=_grid, default=make_grid(1, 20, 20))
    b.add_argument("--interval", choices=("pei", "ci"), default="pei")
    b.add_argument("--alpha", type=_alpha, default=0.05)
    b.add_argument("--B", type=int, default=500)
    b.add_argument("--policy", choices=("full", "fast"), default="full")
    b.add_argument("--seed", type=int, default=1)
    b.add_argument("--out", default="bounds.csv")

    c = sub.add_parser("calibrate", help="estimate or lower-bound Gamma")
    c.add_argument("method", choices=("ib", "rct", "nco"))
    c.add_argument("--obs")
    c.add_argument("--rct")
    c.add_argument("--estimator", choices=("logistic", "forest"), default="logistic")
    c.add_argument("--mode", choices=("loo", "lmo"), default="lmo")
    c.add_argument("--gamma-grid", type=_grid, default=None)
    c.add_argument("--interval", choices=("pei", "ci"), default="pei")
    c.add_argument("--alpha", type=_alpha, default=0.05)
    c.add_argument("--B", type=int, default=500)
    c.add_argument("--seed", type=int, default=1)
    c.add_argument("--out", default=None, help="JSON report path")

    r = sub.add_parser("reproduce", help="run the Monte Carlo experiments")
    g = r.add_mutually_exclusive_group(required=True)
    g.add_argument("--experiment", type=int)
    g.add_argument("--all", action="store_true")
    r.add_argument("--replicates", type=int, default=20)
    r.add_argument("--seed", type=int, default=1)
    r.add_argument("--scale", choices=sorted(SCALES), default="paper")
    r.add_argument("--interval", choices=("pei", "ci"), default=None)
    r.add_argument("--threads", type=int, default=_default_threads())
    r.add_argument("--out", default="results")
    return p


def _load(path, what):
    if path is None:
        raise InvalidInputError(f"--{what} is required for this method")
    return Dataset.from_csv(path)


def cmd_simulate(args):
    config = make_config(args.experiment)
    pair = sample_pair(config, args.seed)
    paths = export_pair(pair, args.out, debug_oracle=args.debug_oracle)
    manifest = {"command": "simulate", "experiment": args.experiment, "seed": args.seed,
                "version": __version__, "n_rct": pair.d_rct.n, "n_obs": pair.d_obs.n,
                "files": [p.name for p in paths], "diagnostics": pair.diagnostics}
    Path(args.out, "manifest.json").write_text(json.dumps(manifest, indent=1), encoding="utf-8")
    print(f"wrote {', '.join(str(p) for p in paths)}")
    return EXIT_OK


def cmd_bounds(args):
    data = Dataset.from_csv(args.data)
    grid = args.gamma_grid
    ci = args.interval == "ci"
    curve = bounds_curve(data, grid, seed=args.seed, ci=ci, alpha=args.alpha, B=args.B,
                         policy=args.policy)
    curve.to_csv(args.out)
    cv = critical_value(curve, 0.0, args.interval)
    manifest = {"command": "bounds", "data": str(args.data), "grid": [float(g) for g in grid],
                "interval": args.interval, "alpha": args.alpha, "B": args.B if ci else 0,
                "policy": args.policy, "seed": args.seed, "version": __version__,
                "critical_value": cv.gamma if cv.found else None}
    Path(str(args.out) + ".manifest.json").write_text(json.dumps(manifest, indent=1), encoding="utf-8")
    width = float(curve.pei_upper[0] - curve.pei_lower[0])
    print(f"PEI width at Gamma={grid[0]:g}: {width:.3g}")
    print(f"critical value for 0: {cv.describe()}")
    return EXIT_OK


def cmd_calibrate(args):
    if args.method == "ib":
        data = _load(args.obs, "obs")
        rep = informal_benchmark(data, args.estimator, args.mode, seed=args.seed)
        report, line = rep.to_json(), f"Gamma_IB ({args.estimator}, {args.mode}) = {rep.gamma_ib:.4g}"
    elif args.method == "rct":
        d_rct, d_obs = _load(args.rct, "rct"), _load(args.obs, "obs")
        grid = default_lb_grid() if args.gamma_grid is None else args.gamma_grid
        tr = rct_lower_bound(d_rct, d_obs, alpha=args.alpha, grid=grid, interval=args.interval,
                             seed=args.seed, B_ci=args.B)
        report = tr.to_json()
        line = f"Gamma_LB^RCT = {tr.gamma_lb:.4g}" + (" (all rejected: grid max)" if tr.all_rejected else "")
    else:
        d_obs = _load(args.obs, "obs")
        grid = default_lb_grid() if args.gamma_grid is None else args.gamma_grid
        rep = nco_lower_bound(d_obs, grid=grid, interval=args.interval, seed=args.seed,
                              alpha=args.alpha, B_ci=args.B)
        report = rep.to_json()
        line = f"Gamma_LB^NC = {rep.gamma_lb:.4g}"
    report["version"] = __version__
    report["seed"] = args.seed
    out = args.out or f"calibrate_{args.method}.json"
    Path(out).write_text(json.dumps(report, indent=1, default=_jsonable), encoding="utf-8")
    print(line)
    return EXIT_OK


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def cmd_reproduce(args):
    out = Path(args.out)
    if args.all:
        results = run_all(out, args.replicates, args.seed, args.scale, args.threads,
                          EXPERIMENT_IDS, args.interval)
    else:
        if args.experiment not in EXPERIMENT_IDS:
            raise InvalidInputError(f"unknown experiment id {args.experiment}")
        results = [run_experiment(args.experiment, args.replicates, args.seed, args.scale,
                                  out / f"exp{args.experiment}", args.threads, args.interval)]
    for r in results:
        s = r.summary
        cells = " ".join(f"{m}={s[m]['median']:.3g}" for m in ("ib_logistic", "ib_forest", "lb_rct", "lb_nco"))
        print(f"exp{r.experiment_id} [{r.scale}] ok={s['n_ok']}/{s['n_replicates']} medians: {cells}")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "bounds": cmd_bounds, "calibrate": cmd_calibrate,
            "reproduce": cmd_reproduce}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
