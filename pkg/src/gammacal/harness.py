"""Monte Carlo reproduction of the simulation study.

Each replicate draws a fresh RCT/observational pair and runs all four
calibrators (informal benchmarking with logistic regression and with a
forest, the RCT lower bound and the NCO lower bound).  Replicates are
independent work items: their seeds depend only on (base seed, replicate,
stage), so the output does not depend on how many workers run them.
"""

import csv
import json
import math
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import bounds_curve, make_grid
from .calibration import default_lb_grid, informal_benchmark, nco_lower_bound, rct_lower_bound
from .models import FOREST_GRID, FOREST_GRID_DESK
from .seeding import derive
from .simgen import EXPERIMENT_IDS, make_config, replicate_seed, sample_pair

METHODS = ("ib_logistic", "ib_forest", "lb_rct", "lb_nco")
BOUNDS_GRID = (1.0, 20.0, 20)


@dataclass(frozen=True)
class Scale:
    name: str
    n_cap: int | None
    B: int
    forest_grid: tuple

    def sizes(self, config):
        if self.n_cap is None:
            return config.n_rct, config.n_obs
        return min(config.n_rct, self.n_cap), min(config.n_obs, self.n_cap)

    def as_dict(self):
        return {"name": self.name, "n_cap": self.n_cap, "B": self.B,
                "forest_grid_size": len(self.forest_grid)}


SCALES = {
    "paper": Scale("paper", None, 500, FOREST_GRID),
    # n -> min(n, 500), B -> 200 and the 8-point forest grid
    "desk": Scale("desk", 500, 200, FOREST_GRID_DESK),
}


def _scale(scale):
    if isinstance(scale, Scale):
        return scale
    try:
        return SCALES[scale]
    except KeyError:
        raise ValueError(f"scale must be one of {sorted(SCALES)}") from None


def median(values):
    """Midpoint of the central order statistics for even counts."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    if v.size == 0:
        return math.nan
    mid = v.size // 2
    return float(v[mid]) if v.size % 2 else float(0.5 * (v[mid - 1] + v[mid]))


def _limit_threads():
    # one BLAS thread per worker keeps results independent of the pool size
    try:
        from threadpoolctl import threadpool_limits
        threadpool_limits(1)
    except ImportError:  # pragma: no cover
        pass


# ---------------------------------------------------------------------------
# one replicate
# ---------------------------------------------------------------------------

def run_replicate(experiment_id, replicate, base_seed=1, scale="paper", interval=None,
                  methods=METHODS):
    """All calibrators on one generated pair; never raises, failures are recorded."""
    sc = _scale(scale)
    config = make_config(experiment_id, base_seed)
    interval = interval or config.interval
    seed = replicate_seed(base_seed, replicate)
    rec = {"experiment": int(experiment_id), "replicate": int(replicate), "seed": seed,
           "status": "ok", "error": None}
    try:
        n_rct, n_obs = sc.sizes(config)
        pair = sample_pair(config, seed, n_rct, n_obs)
        rec["diagnostics"] = pair.diagnostics
        lb_grid = default_lb_grid(config.Gamma_star)
        if "ib_logistic" in methods:
            ib = informal_benchmark(pair.d_obs, "logistic", "lmo", seed=derive(seed, 31))
            rec["ib_logistic"] = ib.gamma_ib
        if "ib_forest" in methods:
            ib = informal_benchmark(pair.d_obs, "forest", "lmo", seed=derive(seed, 32),
                                    forest_grid=sc.forest_grid)
            rec["ib_forest"] = ib.gamma_ib
            rec["forest_params"] = ib.forest_params
        if "lb_rct" in methods:
            tr = rct_lower_bound(pair.d_rct, pair.d_obs, grid=lb_grid, interval=interval,
                                 seed=derive(seed, 33), B_ci=sc.B)
            rec["lb_rct"] = tr.gamma_lb
            rec["lb_rct_all_rejected"] = tr.all_rejected
            rec["ate_rct"] = tr.ate_rct
        if "lb_nco" in methods:
            nc = nco_lower_bound(pair.d_obs, grid=lb_grid, interval=interval,
                                 seed=derive(seed, 34), B_ci=sc.B)
            rec["lb_nco"] = nc.gamma_lb
            rec["lb_nco_censored"] = nc.censored
            rec["lb_nco_per_w"] = [c if math.isfinite(c) else None for c in nc.critical_values]
        grid = make_grid(*BOUNDS_GRID)
        curve = bounds_curve(pair.d_obs, grid, seed=derive(seed, 35), ci=True, B=sc.B, policy="fast")
        rec["curve"] = [{k: r[k] for k in ("gamma", "pei_lower", "pei_upper", "ci_lower", "ci_upper")}
                        for r in curve.rows()]
    except Exception as exc:  # failure isolation: the experiment carries on
        rec["status"] = "failed"
        rec["error"] = f"{type(exc).__name__}: {exc}"
        rec["traceback"] = traceback.format_exc(limit=5)
    return rec


def _replicate_job(args):
    _limit_threads()
    return run_replicate(*args)


# ---------------------------------------------------------------------------
# experiment
# ---------------------------------------------------------------------------

@dataclass
class ExperimentResult:
    experiment_id: int
    scale: str
    base_seed: int
    interval: str
    records: list
    summary: dict = field(default_factory=dict)
    robustness: list = field(default_factory=list)


def summarize(records):
    ok = [r for r in records if r["status"] == "ok"]
    out = {"n_replicates": len(records), "n_ok": len(ok)}
    for m in METHODS:
        vals = [r[m] for r in ok if m in r]
        if vals:
            out[m] = {"min": float(np.min(vals)), "median": median(vals), "max": float(np.max(vals))}
        else:
            out[m] = {"min": math.nan, "median": math.nan, "max": math.nan}
    return out


def run_experiment(experiment_id, replicates=20, base_seed=1, scale="paper", out_dir=None,
                   workers=1, interval=None, robustness=True, robustness_policy="fast"):
    """Run ``replicates`` Monte Carlo samples of one experiment; optionally write outputs."""
    sc = _scale(scale)
    config = make_config(experiment_id, base_seed)
    interval = interval or config.interval
    jobs = [(experiment_id, r, base_seed, sc, interval) for r in range(replicates)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers, initializer=_limit_threads) as pool:
            records = list(pool.map(_replicate_job, jobs))
    else:
        _limit_threads()
        records = [run_replicate(*j) for j in jobs]
    result = ExperimentResult(int(experiment_id), sc.name, int(base_seed), interval, records,
                              summarize(records))
    if robustness:
        result.robustness = robustness_table(result, B=sc.B, policy=robustness_policy)
    if out_dir is not None:
        write_outputs(result, out_dir)
    return result


def robustness_table(result, gamma_choices=None, B=200, seed=0, alpha=0.05, policy="fast"):
    """Share of replicates whose ATE CI contains 0 and ATE*, per Gamma choice.

    Default choices: Gamma = 1, each method's median estimate and Gamma*.
    """
    sc = _scale(result.scale)
    config = make_config(result.experiment_id, result.base_seed)
    if gamma_choices is None:
        gamma_choices = {"gamma_1": 1.0}
        for m in METHODS:
            gamma_choices[m] = result.summary.get(m, {}).get("median", math.nan)
        gamma_choices["gamma_star"] = config.Gamma_star
    usable = {k: float(v) for k, v in gamma_choices.items() if math.isfinite(v) and v >= 1.0}
    base = list(make_grid(*BOUNDS_GRID))
    grid = np.array(sorted(set(base) | set(usable.values())))
    hits = {k: [0, 0] for k in usable}
    count = 0
    for rec in result.records:
        if rec["status"] != "ok":
            continue
        n_rct, n_obs = sc.sizes(config)
        pair = sample_pair(config, rec["seed"], n_rct, n_obs)
        s = derive(rec["seed"], 36, seed)
        curve = bounds_curve(pair.d_obs, grid, seed=s, ci=True, B=B, alpha=alpha, policy=policy)
        count += 1
        for k, G in usable.items():
            j = int(np.searchsorted(grid, G))
            lo, hi = curve.ci_lower[j], curve.ci_upper[j]
            hits[k][0] += int(lo <= 0.0 <= hi)
            hits[k][1] += int(lo <= config.ATE_star <= hi)
    rows = []
    for k in gamma_choices:
        G = gamma_choices[k]
        if k in usable and count:
            null, ate = (100.0 * h / count for h in hits[k])
        else:
            null = ate = math.nan
        rows.append({"choice": k, "gamma": float(G), "pct_null": null, "pct_ate_star": ate,
                     "n": count, "B": B, "policy": policy, "scale": result.scale})
    return rows


# ---------------------------------------------------------------------------
# outputs
# ---------------------------------------------------------------------------

def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh)
        out.writerow(header)
        for r in rows:
            out.writerow([_fmt(r.get(h)) for h in header])


SUMMARY_HEADER = (["experiment", "scale", "n_replicates", "n_ok"]
                  + [f"{m}_{s}" for m in METHODS for s in ("min", "median", "max")]
                  + ["gamma_star", "interval"])


def summary_row(result):
    config = make_config(result.experiment_id, result.base_seed)
    row = {"experiment": result.experiment_id, "scale": result.scale,
           "n_replicates": result.summary["n_replicates"], "n_ok": result.summary["n_ok"],
           "gamma_star": config.Gamma_star, "interval": result.interval}
    for m in METHODS:
        for s in ("min", "median", "max"):
            row[f"{m}_{s}"] = result.summary[m][s]
    return row


def emit_plot_data(result, out_dir):
    """Long-format bound curves and calibrator estimates, for plotting elsewhere."""
    out = Path(out_dir)
    rows = []
    for rec in result.records:
        for pt in rec.get("curve", []):
            rows.append({"experiment": result.experiment_id, "replicate": rec["replicate"], **pt,
                         "scale": result.scale})
    _write_csv(out / "plotdata.csv", ["experiment", "replicate", "gamma", "pei_lower", "pei_upper",
                                      "ci_lower", "ci_upper", "scale"], rows)
    box = [{"experiment": result.experiment_id, "replicate": rec["replicate"], "method": m,
            "estimate": rec[m], "scale": result.scale}
           for rec in result.records for m in METHODS if m in rec]
    _write_csv(out / "boxplot.csv", ["experiment", "replicate", "method", "estimate", "scale"], box)
    return [out / "plotdata.csv", out / "boxplot.csv"]


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def write_outputs(result, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sc = _scale(result.scale)
    config = make_config(result.experiment_id, result.base_seed)
    _write_csv(out / "summary.csv", SUMMARY_HEADER, [summary_row(result)])
    payload = {"experiment": result.experiment_id, "scale": result.scale,
               "base_seed": result.base_seed, "summary": result.summary, "records": result.records}
    (out / "records.json").write_text(json.dumps(payload, indent=1, default=_json_default),
                                      encoding="utf-8")
    _write_csv(out / "robustness.csv",
               ["choice", "gamma", "pct_null", "pct_ate_star", "n", "B", "policy", "scale"],
               [dict(r, scale=result.scale) for r in result.robustness])
    emit_plot_data(result, out)
    manifest = {"experiment": result.experiment_id, "scale": sc.as_dict(),
                "base_seed": result.base_seed, "replicates": len(result.records),
                "replicate_seeds": [r["seed"] for r in result.records],
                "interval": result.interval, "bounds_grid": list(BOUNDS_GRID),
                "lb_grid": [float(g) for g in default_lb_grid(config.Gamma_star)],
                "alpha": 0.05, "version": __version__, "config": config.to_json()}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, default=_json_default),
                                       encoding="utf-8")
    return out


def load_records(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def run_all(out_root, replicates=20, base_seed=1, scale="desk", workers=1, ids=EXPERIMENT_IDS,
            interval=None):
    """Every experiment plus a combined table3.csv of summary rows under ``out_root``."""
    root = Path(out_root)
    results = []
    for i in ids:
        results.append(run_experiment(i, replicates, base_seed, scale, root / f"exp{i}",
                                      workers, interval))
    _write_csv(root / "table3.csv", SUMMARY_HEADER, [summary_row(r) for r in results])
    return results
