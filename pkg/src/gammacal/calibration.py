"""Estimating, or lower-bounding, the sensitivity parameter Gamma.

Three routes:

* informal benchmarking: pretend groups of observed covariates are hidden
  and measure how far the propensity odds move when they are dropped;
* an RCT lower bound: the smallest Gamma whose observational ATE bounds are
  statistically compatible with the randomized estimate, on the
  observational units inside the RCT covariate support;
* negative control outcomes: the smallest Gamma at which the bounds for the
  (known to be null) effect of T on each NCO contain 0, maxed over NCOs.
"""

import math
import warnings
from dataclasses import asdict, dataclass, field
from itertools import combinations

import numpy as np
from scipy.stats import norm, rankdata

from .bounds import bootstrap_bounds, bounds_curve, critical_value, fit_for_grid, make_grid, odds_ratio
from .data import Dataset
from .errors import InvalidInputError
from .models import FOREST_GRID, crossfit_propensity, make_folds, tune_forest
from .seeding import STAGE_BOOTSTRAP, STAGE_CROSSFIT, STAGE_FOREST, STAGE_RCT, STAGE_SHIFT, derive

MAX_SUBSETS = 10**6
SHIFT_CLIP = (0.05, 20.0)
RCT_SIGMA_B = 100


def default_lb_grid(gamma_max=13.0):
    """25 points on [1, 13]; 30 points on [1, 20] for the wide setting."""
    if gamma_max > 13.0:
        return make_grid(1.0, 20.0, 30)
    return make_grid(1.0, 13.0, 25)


# ---------------------------------------------------------------------------
# informal benchmarking
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SubsetRecord:
    omitted: tuple
    gamma_plus: float
    gamma_minus: float
    gamma: float


@dataclass(frozen=True)
class BenchmarkReport:
    estimator: str
    mode: str
    records: tuple
    gamma_low: float
    gamma_high: float
    forest_params: dict | None = None

    @property
    def gamma_ib(self):
        return self.gamma_high

    def to_json(self):
        return {"method": "informal_benchmark", "estimator": self.estimator, "mode": self.mode,
                "gamma_ib": self.gamma_ib, "gamma_low": self.gamma_low, "gamma_high": self.gamma_high,
                "forest_params": self.forest_params,
                "subsets": [dict(asdict(r), omitted=list(r.omitted)) for r in self.records]}


def _subsets(p, mode):
    if mode == "loo":
        return [(j,) for j in range(p)]
    if mode == "lmo":
        if 2**p - 2 > MAX_SUBSETS:
            raise InvalidInputError(f"{2**p - 2} subsets for p={p}; use mode='loo'")
        return [s for size in range(1, p) for s in combinations(range(p), size)]
    raise InvalidInputError("mode must be 'loo' or 'lmo'")


def informal_benchmark(data, estimator="logistic", mode="loo", seed=0, K=5,
                       forest_grid=FOREST_GRID, forest_params=None):
    """Gamma implied by hiding observed covariates.

    For each omitted set S, r_j = OR(e(X_j), e(X_j without S)) over units j,
    and the subset estimate is max(max_j r_j, 1/min_j r_j).  Propensities are
    cross-fitted on shared folds.  The forest variant tunes hyperparameters
    once on the full covariate set and reuses them for every subset (with
    ``mtry`` capped at the subset dimension).
    """
    X, t = data.X, data.t.astype(np.float64)
    n, p = X.shape
    if p < 2:
        raise InvalidInputError("informal benchmarking needs at least two covariates")
    subsets = _subsets(p, mode)
    folds = make_folds(n, K, derive(seed, STAGE_CROSSFIT))
    if estimator == "logistic":
        model = "logistic"
        hp = None
    elif estimator == "forest":
        model = forest_params or tune_forest(X, t, seed=derive(seed, STAGE_FOREST), grid=forest_grid, K=K)
        hp = model.as_dict()
    else:
        raise InvalidInputError("estimator must be 'logistic' or 'forest'")
    fit_seed = derive(seed, STAGE_FOREST, 1)
    e_full, _ = crossfit_propensity(X, t, K, fit_seed, model, folds)
    records = []
    for S in subsets:
        keep = [j for j in range(p) if j not in S]
        e_sub, _ = crossfit_propensity(X[:, keep], t, K, fit_seed, model, folds)
        r = odds_ratio(e_full, e_sub)
        gp, gm = float(np.max(r)), float(1.0 / np.min(r))
        records.append(SubsetRecord(tuple(int(j) for j in S), gp, gm, max(gp, gm)))
    gammas = [r.gamma for r in records]
    return BenchmarkReport(estimator, mode, tuple(records), float(min(gammas)), float(max(gammas)), hp)


# ---------------------------------------------------------------------------
# RCT lower bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RctAte:
    ate: float
    sigma: float
    pi_hat: float


def _rct_stat(t, y, w):
    pi = t.mean()
    return float(np.mean((t / pi - (1.0 - t) / (1.0 - pi)) * y * w)), float(pi)


def rct_ate(d_rct, weights=None, seed=0, B=RCT_SIGMA_B):
    """Randomized ATE, mean((T/pi - (1-T)/(1-pi)) * Y * w), and its bootstrap sd."""
    t = d_rct.t.astype(np.float64)
    if t.min() == t.max():
        raise InvalidInputError("the RCT needs both treated and control rows")
    w = np.ones(d_rct.n) if weights is None else np.asarray(weights, dtype=np.float64)
    ate, pi = _rct_stat(t, d_rct.y, w)
    stats = []
    for b in range(B):
        idx = np.random.default_rng(derive(seed, STAGE_RCT, b)).integers(0, d_rct.n, d_rct.n)
        tb = t[idx]
        if tb.min() == tb.max():
            continue
        stats.append(_rct_stat(tb, d_rct.y[idx], w[idx])[0])
    sigma = float(np.std(stats, ddof=1)) if len(stats) > 1 else math.nan
    return RctAte(ate, sigma, pi)


def estimate_support_filter(d_rct, d_obs):
    """Mask of observational rows inside the per-coordinate RCT covariate box."""
    if d_rct.p != d_obs.p:
        raise InvalidInputError("RCT and observational data have different covariates")
    lo = d_rct.X.min(axis=0)
    hi = d_rct.X.max(axis=0)
    mask = np.all((d_obs.X >= lo) & (d_obs.X <= hi), axis=1)
    if not mask.any():
        raise InvalidInputError("no support overlap")
    return mask


def _auc(labels, scores):
    ranks = rankdata(scores)
    pos = labels == 1
    n1, n0 = pos.sum(), (~pos).sum()
    return float((ranks[pos].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0))


def estimate_shift_weights(d_rct, d_obs, seed=0, K=5):
    """Density-ratio weights P_obs(x)/P_rct(x) for the RCT rows.

    A cross-fitted logistic classifier separates observational (s=1) from
    RCT (s=0) rows; w = (n_rct/n_obs) p/(1-p), clipped to [0.05, 20] and
    rescaled to mean 1 over the RCT sample.
    """
    if d_rct.n == 0 or d_obs.n == 0:
        raise InvalidInputError("both samples must be nonempty")
    X = np.vstack([d_rct.X, d_obs.X])
    s = np.r_[np.zeros(d_rct.n), np.ones(d_obs.n)]
    prob, _ = crossfit_propensity(X, s, K, derive(seed, STAGE_SHIFT))
    if _auc(s, prob) > 0.99:
        warnings.warn("no overlap in covariate shift: classifier AUC is about 1", stacklevel=2)
    p_rct = prob[: d_rct.n]
    w = (d_rct.n / d_obs.n) * p_rct / (1.0 - p_rct)
    w = np.clip(w, *SHIFT_CLIP)
    return w / w.mean()


def rct_test_statistics(ate, sigma, lower, upper, s_minus, s_plus, target="obs'"):
    """(T_plus, T_minus); the covariance term is only active when target == 'rct'."""
    cross = 1.0 if target == "rct" else 0.0
    den_p = np.sqrt(sigma**2 + s_plus**2 + 2.0 * cross * sigma * s_plus)
    den_m = np.sqrt(sigma**2 + s_minus**2 + 2.0 * cross * sigma * s_minus)
    return (upper - ate) / den_p, (ate - lower) / den_m


@dataclass(frozen=True)
class RctTestTrace:
    grid: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    t_plus: np.ndarray
    t_minus: np.ndarray
    phi: np.ndarray
    sigma: float
    sigma_minus: np.ndarray
    sigma_plus: np.ndarray
    ate_rct: float
    gamma_lb: float
    all_rejected: bool
    alpha: float
    interval: str
    n_obs_filtered: int
    target: str = "obs'"

    def to_json(self):
        return {"method": "rct", "gamma_lb": self.gamma_lb, "all_rejected": self.all_rejected,
                "alpha": self.alpha, "interval": self.interval, "target": self.target,
                "ate_rct": self.ate_rct, "sigma": self.sigma, "n_obs_filtered": self.n_obs_filtered,
                "trace": [{"gamma": float(g), "lower": float(lo), "upper": float(hi),
                           "t_plus": float(tp), "t_minus": float(tm), "phi": int(ph),
                           "sigma_minus": float(sm), "sigma_plus": float(sp)}
                          for g, lo, hi, tp, tm, ph, sm, sp in zip(
                              self.grid, self.lower, self.upper, self.t_plus, self.t_minus,
                              self.phi, self.sigma_minus, self.sigma_plus)]}


def rct_lower_bound(d_rct, d_obs, alpha=0.05, grid=None, interval="pei", seed=0,
                    B_sigma=RCT_SIGMA_B, B_ci=500, K=5):
    """Smallest Gamma not rejected by the RCT compatibility test (target obs')."""
    grid = default_lb_grid() if grid is None else np.asarray(grid, dtype=np.float64)
    mask = estimate_support_filter(d_rct, d_obs)
    obs_f = d_obs.take(mask)
    w = estimate_shift_weights(d_rct, obs_f, seed=seed, K=K)
    rct = rct_ate(d_rct, w, seed=seed, B=B_sigma)
    fits = fit_for_grid(obs_f, grid, seed, K)
    curve = bounds_curve(obs_f, grid, seed=seed, fits=fits, ci=interval == "ci", alpha=alpha,
                         B=B_ci, policy="fast")
    lo, hi = curve.interval(interval)
    lows, highs = bootstrap_bounds(obs_f, grid, B_sigma, derive(seed, STAGE_BOOTSTRAP, 1), fits=fits)
    s_minus = np.std(lows, axis=0, ddof=1)
    s_plus = np.std(highs, axis=0, ddof=1)
    t_plus, t_minus = rct_test_statistics(rct.ate, rct.sigma, lo, hi, s_minus, s_plus)
    z = norm.ppf(alpha / 2.0)
    phi = (np.minimum(t_plus, t_minus) < z).astype(np.int64)
    ok = np.flatnonzero(phi == 0)
    all_rejected = ok.size == 0
    gamma_lb = float(grid[-1] if all_rejected else grid[ok[0]])
    return RctTestTrace(grid, lo, hi, t_plus, t_minus, phi, rct.sigma, s_minus, s_plus,
                        rct.ate, gamma_lb, bool(all_rejected), float(alpha), interval, int(mask.sum()))


# ---------------------------------------------------------------------------
# negative control outcomes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NcoReport:
    names: tuple
    critical_values: tuple
    curves: tuple = field(repr=False)
    gamma_lb: float = 1.0
    interval: str = "pei"
    censored: bool = False  # some NCO interval never covered 0; gamma_lb is the grid max

    def to_json(self):
        return {"method": "nco", "gamma_lb": self.gamma_lb, "interval": self.interval,
                "censored": self.censored,
                "per_nco": [{"name": nm, "critical_value": cv if math.isfinite(cv) else None,
                             "curve": list(c.rows())}
                            for nm, cv, c in zip(self.names, self.critical_values, self.curves)]}


def nco_lower_bound(d_obs, grid=None, interval="pei", seed=0, alpha=0.05, B_ci=500, K=5):
    """max over NCOs of the first grid Gamma whose bounds on the NCO effect contain 0."""
    if d_obs.q == 0:
        raise InvalidInputError("negative control calibration needs w* columns")
    grid = default_lb_grid() if grid is None else np.asarray(grid, dtype=np.float64)
    curves, cvs = [], []
    for k in range(d_obs.q):
        dk = Dataset(d_obs.X, d_obs.t, d_obs.w[:, k], None, d_obs.x_names)
        curve = bounds_curve(dk, grid, seed=derive(seed, 20, k), ci=interval == "ci",
                             alpha=alpha, B=B_ci, policy="fast", K=K)
        curves.append(curve)
        cvs.append(critical_value(curve, 0.0, interval).gamma)
    censored = not all(math.isfinite(c) for c in cvs)
    gamma_lb = float(grid[-1]) if censored else float(max(cvs))
    return NcoReport(tuple(d_obs.w_names), tuple(float(c) for c in cvs), tuple(curves),
                     gamma_lb, interval, censored)
