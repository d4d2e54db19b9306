"""Synthetic RCT/observational pairs whose true propensity satisfies the MSM.

Confounders: ``U_j | X = x ~ N((1 - lam) beta_j'x, lam^2)`` with ``Ubar`` the
mean of the components.  The observational propensity flips between the two
extreme values allowed by Gamma* around a threshold on ``Ubar`` chosen so it
marginalises exactly to ``logistic(delta'X + 0.5)``.

Coefficients are frozen per experiment: each block is drawn from standard
uniforms under the base seed alone and rescaled into that experiment's
range, so experiments that share a range share the draw.
"""

import csv
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.special import expit
from scipy.stats import norm

from .data import Dataset
from .errors import InvalidInputError
from .seeding import STAGE_DATA, rng

NCO_CASES = ("ideal", "case1", "case2")

# widest shapes any preset uses; frozen draws are sliced from these
_MAX_PX, _MAX_PU, _MAX_PW = 10, 3, 2
_COEF_STAGE = 100

_THETA2 = {"base": (0.1, 0.2), "low": (0.01, 0.02), "high": (0.5, 1.0), "vhigh": (0.7, 1.0)}
_THETA4 = {"base": (0.05, 0.1), "low": (0.01, 0.02), "high": (0.5, 1.0), "vhigh": (0.7, 1.0)}

# id: (n_rct, n_obs, p_X, p_U, Gamma*, lambda, outcome regime, nco case, interval)
_PRESETS = {
    1: (2000, 2000, 5, 2, 8.0, 1.0, "base", "ideal", "pei"),
    2: (2000, 2000, 5, 2, 8.0, 1.0, "low", "ideal", "pei"),
    3: (2000, 2000, 5, 2, 8.0, 1.0, "high", "ideal", "pei"),
    4: (2000, 2000, 5, 2, 8.0, 0.85, "low", "ideal", "pei"),
    5: (2000, 2000, 5, 2, 8.0, 0.85, "vhigh", "ideal", "pei"),
    6: (2000, 2000, 5, 2, 8.0, 0.2, "vhigh", "ideal", "pei"),
    7: (2000, 2000, 5, 2, 5.0, 1.0, "base", "ideal", "pei"),
    8: (2000, 2000, 5, 2, 20.0, 1.0, "base", "ideal", "pei"),
    9: (500, 500, 5, 2, 8.0, 1.0, "base", "ideal", "pei"),
    10: (2000, 2000, 10, 2, 8.0, 1.0, "base", "ideal", "pei"),
    11: (2000, 2000, 5, 3, 8.0, 1.0, "base", "case1", "pei"),
    12: (2000, 2000, 5, 3, 8.0, 1.0, "base", "case2", "pei"),
    13: (200, 2000, 5, 3, 8.0, 0.85, "base", "case1", "pei"),
    14: (2000, 2000, 5, 2, 8.0, 1.0, "base", "ideal", "ci"),
}

EXPERIMENT_IDS = tuple(sorted(_PRESETS))


@dataclass(frozen=True)
class SimulationConfig:
    experiment_id: int
    p_X: int
    p_U: int
    p_W: int
    n_rct: int
    n_obs: int
    ATE_star: float
    Gamma_star: float
    lam: float
    sigma_Y: float
    sigma_W: float
    nco_case: str
    interval: str
    ranges: dict
    beta: np.ndarray = field(repr=False)     # (p_U, p_X)
    theta1: np.ndarray = field(repr=False)   # (p_X,)
    theta2: np.ndarray = field(repr=False)   # (p_U,)
    theta3: np.ndarray = field(repr=False)   # (p_W, p_X)
    theta4: np.ndarray = field(repr=False)   # (p_W, p_U)
    delta: np.ndarray = field(repr=False)    # (p_X,)
    drop_component: int = -1

    def __post_init__(self):
        if min(self.p_X, self.p_U, self.p_W, self.n_rct, self.n_obs) < 1:
            raise InvalidInputError("dimensions and sample sizes must be positive")
        if self.Gamma_star < 1.0:
            raise InvalidInputError("Gamma_star must be >= 1")
        if not 0.0 < self.lam <= 1.0:
            raise InvalidInputError("lambda must lie in (0, 1]")
        if self.nco_case not in NCO_CASES:
            raise InvalidInputError(f"nco_case must be one of {NCO_CASES}")
        if self.nco_case != "ideal" and self.p_U < 2:
            raise InvalidInputError("case1/case2 need at least two unobserved confounders")
        for name, (lo, hi) in self.ranges.items():
            if lo > hi:
                raise InvalidInputError(f"range for {name} has low > high")

    def to_json(self):
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, np.ndarray):
                d[k] = v.tolist()
        d["ranges"] = {k: list(v) for k, v in self.ranges.items()}
        return d


def _frozen_uniforms(base_seed, block, shape):
    g = rng(base_seed, _COEF_STAGE, block)
    return g.random(shape)


def make_config(experiment_id, base_seed=1):
    """Preset for experiment 1..14 with its coefficient vectors drawn and frozen."""
    try:
        n_rct, n_obs, p_X, p_U, gstar, lam, regime, case, interval = _PRESETS[int(experiment_id)]
    except (KeyError, ValueError, TypeError):
        raise InvalidInputError(f"unknown experiment id {experiment_id!r}") from None
    p_W = 2
    ranges = {"beta": (1.5, 2.0), "theta1": (0.1, 1.0), "theta2": _THETA2[regime],
              "theta3": (0.1, 1.0), "theta4": _THETA4[regime], "delta": (0.1, 0.5)}

    def draw(block, name, rows, cols):
        lo, hi = ranges[name]
        u = _frozen_uniforms(base_seed, block, (_MAX_PW if rows == p_W else _MAX_PU, _MAX_PX))
        return lo + (hi - lo) * u[:rows, :cols]

    return SimulationConfig(
        experiment_id=int(experiment_id), p_X=p_X, p_U=p_U, p_W=p_W,
        n_rct=n_rct, n_obs=n_obs, ATE_star=0.25, Gamma_star=gstar, lam=lam,
        sigma_Y=0.1, sigma_W=0.1, nco_case=case, interval=interval, ranges=ranges,
        beta=draw(1, "beta", p_U, p_X),
        theta1=draw(2, "theta1", 1, p_X)[0],
        theta2=draw(3, "theta2", 1, p_U)[0],
        theta3=draw(4, "theta3", p_W, p_X),
        theta4=draw(5, "theta4", p_W, p_U),
        delta=draw(6, "delta", 1, p_X)[0],
    )


def with_params(config, **changes):
    """Copy of ``config`` with scalar fields replaced; frozen draws are kept."""
    return replace(config, **changes)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

_ARM_KEY = {"rct": 1, "obs": 2}


def sample_confounders(config, n, arm, seed):
    """Returns ``(X, U, Ubar)`` for ``n`` units of the given arm."""
    if arm not in _ARM_KEY:
        raise InvalidInputError("arm must be 'rct' or 'obs'")
    a = _ARM_KEY[arm]
    half = 0.9 if arm == "rct" else 1.0
    X = rng(seed, a, 1).uniform(-half, half, size=(n, config.p_X))
    G = rng(seed, a, 2).standard_normal((n, config.p_U))
    return (X, *confounders_given_x(config, X, G))


def confounders_given_x(config, X, G):
    """U_j = (1 - lam) beta_j'x + lam G_j for standard normal ``G``; returns ``(U, Ubar)``."""
    U = (1.0 - config.lam) * X @ config.beta.T + config.lam * G
    return U, U.mean(axis=1)


def nominal_propensity(config, X):
    return expit(X @ config.delta + 0.5)


def threshold_prob(e, gamma_star):
    """P(Ubar <= t(X) | X) = (e - l)/(u - l), with l and u the MSM extremes."""
    l = e / (e + (1.0 - e) * gamma_star)
    u = e / (e + (1.0 - e) / gamma_star)
    return l, u, (e - l) / (u - l)


def true_propensity_obs(config, X, Ubar):
    """Nominal ``e(X)`` and true ``e(X, U)`` for observational units."""
    e = nominal_propensity(config, X)
    if config.Gamma_star == 1.0:
        return e, e.copy()
    l, u, prob = threshold_prob(e, config.Gamma_star)
    mean = (1.0 - config.lam) * (X @ config.beta.T).mean(axis=1)
    sd = config.lam / np.sqrt(config.p_U)
    t = norm.ppf(prob, loc=mean, scale=sd)
    return e, np.where(Ubar > t, l, u)


@dataclass(frozen=True)
class OracleTable:
    """Hidden quantities of one arm.  Calibrators only ever see ``Dataset``."""

    U: np.ndarray
    Ubar: np.ndarray
    e_X: np.ndarray
    e_XU: np.ndarray
    Y0: np.ndarray
    Y1: np.ndarray

    def columns(self):
        cols = {f"u{j + 1}": self.U[:, j] for j in range(self.U.shape[1])}
        cols.update(ubar=self.Ubar, e_x=self.e_X, e_xu=self.e_XU, y0=self.Y0, y1=self.Y1)
        return cols


@dataclass(frozen=True)
class GeneratedPair:
    config: SimulationConfig
    seed: int
    d_rct: Dataset
    d_obs: Dataset
    oracle_rct: OracleTable = field(repr=False)
    oracle_obs: OracleTable = field(repr=False)
    diagnostics: dict = field(default_factory=dict)


def _outcomes(config, X, U, T, eps_y, eps_w):
    th2 = config.theta2.copy()
    th4 = config.theta4.copy()
    if config.nco_case == "case1":
        th2[config.drop_component] = 0.0
    elif config.nco_case == "case2":
        th4[:, config.drop_component] = 0.0
    base = U @ th2 + eps_y
    shift = X @ config.theta1 + config.ATE_star / 2.0
    Y0 = base - shift
    Y1 = base + shift
    Y = np.where(T == 1, Y1, Y0)
    W = X @ config.theta3.T + U @ th4.T + eps_w
    return Y, Y0, Y1, W


def _arm(config, n, arm, seed):
    a = _ARM_KEY[arm]
    X, U, Ubar = sample_confounders(config, n, arm, seed)
    if arm == "rct":
        e_X = np.full(n, 0.5)
        e_XU = e_X.copy()
    else:
        e_X, e_XU = true_propensity_obs(config, X, Ubar)
    T = (rng(seed, a, 3).random(n) < e_XU).astype(np.int64)
    eps_y = config.sigma_Y * rng(seed, a, 4).standard_normal(n)
    eps_w = config.sigma_W * rng(seed, a, 5).standard_normal((n, config.p_W))
    Y, Y0, Y1, W = _outcomes(config, X, U, T, eps_y, eps_w)
    data = Dataset(X, T, Y, W)
    return data, OracleTable(U, Ubar, e_X, e_XU, Y0, Y1)


def sample_pair(config, seed, n_rct=None, n_obs=None):
    """One RCT sample (T ~ Bernoulli(1/2)) and one observational sample."""
    d_rct, o_rct = _arm(config, config.n_rct if n_rct is None else n_rct, "rct", seed)
    d_obs, o_obs = _arm(config, config.n_obs if n_obs is None else n_obs, "obs", seed)
    pair = GeneratedPair(config, int(seed), d_rct, d_obs, o_rct, o_obs)
    return replace(pair, diagnostics=diagnostics(pair))


def replicate_seed(base_seed, replicate):
    """Data seed of a Monte Carlo replicate (shared by all experiments)."""
    from .seeding import derive
    return derive(base_seed, replicate, STAGE_DATA)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def correlation_band(rho):
    rho = abs(rho)
    if rho < 0.3:
        return "low"
    if rho <= 0.7:
        return "moderate"
    return "high"


def _abs_corr(a, b):
    a = a - a.mean()
    b = b - b.mean()
    den = np.sqrt(np.sum(a * a) * np.sum(b * b))
    return float(abs(np.sum(a * b)) / den) if den > 0 else 0.0


def correlation_summary(X, U, Ubar, Y0, W):
    rho_xu = max(_abs_corr(X[:, j], U[:, c]) for j in range(X.shape[1]) for c in range(U.shape[1]))
    rho_uy = _abs_corr(Ubar, Y0)
    rho_uw = max(_abs_corr(Ubar, W[:, k]) for k in range(W.shape[1]))
    return {"rho_XU": rho_xu, "rho_UY0": rho_uy, "rho_UW": rho_uw,
            "band_XU": correlation_band(rho_xu), "band_UY0": correlation_band(rho_uy),
            "band_UW": correlation_band(rho_uw)}


def diagnostics(pair):
    """Empirical absolute Pearson correlations on the observational arm."""
    o, d = pair.oracle_obs, pair.d_obs
    return correlation_summary(d.X, o.U, o.Ubar, o.Y0, d.w)


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def _write_table(path, cols):
    names = list(cols)
    table = np.column_stack([np.asarray(cols[k], dtype=np.float64) for k in names])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh)
        out.writerow(names)
        for row in table:
            out.writerow([repr(float(v)) for v in row])


def export_pair(pair, out_dir, debug_oracle=False):
    """Write rct.csv and obs.csv (plus hidden tables on request); return the paths."""
    out = Path(out_dir)
    if not out.is_dir():
        raise FileNotFoundError(f"output directory {out} does not exist")
    paths = [out / "rct.csv", out / "obs.csv"]
    pair.d_rct.to_csv(paths[0])
    pair.d_obs.to_csv(paths[1])
    if debug_oracle:
        for arm, table in (("rct", pair.oracle_rct), ("obs", pair.oracle_obs)):
            p = out / f"oracle_{arm}.csv"
            _write_table(p, table.columns())
            paths.append(p)
        p = out / "oracle_config.json"
        p.write_text(json.dumps(pair.config.to_json(), indent=2), encoding="utf-8")
        paths.append(p)
    return paths
