"""Quantile-balancing sensitivity bounds under the marginal sensitivity model.

For a sensitivity level Gamma with gamma = Gamma/(1+Gamma), the adversarial
propensities have the closed forms

    E_minus = 1 / (1 + (1-e)/e * Gamma^(-sign(Y - Q_{1-gamma})))
    E_plus  = 1 / (1 + (1-e)/e * Gamma^( sign(Y - Q_gamma)))

with sign(0) taken as +1.  The treated-arm bounds are the stabilised IPW
means sum(T Y / E) / sum(T / E); the control arm uses the same formulas
after swapping T <-> 1-T and e <-> 1-e, with quantiles fitted on controls.
"""

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .models import crossfit
from .seeding import STAGE_BOOTSTRAP, STAGE_CROSSFIT, derive

ESTIMANDS = ("theta1", "theta0", "ATE")
ARMS = {"treated": 1, "control": 0, 1: 1, 0: 0}


def odds_ratio(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if np.any((a <= 0) | (a >= 1) | (b <= 0) | (b >= 1)):
        raise InvalidInputError("odds_ratio needs probabilities strictly inside (0, 1)")
    out = (a / (1.0 - a)) / (b / (1.0 - b))
    return float(out) if out.ndim == 0 else out


def gamma_frac(gamma):
    gamma = float(gamma)
    if not gamma >= 1.0:
        raise InvalidInputError(f"Gamma must be >= 1, got {gamma}")
    if math.isinf(gamma):
        return 1.0
    return gamma / (1.0 + gamma)


def quantile_levels(gamma):
    """(low, high) quantile levels (1 - gamma, gamma) used at this Gamma."""
    g = gamma_frac(gamma)
    return 1.0 - g, g


def levels_for_grid(grid):
    return sorted({lv for G in grid for lv in quantile_levels(G)})


def make_grid(lo, hi, count):
    """``count`` equally spaced values from ``lo`` to ``hi`` inclusive."""
    lo, hi, count = float(lo), float(hi), int(count)
    if count < 1 or lo < 1.0 or hi < lo:
        raise InvalidInputError("grid needs 1 <= min <= max and count >= 1")
    if count == 1:
        if hi != lo:
            raise InvalidInputError("a single-point grid needs min == max")
        return np.array([lo])
    if hi == lo:
        raise InvalidInputError("grid count >= 2 needs max > min")
    return np.linspace(lo, hi, count)


def parse_grid(spec):
    """Parse ``min:max:count``."""
    try:
        lo, hi, count = spec.split(":")
        return make_grid(float(lo), float(hi), int(count))
    except ValueError:
        raise InvalidInputError(f"grid spec {spec!r} is not min:max:count") from None


@dataclass(frozen=True)
class AdversarialWeights:
    E_minus: np.ndarray
    E_plus: np.ndarray
    gamma: float
    gamma_frac: float


def _sign(x):
    return np.where(x >= 0.0, 1.0, -1.0)


def adversarial_weights(ehat, y, q_low, q_high, gamma):
    """Closed-form extreme propensities; ``q_low`` is Q_{1-gamma}, ``q_high`` Q_gamma."""
    g = gamma_frac(gamma)
    ehat = np.asarray(ehat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    odds = (1.0 - ehat) / ehat
    G = float(gamma)
    E_minus = 1.0 / (1.0 + odds * G ** (-_sign(y - q_low)))
    E_plus = 1.0 / (1.0 + odds * G ** _sign(y - q_high))
    return AdversarialWeights(E_minus, E_plus, G, g)


def _quantile_column(fits, tau, arm):
    q = fits.quantile.get(tau)
    if q is None:
        # tolerate float noise in the key
        keys = np.array(list(fits.quantile))
        j = int(np.argmin(np.abs(keys - tau))) if keys.size else -1
        if j < 0 or abs(keys[j] - tau) > 1e-12:
            raise InvalidInputError(f"no quantile fit at level {tau:.12g}")
        q = fits.quantile[float(keys[j])]
    return q[:, arm]


def _arm_terms(arm, t, y, ehat, fits, gamma):
    """Per-row numerator and denominator terms of the lower and upper arm bounds."""
    if arm == 1:
        T, e = t.astype(np.float64), ehat
    else:
        T, e = 1.0 - t, 1.0 - ehat
    lo, hi = quantile_levels(gamma)
    w = adversarial_weights(e, y, _quantile_column(fits, lo, arm), _quantile_column(fits, hi, arm), gamma)
    dl = T / w.E_minus
    du = T / w.E_plus
    return dl * y, dl, du * y, du


def pei_theta(arm, data, fits, gamma):
    """(lower, upper) bounds on E[Y(arm)] at ``gamma``."""
    a = ARMS[arm]
    if np.sum(data.t == a) < 2:
        raise InvalidInputError("arm needs at least two rows")
    nl, dl, nu, du = _arm_terms(a, data.t, data.y, fits.propensity, fits, gamma)
    return float(nl.sum() / dl.sum()), float(nu.sum() / du.sum())


def ate_bounds(data, fits, gamma):
    """ATE_minus = theta_minus(1) - theta_plus(0), ATE_plus = theta_plus(1) - theta_minus(0)."""
    l1, u1 = pei_theta(1, data, fits, gamma)
    l0, u0 = pei_theta(0, data, fits, gamma)
    return l1 - u0, u1 - l0


@dataclass(frozen=True)
class BoundsCurve:
    grid: np.ndarray
    pei_lower: np.ndarray
    pei_upper: np.ndarray
    ci_lower: np.ndarray | None = None
    ci_upper: np.ndarray | None = None
    estimand: str = "ATE"
    alpha: float = 0.05
    B: int = 0

    def interval(self, kind="pei"):
        if kind == "pei":
            return self.pei_lower, self.pei_upper
        if kind == "ci":
            if self.ci_lower is None:
                raise InvalidInputError("curve has no bootstrap CI")
            return self.ci_lower, self.ci_upper
        raise InvalidInputError(f"interval must be 'pei' or 'ci', got {kind!r}")

    def rows(self):
        for j, G in enumerate(self.grid):
            yield {"gamma": float(G), "pei_lower": float(self.pei_lower[j]),
                   "pei_upper": float(self.pei_upper[j]),
                   "ci_lower": None if self.ci_lower is None else float(self.ci_lower[j]),
                   "ci_upper": None if self.ci_upper is None else float(self.ci_upper[j]),
                   "estimand": self.estimand, "alpha": self.alpha, "B": self.B}

    def to_csv(self, path):
        cols = ["gamma", "pei_lower", "pei_upper", "ci_lower", "ci_upper", "estimand", "alpha", "B"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            out = csv.writer(fh)
            out.writerow(cols)
            for r in self.rows():
                out.writerow(["" if r[c] is None else (repr(r[c]) if isinstance(r[c], float) else r[c])
                              for c in cols])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise InvalidInputError(f"{path}: empty bounds file")
        col = lambda k: np.array([float(r[k]) for r in rows])
        has_ci = rows[0]["ci_lower"] != ""
        return cls(col("gamma"), col("pei_lower"), col("pei_upper"),
                   col("ci_lower") if has_ci else None, col("ci_upper") if has_ci else None,
                   rows[0]["estimand"], float(rows[0]["alpha"]), int(rows[0]["B"]))


def _term_matrix(data, fits, grid, estimand):
    """Stacked per-row terms so that bounds are ratios of column sums.

    Columns per Gamma: lower-arm1 num/den, upper-arm1 num/den, then the same
    for arm 0.  Bootstrap resamples reuse the matrix through row counts.
    """
    t, y, e = data.t, data.y, fits.propensity
    blocks = []
    for G in grid:
        cols = []
        for arm in (1, 0):
            if estimand == "theta1" and arm == 0 or estimand == "theta0" and arm == 1:
                cols.extend(np.zeros((4, data.n)) + 1.0)
                continue
            cols.extend(_arm_terms(arm, t, y, e, fits, G))
        blocks.append(np.column_stack(cols))
    return np.stack(blocks, axis=1)  # (n, G, 8)


def _bounds_from_sums(S, estimand, nested=True):
    """S[G, 8] column sums -> (lower, upper) over the grid for the estimand.

    With ``nested`` each arm bound is replaced by its running envelope over
    the grid.  A bound computed at Gamma' <= Gamma is the SIPW value of a
    propensity that is admissible at Gamma too, so the envelope remains an
    MSM-feasible value while removing the jitter that per-Gamma quantile
    refits put into the raw curve.
    """
    l1, u1 = S[:, 0] / S[:, 1], S[:, 2] / S[:, 3]
    l0, u0 = S[:, 4] / S[:, 5], S[:, 6] / S[:, 7]
    if nested:
        l1, l0 = np.minimum.accumulate(l1), np.minimum.accumulate(l0)
        u1, u0 = np.maximum.accumulate(u1), np.maximum.accumulate(u0)
    if estimand == "theta1":
        return l1, u1
    if estimand == "theta0":
        return l0, u0
    return l1 - u0, u1 - l0


def _check_estimand(data, estimand):
    if estimand not in ESTIMANDS:
        raise InvalidInputError(f"estimand must be one of {ESTIMANDS}")
    need = {"theta1": (1,), "theta0": (0,), "ATE": (0, 1)}[estimand]
    for a in need:
        if np.sum(data.t == a) < 2:
            raise InvalidInputError("each arm in the estimand needs at least two rows")


def fit_for_grid(data, grid, seed, K=5):
    return crossfit(data, K=K, taus=levels_for_grid(grid), seed=derive(seed, STAGE_CROSSFIT),
                    outcome_mean=False)


def bootstrap_bounds(data, grid, B, seed, fits=None, policy="fast", estimand="ATE", K=5,
                     nested=True):
    """Lower and upper bounds on ``B`` seeded row resamples, arrays of shape (B, len(grid)).

    ``fast`` reuses the original out-of-fold nuisances for the resampled rows;
    ``full`` refits the cross-fitted nuisances on every resample.
    """
    grid = np.asarray(grid, dtype=np.float64)
    n = data.n
    lows = np.empty((B, grid.size))
    highs = np.empty((B, grid.size))
    if policy == "fast":
        if fits is None:
            fits = fit_for_grid(data, grid, seed, K)
        M = _term_matrix(data, fits, grid, estimand).reshape(n, -1)
        for b in range(B):
            idx = np.random.default_rng(derive(seed, STAGE_BOOTSTRAP, b)).integers(0, n, n)
            counts = np.bincount(idx, minlength=n).astype(np.float64)
            S = (counts @ M).reshape(grid.size, 8)
            lows[b], highs[b] = _bounds_from_sums(S, estimand, nested)
    elif policy == "full":
        for b in range(B):
            idx = np.random.default_rng(derive(seed, STAGE_BOOTSTRAP, b)).integers(0, n, n)
            boot = data.take(idx)
            bf = fit_for_grid(boot, grid, derive(seed, STAGE_BOOTSTRAP, b), K)
            S = _term_matrix(boot, bf, grid, estimand).sum(axis=0)
            lows[b], highs[b] = _bounds_from_sums(S, estimand, nested)
    else:
        raise InvalidInputError("policy must be 'fast' or 'full'")
    return lows, highs


def bounds_curve(data, grid, seed=0, fits=None, ci=False, alpha=0.05, B=500,
                 policy="full", estimand="ATE", K=5, nested=True):
    """PEI over ``grid`` and, when ``ci`` is set, percentile bootstrap CIs.

    ``nested=False`` returns the raw per-Gamma plug-in bounds instead of
    their running envelope (see ``_bounds_from_sums``).
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size == 0 or np.any(grid < 1.0) or np.any(np.diff(grid) <= 0):
        raise InvalidInputError("grid must be strictly increasing with values >= 1")
    _check_estimand(data, estimand)
    if fits is None:
        fits = fit_for_grid(data, grid, seed, K)
    S = _term_matrix(data, fits, grid, estimand).sum(axis=0)
    lower, upper = _bounds_from_sums(S, estimand, nested)
    ci_lower = ci_upper = None
    if ci:
        if B < 50:
            warnings.warn(f"only B={B} bootstrap resamples; CI endpoints will be noisy", stacklevel=2)
        lows, highs = bootstrap_bounds(data, grid, B, seed, fits if policy == "fast" else None,
                                       policy, estimand, K, nested)
        ci_lower = np.quantile(lows, alpha / 2.0, axis=0)
        ci_upper = np.quantile(highs, 1.0 - alpha / 2.0, axis=0)
    return BoundsCurve(grid, lower, upper, ci_lower, ci_upper, estimand, float(alpha), int(B) if ci else 0)


@dataclass(frozen=True)
class CriticalValue:
    """Smallest grid Gamma whose interval contains the target; ``inf`` if none does."""

    gamma: float
    grid_max: float

    @property
    def found(self):
        return math.isfinite(self.gamma)

    def __float__(self):
        return self.gamma

    def describe(self):
        return f"{self.gamma:.6g}" if self.found else f"> {self.grid_max:.6g}"


def critical_value(curve, target=0.0, interval="pei"):
    lo, hi = curve.interval(interval)
    inside = (lo <= target) & (target <= hi)
    hit = np.flatnonzero(inside)
    gmax = float(curve.grid[-1])
    return CriticalValue(float(curve.grid[hit[0]]) if hit.size else math.inf, gmax)
