"""Nuisance estimators and K-fold cross-fitting.

Every model here prepends its own intercept column, so callers pass the raw
covariate matrix.  Fits are deterministic functions of (data, settings, seed).
"""

import math
import warnings
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy.special import expit

from . import _kernels
from .seeding import derive
from .errors import ConvergenceWarning, InvalidInputError, NumericalError

PROB_CLIP = 1e-6
LOGISTIC_TOL = 1e-8
LOGISTIC_MAX_ITER = 100
RIDGE_FALLBACK = 1e-4


@dataclass(frozen=True)
class LinearCoefficients:
    intercept: float
    weights: np.ndarray
    converged: bool = True
    ridge: float = 0.0
    note: str = ""

    def linear(self, X):
        return self.intercept + np.asarray(X, dtype=np.float64) @ self.weights

    def predict_proba(self, X):
        return expit(self.linear(X))


def _check_design(X, y=None):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or not np.all(np.isfinite(X)):
        raise InvalidInputError("design matrix must be a finite 2-d array")
    if y is None:
        return X
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (X.shape[0],) or not np.all(np.isfinite(y)):
        raise InvalidInputError("response must be a finite vector with one entry per row")
    return X, y


def _with_intercept(X):
    return np.hstack([np.ones((X.shape[0], 1)), X])


# ---------------------------------------------------------------------------
# logistic regression
# ---------------------------------------------------------------------------

def _newton_logistic(Z, y, ridge, max_iter):
    """Newton-Raphson on the summed log-likelihood, ridge on the slopes only."""
    k = Z.shape[1]
    pen = np.full(k, ridge)
    pen[0] = 0.0
    beta = np.zeros(k)

    def objective(b):
        eta = Z @ b
        # log(1+exp(eta)) - y*eta, written stably
        return np.sum(np.logaddexp(0.0, eta) - y * eta) + 0.5 * np.sum(pen * b * b)

    f = objective(beta)
    gnorm = np.inf
    for it in range(max_iter + 1):
        mu = expit(Z @ beta)
        grad = Z.T @ (mu - y) + pen * beta
        gnorm = float(np.linalg.norm(grad))
        if gnorm < LOGISTIC_TOL:
            return beta, True, it, gnorm
        if it == max_iter:
            break
        W = mu * (1.0 - mu)
        H = (Z * W[:, None]).T @ Z + np.diag(pen)
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        if not np.all(np.isfinite(step)):
            break
        # backtracking keeps the iteration monotone when far from the optimum;
        # near it the objective change drowns in rounding, so a full step that
        # shrinks the gradient is accepted as well
        cand = beta - step
        fc = objective(cand)
        if not fc <= f + 1e-4 * float(grad @ -step):
            gc = Z.T @ (expit(Z @ cand) - y) + pen * cand
            if not np.linalg.norm(gc) < 0.5 * gnorm:
                t = 0.5
                while True:
                    cand = beta - t * step
                    fc = objective(cand)
                    if fc <= f + 1e-4 * t * float(grad @ -step) or t < 1e-10:
                        break
                    t *= 0.5
                if fc > f:
                    break
        beta, f = cand, fc
        if not np.all(np.isfinite(beta)) or np.max(np.abs(beta)) > 1e8:
            break
    return beta, False, it, gnorm


def fit_logistic(X, y):
    """Maximum-likelihood logistic regression.

    Newton iterations run until the gradient norm drops below 1e-8 or 100
    steps have been taken.  If that fails, or more than 10% of fitted
    probabilities sit on the [1e-6, 1-1e-6] clip boundary (separation), the
    fit is redone with a ridge penalty of 1e-4 on the slopes and a
    ``ConvergenceWarning`` is raised.
    """
    X, y = _check_design(X, y)
    if not np.all((y == 0) | (y == 1)):
        raise InvalidInputError("logistic response must be 0/1")
    Z = _with_intercept(X)
    beta, ok, _, _ = _newton_logistic(Z, y, 0.0, LOGISTIC_MAX_ITER)
    if ok:
        mu = expit(Z @ beta)
        at_edge = np.mean((mu <= PROB_CLIP) | (mu >= 1.0 - PROB_CLIP))
        if at_edge <= 0.10:
            return LinearCoefficients(float(beta[0]), beta[1:].copy())
        why = f"{at_edge:.0%} of fitted probabilities at the clip boundary"
    else:
        why = "Newton iterations did not converge"
    beta, ok, _, gnorm = _newton_logistic(Z, y, RIDGE_FALLBACK, LOGISTIC_MAX_ITER)
    note = f"ridge fallback ({why})"
    if not ok:
        note += f"; gradient norm {gnorm:.2e} after fallback"
    warnings.warn(f"fit_logistic: {note}", ConvergenceWarning, stacklevel=2)
    return LinearCoefficients(float(beta[0]), beta[1:].copy(), converged=False,
                              ridge=RIDGE_FALLBACK, note=note)


# ---------------------------------------------------------------------------
# least squares
# ---------------------------------------------------------------------------

def fit_least_squares(X, y):
    """Ordinary least squares via a QR factorisation, ridge fallback when rank deficient."""
    X, y = _check_design(X, y)
    Z = _with_intercept(X)
    n, k = Z.shape
    if n >= k:
        Q, R = np.linalg.qr(Z)
        d = np.abs(np.diag(R))
        if d.min() > 1e-10 * max(d.max(), 1.0):
            beta = np.linalg.solve(R, Q.T @ y)
            # one step of iterative refinement tightens the normal equations
            beta += np.linalg.solve(R, Q.T @ (y - Z @ beta))
            return LinearCoefficients(float(beta[0]), beta[1:].copy())
    lam = 1e-8 * max(1.0, float(np.trace(Z.T @ Z)) / k)
    pen = np.full(k, lam)
    pen[0] = 0.0
    beta = np.linalg.lstsq(Z.T @ Z + np.diag(pen), Z.T @ y, rcond=None)[0]
    note = "ridge fallback (rank deficient design)"
    warnings.warn(f"fit_least_squares: {note}", ConvergenceWarning, stacklevel=2)
    return LinearCoefficients(float(beta[0]), beta[1:].copy(), converged=False,
                              ridge=lam, note=note)


# ---------------------------------------------------------------------------
# linear quantile regression
# ---------------------------------------------------------------------------

def pinball_loss(y, fitted, tau):
    r = np.asarray(y) - np.asarray(fitted)
    return float(np.sum(np.maximum(tau * r, (tau - 1.0) * r)))


def _independent_columns(Z):
    """Greedy maximal set of linearly independent columns (intercept first)."""
    keep = []
    basis = np.zeros((Z.shape[0], 0))
    for j in range(Z.shape[1]):
        v = Z[:, j]
        nv = np.linalg.norm(v)
        if nv == 0.0:
            continue
        r = v - basis @ (basis.T @ v)
        r = r - basis @ (basis.T @ r)
        nr = np.linalg.norm(r)
        if nr > 1e-9 * nv:
            keep.append(j)
            basis = np.hstack([basis, (r / nr)[:, None]])
    return np.array(keep, dtype=np.int64)


def _expand(beta, keep, k):
    full = np.zeros(k)
    full[keep] = beta
    return full


def fit_quantile_path(X, y, taus):
    """Exact linear quantile regressions of ``y`` on ``X`` for several levels.

    Returns one :class:`LinearCoefficients` per entry of ``taus`` (in the
    given order).  Each fit is an exact minimiser of the check loss: a
    smoothed-loss warm start is followed by simplex-style vertex exchange.
    """
    X, y = _check_design(X, y)
    taus = np.asarray(taus, dtype=np.float64)
    if np.any((taus <= 0.0) | (taus >= 1.0)):
        raise InvalidInputError("quantile levels must lie strictly inside (0, 1)")
    n, p = X.shape
    if y.size and np.all(y == y[0]):
        c = float(y[0])
        return [LinearCoefficients(c, np.zeros(p)) for _ in taus]
    if n < 1:
        raise InvalidInputError("no rows to fit")
    Z = _with_intercept(X)
    keep = _independent_columns(Z)
    Zk = np.ascontiguousarray(Z[:, keep])
    order = np.argsort(taus, kind="mergesort")
    betas, status = _kernels.quantile_path(Zk, y, taus[order])
    out = [None] * taus.size
    for pos, q in enumerate(order):
        st = int(status[pos])
        beta = _expand(betas[pos], keep, p + 1)
        if st == _kernels.QR_NO_BASIS:
            raise NumericalError(f"quantile regression at tau={taus[q]:.6g} found no basis")
        note = "" if st == _kernels.QR_OPTIMAL else "pivot limit reached"
        if note:
            warnings.warn(f"fit_quantile_regression: {note}", ConvergenceWarning, stacklevel=2)
        out[q] = LinearCoefficients(float(beta[0]), beta[1:].copy(),
                                    converged=not note, note=note)
    return out


def fit_quantile_regression(X, y, tau):
    """Linear conditional ``tau``-quantile minimising the pinball loss."""
    return fit_quantile_path(X, y, [tau])[0]


# ---------------------------------------------------------------------------
# probability forest
# ---------------------------------------------------------------------------

def default_mtry(p):
    return min(math.ceil(math.sqrt(p)) + 1, p)


@dataclass(frozen=True)
class ForestParams:
    num_trees: int = 50
    min_node_size: int = 5
    sample_fraction: float = 0.5
    mtry: int | None = None  # None means default_mtry(p)
    honest: bool = True

    def resolved_mtry(self, p):
        m = default_mtry(p) if self.mtry is None else int(self.mtry)
        return max(1, min(m, p))

    def as_dict(self):
        return {"num_trees": self.num_trees, "min_node_size": self.min_node_size,
                "sample_fraction": self.sample_fraction,
                "mtry": "default" if self.mtry is None else self.mtry, "honest": self.honest}


@dataclass(frozen=True)
class ProbabilityForest:
    params: ForestParams
    p: int
    feat: np.ndarray = field(repr=False)
    thr: np.ndarray = field(repr=False)
    left: np.ndarray = field(repr=False)
    right: np.ndarray = field(repr=False)
    value: np.ndarray = field(repr=False)

    @property
    def num_trees(self):
        return self.feat.shape[0]

    def predict_proba(self, X):
        X = _check_design(X)
        return _kernels.predict_forest(X, self.feat, self.thr, self.left, self.right, self.value)


def fit_probability_forest(X, y, params=ForestParams(), seed=0):
    """Random forest of Gini trees whose leaves store class-1 frequencies.

    Each tree sees a subsample without replacement of size
    ceil(sample_fraction * n) and considers ``mtry`` random features per split.
    Honest trees (the default) choose splits on one half of the subsample and
    estimate leaf frequencies on the other half; a leaf that receives no
    estimation rows takes its parent's value.
    """
    X, y = _check_design(X, y)
    if not np.all((y == 0) | (y == 1)):
        raise InvalidInputError("forest response must be 0/1")
    if params.num_trees < 1 or params.min_node_size < 1:
        raise InvalidInputError("num_trees and min_node_size must be positive")
    if not 0.0 < params.sample_fraction <= 1.0:
        raise InvalidInputError("sample_fraction must lie in (0, 1]")
    n, p = X.shape
    m = max(1, min(n, math.ceil(params.sample_fraction * n)))
    seeds = [_kernels.tree_seed(seed, t) for t in range(params.num_trees)]
    feat, thr, left, right, value, sizes = _kernels.grow_forest(
        X, y, seeds, m, params.resolved_mtry(p), params.min_node_size, params.honest)
    width = int(sizes.max())
    return ProbabilityForest(params, p, feat[:, :width].copy(), thr[:, :width].copy(),
                             left[:, :width].copy(), right[:, :width].copy(),
                             value[:, :width].copy())


FOREST_GRID = tuple(
    ForestParams(nt, mns, sf, mt)
    for nt, mns, sf, mt in product((30, 40, 50), (5, 10, 20), (0.1, 0.2, 0.5), (2, 4, None))
)

# reduced grid for quick runs
FOREST_GRID_DESK = tuple(
    ForestParams(nt, mns, sf, None)
    for nt, mns, sf in product((30, 50), (5, 20), (0.2, 0.5))
)


def log_loss(y, prob):
    prob = np.clip(prob, PROB_CLIP, 1.0 - PROB_CLIP)
    return float(-np.mean(y * np.log(prob) + (1.0 - y) * np.log(1.0 - prob)))


def make_folds(n, K, seed):
    """Fold index per row: a seeded permutation dealt round-robin into K folds."""
    if K < 2 or n < 2 * K:
        raise InvalidInputError(f"cross-fitting needs K >= 2 and n >= 2K (n={n}, K={K})")
    perm = np.random.default_rng(derive(seed, 6)).permutation(n)
    folds = np.empty(n, dtype=np.int64)
    folds[perm] = np.arange(n) % K
    return folds


def tune_forest(X, y, seed=0, grid=FOREST_GRID, K=5, return_losses=False):
    """Pick forest hyperparameters by K-fold cross-validated log loss.

    Ties go to the earliest grid entry.
    """
    X, y = _check_design(X, y)
    folds = make_folds(X.shape[0], K, derive(seed, 7))
    losses = np.empty(len(grid))
    for g, params in enumerate(grid):
        pred = np.empty(X.shape[0])
        for k in range(K):
            test = folds == k
            model = fit_probability_forest(X[~test], y[~test], params, seed=derive(seed, 8, k))
            pred[test] = model.predict_proba(X[test])
        losses[g] = log_loss(y, pred)
    best = grid[int(np.argmin(losses))]
    return (best, losses) if return_losses else best


# ---------------------------------------------------------------------------
# cross-fitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NuisanceFits:
    """Out-of-fold predictions; arm index 0 is control, 1 is treated."""

    propensity: np.ndarray
    outcome_mean: np.ndarray
    quantile: dict
    folds: np.ndarray

    def take(self, rows):
        rows = np.asarray(rows)
        return NuisanceFits(self.propensity[rows], self.outcome_mean[rows],
                            {tau: q[rows] for tau, q in self.quantile.items()},
                            self.folds[rows])


def _propensity_model(X, t, model, seed):
    if model == "logistic":
        return fit_logistic(X, t).predict_proba
    if isinstance(model, ForestParams):
        return fit_probability_forest(X, t, model, seed).predict_proba
    raise InvalidInputError(f"unknown propensity model {model!r}")


def crossfit_propensity(X, t, K=5, seed=0, model="logistic", folds=None):
    """Out-of-fold propensity predictions, clipped to [1e-6, 1-1e-6]."""
    X = _check_design(X)
    t = np.asarray(t, dtype=np.float64)
    if folds is None:
        folds = make_folds(X.shape[0], K, seed)
    ehat = np.empty(X.shape[0])
    for k in range(int(folds.max()) + 1):
        test = folds == k
        predict = _propensity_model(X[~test], t[~test], model, derive(seed, 9, k))
        ehat[test] = predict(X[test])
    return np.clip(ehat, PROB_CLIP, 1.0 - PROB_CLIP), folds


def crossfit(data, K=5, taus=(), seed=0, propensity="logistic", outcome_mean=True):
    """K-fold cross-fitted nuisances for ``data``.

    For each fold the propensity model is trained on the other folds; the
    outcome regression and the conditional quantiles at each level in
    ``taus`` are trained separately on each arm's rows of the other folds.
    """
    X, t, y = data.X, data.t, data.y
    n = data.n
    folds = make_folds(n, K, seed)
    taus = np.unique(np.asarray(taus, dtype=np.float64))
    ehat = np.empty(n)
    mhat = np.zeros((n, 2))
    qhat = np.empty((taus.size, n, 2))
    for k in range(K):
        test = folds == k
        train = ~test
        predict = _propensity_model(X[train], t[train], propensity, derive(seed, 9, k))
        ehat[test] = predict(X[test])
        for arm in (0, 1):
            rows = train & (t == arm)
            if not rows.any():
                raise InvalidInputError("arm empty in fold")
            if outcome_mean:
                mhat[test, arm] = fit_least_squares(X[rows], y[rows]).linear(X[test])
            if taus.size:
                fits = fit_quantile_path(X[rows], y[rows], taus)
                for j, fit in enumerate(fits):
                    qhat[j, test, arm] = fit.linear(X[test])
    ehat = np.clip(ehat, PROB_CLIP, 1.0 - PROB_CLIP)
    return NuisanceFits(ehat, mhat, {float(tau): qhat[j] for j, tau in enumerate(taus)}, folds)
