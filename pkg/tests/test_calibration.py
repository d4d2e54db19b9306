import itertools
import warnings

import numpy as np
import pytest
from scipy.stats import norm

from gammacal.bounds import critical_value, make_grid
from gammacal.calibration import (
    default_lb_grid,
    estimate_shift_weights,
    estimate_support_filter,
    informal_benchmark,
    nco_lower_bound,
    rct_ate,
    rct_lower_bound,
    rct_test_statistics,
)
from gammacal.data import Dataset
from gammacal.errors import InvalidInputError
from gammacal.models import ForestParams
from gammacal.simgen import make_config, replicate_seed, sample_pair

from conftest import confounded_data


@pytest.fixture(scope="module")
def pair():
    return sample_pair(make_config(1), replicate_seed(1, 0))


def _logistic_data(n, coefs, seed, dup=False):
    g = np.random.default_rng(seed)
    X = g.uniform(-1, 1, (n, len(coefs)))
    if dup:
        X[:, 1] = X[:, 0]
    t = (g.random(n) < 1 / (1 + np.exp(-(X @ coefs)))).astype(int)
    return Dataset(X, t, g.normal(size=n))


def test_lb_grids():
    np.testing.assert_allclose(default_lb_grid(), np.linspace(1, 13, 25))
    np.testing.assert_allclose(default_lb_grid(20), np.linspace(1, 20, 30))


def test_null_covariate_has_gamma_near_one():
    d = _logistic_data(5000, [1.0, 0.8, 0.0], seed=1)
    rep = informal_benchmark(d, "logistic", "loo", seed=0)
    by = {r.omitted: r.gamma for r in rep.records}
    assert by[(2,)] < 1.3
    assert by[(0,)] > 2


def test_duplicated_column_singleton_is_one():
    d = _logistic_data(2000, [1.0, 0.0, 0.5], seed=2, dup=True)
    rep = informal_benchmark(d, "logistic", "loo", seed=0)
    by = {r.omitted: r.gamma for r in rep.records}
    assert by[(1,)] == pytest.approx(1.0, abs=0.05)


def test_report_invariants_and_subset_counts():
    d = _logistic_data(600, [1.0, -0.5, 0.3, 0.2], seed=3)
    lmo = informal_benchmark(d, "logistic", "lmo", seed=1)
    assert len(lmo.records) == 2**4 - 2
    assert {r.omitted for r in lmo.records} == {
        s for k in range(1, 4) for s in itertools.combinations(range(4), k)}
    loo = informal_benchmark(d, "logistic", "loo", seed=1)
    assert [r.omitted for r in loo.records] == [(0,), (1,), (2,), (3,)]
    for rep in (lmo, loo):
        g = [r.gamma for r in rep.records]
        assert min(g) == rep.gamma_low and max(g) == rep.gamma_ib
        assert all(r.gamma >= 1 and r.gamma == max(r.gamma_plus, r.gamma_minus) for r in rep.records)
    # loo subsets are a subset of lmo subsets on the same folds and seed
    assert loo.gamma_ib <= lmo.gamma_ib
    js = lmo.to_json()
    assert js["gamma_ib"] == lmo.gamma_ib and len(js["subsets"]) == 14


def test_ib_errors():
    d = _logistic_data(100, [1.0], seed=4)
    with pytest.raises(InvalidInputError):
        informal_benchmark(d)
    wide = _logistic_data(100, np.zeros(21), seed=4)
    with pytest.raises(InvalidInputError, match="loo"):
        informal_benchmark(wide, mode="lmo")
    with pytest.raises(InvalidInputError):
        informal_benchmark(_logistic_data(100, [1, 1], 4), estimator="svm")


def test_ib_forest_reuses_hyperparameters():
    d = _logistic_data(400, [1.0, 0.5, 0.0], seed=5)
    params = ForestParams(num_trees=10, min_node_size=10, mtry=3)
    rep = informal_benchmark(d, "forest", "loo", seed=0, forest_params=params)
    assert rep.forest_params["mtry"] == 3
    assert len(rep.records) == 3 and rep.gamma_ib >= 1
    tuned = informal_benchmark(d, "forest", "loo", seed=0,
                               forest_grid=(ForestParams(10, 5, 0.5), ForestParams(10, 20, 0.5)))
    assert tuned.forest_params["num_trees"] == 10


def test_rct_ate_examples(pair):
    d = pair.d_rct
    base = rct_ate(d, seed=1)
    shifted = rct_ate(d.with_outcome(d.y + 5.0), seed=1)
    # Y + c shifts each arm mean by c; the Horvitz-Thompson form with the
    # empirical pi cancels it exactly
    assert shifted.ate == pytest.approx(base.ate, abs=1e-9)
    assert base.sigma > 0 and 0 < base.pi_hat < 1
    t = d.t.astype(float)
    by_hand = np.mean((t / t.mean() - (1 - t) / (1 - t.mean())) * d.y)
    assert base.ate == pytest.approx(by_hand)
    with pytest.raises(InvalidInputError):
        rct_ate(Dataset(d.X, np.ones(d.n, dtype=int), d.y))


def test_support_filter():
    g = np.random.default_rng(0)
    X = g.uniform(-1, 1, (500, 2))
    d = Dataset(X, g.integers(0, 2, 500), g.normal(size=500))
    assert estimate_support_filter(d, d).all()
    Xo = X[:10].copy()
    Xo[3, 1] = 5.0
    mask = estimate_support_filter(d, Dataset(Xo, np.zeros(10, int), np.zeros(10)))
    assert not mask[3] and mask.sum() == 9
    with pytest.raises(InvalidInputError, match="no support overlap"):
        estimate_support_filter(d, Dataset(X[:5] + 10, np.zeros(5, int), np.zeros(5)))


def test_support_filter_on_generated_data(pair):
    frac = estimate_support_filter(pair.d_rct, pair.d_obs).mean()
    assert 0.5 <= frac <= 0.68


def test_shift_weights_same_law():
    g = np.random.default_rng(1)
    a = Dataset(g.uniform(-1, 1, (2000, 3)), g.integers(0, 2, 2000), g.normal(size=2000))
    b = Dataset(g.uniform(-1, 1, (2000, 3)), g.integers(0, 2, 2000), g.normal(size=2000))
    w = estimate_shift_weights(a, b, seed=0)
    assert w.mean() == pytest.approx(1.0, abs=1e-12)
    assert np.abs(w - 1).max() < 0.3


def test_shift_weights_warn_without_overlap():
    g = np.random.default_rng(2)
    a = Dataset(g.uniform(-1, 0, (300, 1)), g.integers(0, 2, 300), g.normal(size=300))
    b = Dataset(g.uniform(0.01, 1, (300, 1)), g.integers(0, 2, 300), g.normal(size=300))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.warns(UserWarning, match="no overlap"):
            w = estimate_shift_weights(a, b)
    assert np.all(w > 0)


def test_weighted_rct_ate_recovers_truth():
    c = make_config(1)
    vals = []
    for r in range(20):
        p = sample_pair(c, replicate_seed(1, r))
        obs_f = p.d_obs.take(estimate_support_filter(p.d_rct, p.d_obs))
        w = estimate_shift_weights(p.d_rct, obs_f, seed=r)
        vals.append(rct_ate(p.d_rct, w, seed=r, B=10).ate)
    assert abs(np.mean(vals) - 0.25) < 0.05


def test_test_statistics_algebra():
    tp, tm = rct_test_statistics(0.3, 0.1, np.array([0.0]), np.array([0.5]),
                                 np.array([0.2]), np.array([0.3]))
    assert tp[0] == pytest.approx(0.2 / np.hypot(0.1, 0.3))
    assert tm[0] == pytest.approx(0.3 / np.hypot(0.1, 0.2))
    tp_rct, _ = rct_test_statistics(0.3, 0.1, np.array([0.0]), np.array([0.5]),
                                    np.array([0.2]), np.array([0.3]), target="rct")
    assert tp_rct[0] == pytest.approx(0.2 / 0.4)


def test_phi_examples():
    z = norm.ppf(0.025)
    # ATE inside the interval: both statistics nonnegative
    tp, tm = rct_test_statistics(0.2, 0.05, np.array([0.0]), np.array([0.4]), np.array([0.05]), np.array([0.05]))
    assert min(tp[0], tm[0]) >= 0 >= z
    # far above the upper bound: rejected
    tp, tm = rct_test_statistics(2.0, 0.05, np.array([0.0]), np.array([0.4]), np.array([0.05]), np.array([0.05]))
    assert tp[0] < z


def test_rct_lower_bound_trace(pair):
    grid = default_lb_grid()
    tr = rct_lower_bound(pair.d_rct, pair.d_obs, grid=grid, seed=3, B_sigma=50)
    assert set(np.unique(tr.phi)) <= {0, 1}
    if not tr.all_rejected:
        assert tr.gamma_lb == grid[np.flatnonzero(tr.phi == 0)[0]]
        assert np.all(tr.phi[: np.flatnonzero(tr.phi == 0)[0]] == 1)
    # nested intervals with fixed sigmas: phi nonincreasing in Gamma
    assert np.all(np.diff(tr.phi) <= 0)
    js = tr.to_json()
    assert len(js["trace"]) == grid.size and js["target"] == "obs'"


def test_rct_lower_bound_grows_with_gap(pair):
    grid = default_lb_grid()
    d = pair.d_rct
    lbs = []
    for c in (0.0, 0.3, 1.0, 5.0):
        shifted = d.with_outcome(d.y + c * d.t)
        lbs.append(rct_lower_bound(shifted, pair.d_obs, grid=grid, seed=3, B_sigma=50).gamma_lb)
    assert lbs == sorted(lbs)
    tr = rct_lower_bound(d.with_outcome(d.y + 50 * d.t), pair.d_obs, grid=grid, seed=3, B_sigma=50)
    assert tr.all_rejected and tr.gamma_lb == grid[-1]


def test_nco_pure_noise_gives_one():
    d = confounded_data(1000, seed=11)
    g = np.random.default_rng(0)
    d = Dataset(d.X, d.t, d.y, g.normal(size=(d.n, 1)))
    # the PEI is a single point at Gamma = 1; the bootstrap CI is not
    rep = nco_lower_bound(d, grid=make_grid(1, 5, 9), interval="ci", B_ci=200, seed=0)
    assert rep.gamma_lb == 1.0 and not rep.censored
    assert nco_lower_bound(d, grid=make_grid(1, 5, 9), seed=0).gamma_lb == 1.5


def test_nco_equals_bruteforce_scan(pair):
    grid = default_lb_grid()
    rep = nco_lower_bound(pair.d_obs, grid=grid, seed=4)
    scans = []
    for curve in rep.curves:
        inside = [G for G, lo, hi in zip(curve.grid, curve.pei_lower, curve.pei_upper) if lo <= 0 <= hi]
        scans.append(inside[0] if inside else np.inf)
    assert list(rep.critical_values) == scans
    assert rep.gamma_lb == (max(scans) if np.isfinite(max(scans)) else grid[-1])
    assert [critical_value(c).gamma for c in rep.curves] == scans


def test_nco_censored_when_bias_exceeds_grid():
    d = confounded_data(800, seed=12)
    w = (5.0 * d.t + np.random.default_rng(1).normal(0, 0.1, d.n))[:, None]
    rep = nco_lower_bound(Dataset(d.X, d.t, d.y, w), grid=make_grid(1, 3, 5), seed=0)
    assert rep.censored and rep.gamma_lb == 3.0
    assert rep.to_json()["per_nco"][0]["critical_value"] is None


def test_nco_requires_columns():
    with pytest.raises(InvalidInputError):
        nco_lower_bound(confounded_data(100, seed=13))
