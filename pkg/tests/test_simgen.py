import json

import numpy as np
import pytest

from gammacal.bounds import odds_ratio
from gammacal.data import Dataset
from gammacal.errors import InvalidInputError
from gammacal.simgen import (
    EXPERIMENT_IDS,
    correlation_band,
    correlation_summary,
    export_pair,
    make_config,
    replicate_seed,
    sample_confounders,
    sample_pair,
    threshold_prob,
    true_propensity_obs,
    with_params,
)


def test_presets():
    c = make_config(1)
    assert (c.n_rct, c.n_obs, c.p_X, c.p_U, c.Gamma_star, c.lam, c.ATE_star) == (2000, 2000, 5, 2, 8.0, 1.0, 0.25)
    assert make_config(9).n_rct == make_config(9).n_obs == 500
    c13 = make_config(13)
    assert (c13.n_rct, c13.n_obs, c13.lam, c13.nco_case) == (200, 2000, 0.85, "case1")
    assert make_config(8).Gamma_star == 20 and make_config(7).Gamma_star == 5
    assert make_config(10).p_X == 10 and make_config(14).interval == "ci"
    assert EXPERIMENT_IDS == tuple(range(1, 15))
    with pytest.raises(InvalidInputError):
        make_config(15)


def test_coefficients_within_ranges_and_frozen():
    for i in EXPERIMENT_IDS:
        c = make_config(i)
        for name in ("beta", "theta1", "theta2", "theta3", "theta4", "delta"):
            lo, hi = c.ranges[name]
            v = getattr(c, name)
            assert np.all((v >= lo) & (v <= hi)), (i, name)
    np.testing.assert_array_equal(make_config(1).theta1, make_config(7).theta1)
    assert not np.array_equal(make_config(1).theta1, make_config(1, base_seed=2).theta1)


def test_config_validation():
    c = make_config(1)
    with pytest.raises(InvalidInputError):
        with_params(c, Gamma_star=0.5)
    with pytest.raises(InvalidInputError):
        with_params(c, lam=0.0)
    with pytest.raises(InvalidInputError):
        with_params(c, nco_case="bogus")
    with pytest.raises(InvalidInputError):
        with_params(c, p_U=1, beta=c.beta[:1], theta2=c.theta2[:1], theta4=c.theta4[:, :1],
                    nco_case="case1")


def test_confounder_supports_and_independence():
    c = make_config(1)
    X, U, Ubar = sample_confounders(c, 2000, "rct", 3)
    assert X.min() >= -0.9 and X.max() <= 0.9
    Xo, Uo, _ = sample_confounders(c, 2000, "obs", 3)
    assert Xo.min() >= -1 and Xo.max() <= 1 and Xo.min() < -0.9
    s = correlation_summary(Xo, Uo, Uo.mean(axis=1), Uo[:, 0], Uo)
    assert s["rho_XU"] < 0.08
    np.testing.assert_allclose(Ubar, U.mean(axis=1))


def test_conditional_variance_of_ubar():
    c = make_config(6)
    X, U, Ubar = sample_confounders(c, 200000, "obs", 4)
    resid = Ubar - (1 - c.lam) * (X @ c.beta.T).mean(axis=1)
    assert resid.var() == pytest.approx(c.lam**2 / c.p_U, rel=0.02)


def test_correlated_confounders_match_analytic_value():
    # lambda = 0.2: corr(X_k, U_j) = 0.8 b_jk sd(X) / sqrt(0.64 |b_j|^2 var(X) + 0.04)
    c = make_config(6)
    X, U, _ = sample_confounders(c, 20000, "obs", 1)
    var_x = 1 / 3
    b = c.beta
    expected = 0.8 * b * np.sqrt(var_x) / np.sqrt(0.64 * (b**2).sum(axis=1, keepdims=True) * var_x + 0.04)
    emp = np.array([[np.corrcoef(X[:, k], U[:, j])[0, 1] for k in range(c.p_X)] for j in range(c.p_U)])
    np.testing.assert_allclose(emp, expected, atol=0.03)


def test_threshold_symmetry_at_one_half():
    l, u, prob = threshold_prob(np.array([0.5]), 8.0)
    assert prob[0] == pytest.approx(0.5)
    assert l[0] == pytest.approx(1 / 9) and u[0] == pytest.approx(8 / 9)


def test_msm_exactness_small():
    c = make_config(7)
    pair = sample_pair(c, 5, 100, 5000)
    o = pair.oracle_obs
    r = odds_ratio(o.e_XU, o.e_X)
    dist = np.minimum(np.abs(r - 5.0), np.abs(r - 0.2))
    assert dist.max() < 1e-10


def test_gamma_star_one_is_unconfounded():
    c = with_params(make_config(1), Gamma_star=1.0)
    X = np.random.default_rng(0).uniform(-1, 1, (50, c.p_X))
    e, e_xu = true_propensity_obs(c, X, np.zeros(50))
    np.testing.assert_array_equal(e, e_xu)


def test_rct_arm_is_randomized_and_unbiased():
    c = make_config(1)
    pair = sample_pair(c, 7)
    np.testing.assert_array_equal(pair.oracle_rct.e_XU, 0.5)
    o = pair.oracle_rct
    assert np.mean(o.Y1 - o.Y0) == pytest.approx(0.25, abs=0.05)


def test_treatment_does_not_depend_on_lambda():
    base = make_config(1)
    ts = [sample_pair(with_params(base, lam=lam), 11, 50, 3000).d_obs.t for lam in (1.0, 0.85, 0.2)]
    np.testing.assert_array_equal(ts[0], ts[1])
    np.testing.assert_array_equal(ts[0], ts[2])


def test_nco_cases_drop_a_confounder():
    g11 = sample_pair(make_config(11), 3, 50, 3000)
    g12 = sample_pair(make_config(12), 3, 50, 3000)
    o11, o12 = g11.oracle_obs, g12.oracle_obs
    # case 1: Y(0) no longer moves with the last component
    assert abs(np.corrcoef(o11.U[:, -1], o11.Y0 - g11.d_obs.X @ (-g11.config.theta1))[0, 1]) < 0.05
    # case 2: W no longer moves with it
    resid = g12.d_obs.w - g12.d_obs.X @ g12.config.theta3.T
    assert abs(np.corrcoef(o12.U[:, -1], resid[:, 0])[0, 1]) < 0.05
    assert abs(np.corrcoef(o12.U[:, 0], resid[:, 0])[0, 1]) > 0.2


def test_correlation_regimes():
    d1 = sample_pair(make_config(1), replicate_seed(1, 0)).diagnostics
    d3 = sample_pair(make_config(3), replicate_seed(1, 0)).diagnostics
    assert d1["band_XU"] == "low"
    assert d3["rho_UW"] > 0.7 and d3["band_UW"] == "high"
    assert d3["rho_UY0"] > d1["rho_UY0"]
    # Exp 1 outcome correlation: analytic value near 0.26 (see the decisions ledger)
    assert 0.2 < d1["rho_UY0"] < 0.35


def test_correlation_bands():
    assert correlation_band(0.29) == "low"
    assert correlation_band(0.3) == "moderate"
    assert correlation_band(0.7) == "moderate"
    assert correlation_band(-0.71) == "high"
    x = np.random.default_rng(0).normal(size=(2000, 2))
    s = correlation_summary(x, x, x[:, 0], x[:, 0], x)
    assert s["rho_UY0"] == pytest.approx(1.0) and s["band_UY0"] == "high"


def test_replicates_are_seeded():
    c = make_config(1)
    a = sample_pair(c, replicate_seed(1, 0), 100, 100)
    b = sample_pair(c, replicate_seed(1, 0), 100, 100)
    d = sample_pair(c, replicate_seed(1, 1), 100, 100)
    np.testing.assert_array_equal(a.d_obs.y, b.d_obs.y)
    assert not np.array_equal(a.d_obs.y, d.d_obs.y)


def test_export_round_trip(tmp_path):
    pair = sample_pair(make_config(1), 2, 30, 40)
    paths = export_pair(pair, tmp_path)
    assert [p.name for p in paths] == ["rct.csv", "obs.csv"]
    back = Dataset.from_csv(tmp_path / "obs.csv")
    np.testing.assert_array_equal(back.X, pair.d_obs.X)
    np.testing.assert_array_equal(back.y, pair.d_obs.y)
    np.testing.assert_array_equal(back.w, pair.d_obs.w)
    header = (tmp_path / "obs.csv").read_text().splitlines()[0]
    assert "u1" not in header and "e_xu" not in header


def test_export_oracle_only_on_request(tmp_path):
    pair = sample_pair(make_config(1), 2, 30, 40)
    names = {p.name for p in export_pair(pair, tmp_path, debug_oracle=True)}
    assert {"oracle_rct.csv", "oracle_obs.csv", "oracle_config.json"} <= names
    cfg = json.loads((tmp_path / "oracle_config.json").read_text())
    assert cfg["Gamma_star"] == 8.0
    with pytest.raises(FileNotFoundError):
        export_pair(pair, tmp_path / "missing")


def test_marginalization_with_correlated_confounders():
    from gammacal.simgen import confounders_given_x
    c = make_config(6)
    g = np.random.default_rng(9)
    for x in g.uniform(-1, 1, (10, c.p_X)):
        X = np.repeat(x[None], 100000, axis=0)
        _, Ubar = confounders_given_x(c, X, g.standard_normal((100000, c.p_U)))
        e, e_xu = true_propensity_obs(c, X, Ubar)
        se = e_xu.std(ddof=1) / np.sqrt(e_xu.size)
        assert abs(e_xu.mean() - e[0]) < 4.5 * se


def test_marginalization_identity_is_exact():
    e = np.linspace(0.01, 0.99, 99)
    for G in (1.5, 5.0, 8.0, 20.0):
        l, u, q = threshold_prob(e, G)
        np.testing.assert_allclose(l * (1 - q) + u * q, e, atol=1e-15)


def test_marginalization_z_scores_are_standard_normal():
    from scipy.stats import chi2

    from gammacal.simgen import confounders_given_x
    c = make_config(1)
    g = np.random.default_rng(77)
    z = []
    for x in g.uniform(-1, 1, (60, c.p_X)):
        X = np.repeat(x[None], 20000, axis=0)
        _, Ubar = confounders_given_x(c, X, g.standard_normal((20000, c.p_U)))
        e, e_xu = true_propensity_obs(c, X, Ubar)
        z.append((e_xu.mean() - e[0]) / (e_xu.std(ddof=1) / np.sqrt(e_xu.size)))
    assert 0.001 < chi2.sf(np.sum(np.square(z)), len(z)) < 0.999
