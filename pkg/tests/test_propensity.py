import numpy as np
import pytest
from sklearn.linear_model import LogisticRegression

from fairreg.datasets import Dataset, generate_synthetic
from fairreg.oracle import random_scm
from fairreg.propensity import (C_GRID, CLIP_EPS, PropensityConvergenceError, PropensityModel,
                                fit_l1_logistic, fit_propensity, load_propensity,
                                predict_propensity, save_propensity, select_c)


def _toy(rng, n=400, d=5):
    X = rng.standard_normal((n, d))
    t = (rng.random(n) < 1 / (1 + np.exp(-(X[:, 0] - 0.5 * X[:, 1] + 0.2)))).astype(float)
    return X, t


@pytest.mark.parametrize("C", [0.05, 1.0, 20.0])
def test_solver_matches_saga(rng, C):
    X, t = _toy(rng)
    w, c, _ = fit_l1_logistic(X, t, C)
    ref = LogisticRegression(penalty="l1", C=C, solver="saga", tol=1e-12, max_iter=100_000)
    ref.fit(X, t)
    np.testing.assert_allclose(w, ref.coef_[0], atol=2e-5)
    assert c == pytest.approx(ref.intercept_[0], abs=2e-5)


def test_solver_warm_start_reaches_same_optimum(rng):
    X, t = _toy(rng)
    w0, c0, _ = fit_l1_logistic(X, t, 0.1)
    cold = fit_l1_logistic(X, t, 10.0)
    warm = fit_l1_logistic(X, t, 10.0, w0=w0, c0=c0)
    np.testing.assert_allclose(warm[0], cold[0], atol=1e-6)


def test_nonconvergence_carries_diagnostics(rng):
    X, t = _toy(rng)
    with pytest.raises(PropensityConvergenceError) as err:
        fit_l1_logistic(X, t, 10.0, max_iter=3)
    assert err.value.iterations == 3 and err.value.C == 10.0
    assert err.value.last_change > 1e-8


def test_select_c_prefers_smaller_on_ties():
    assert select_c({0.01: 0.7, 0.1: 0.8, 1.0: 0.8}) == 0.1
    assert select_c({1.0: 0.5, 10.0: 0.5, 0.01: 0.5}) == 0.01
    assert select_c({0.01: 0.6, 100.0: 0.9}) == 100.0


def test_independent_z_gives_flat_scores(rng):
    n = 4000
    X = rng.standard_normal((n, 4))
    z = (rng.random(n) < 0.3).astype(int)
    ds = Dataset(X, rng.integers(0, 2, n), z, list("abcd"))
    model = fit_propensity(ds)
    assert model.C in C_GRID
    b = predict_propensity(model, ds)
    assert np.abs(b - z.mean()).max() < 0.05


def test_synthetic_weight_pattern():
    ds = generate_synthetic(20_000, seed=3)
    model = fit_propensity(ds)
    informative = np.concatenate([ds.columns_with_role("proxy"),
                                  ds.columns_with_role("indirect")])
    safe = ds.columns_with_role("safe")
    assert np.all(model.weights[informative] != 0)
    w_small, _, _ = fit_l1_logistic(ds.features, ds.z, 1e-2)
    assert np.all(w_small[safe] == 0)
    assert np.all(w_small[informative] != 0)


def test_nonzero_count_monotone_in_penalty():
    ds = generate_synthetic(5000, seed=9)
    counts = [np.count_nonzero(fit_l1_logistic(ds.features, ds.z, C)[0])
              for C in sorted(C_GRID)]
    assert counts == sorted(counts)


def test_one_dimensional_separation(rng):
    n = 2000
    z = rng.integers(0, 2, n)
    x = 2.0 * z - 1 + 1e-3 * rng.standard_normal(n)
    ds = Dataset(x[:, None], rng.integers(0, 2, n), z, ["x"])
    b = predict_propensity(fit_propensity(ds), ds)
    np.testing.assert_array_equal(b > 0.5, x > 0)


def test_prediction_contract(rng):
    X = rng.standard_normal((10, 3))
    zero = PropensityModel(np.zeros(3), 0.0, 1.0)
    np.testing.assert_array_equal(predict_propensity(zero, X), 0.5)
    huge = PropensityModel(np.array([1e4, 0, 0]), 0.0, 1.0)
    b = predict_propensity(huge, X)
    assert b.min() >= CLIP_EPS and b.max() <= 1 - CLIP_EPS
    assert set(np.round(b, 12)) <= {CLIP_EPS, 1 - CLIP_EPS}
    with pytest.raises(ValueError):
        predict_propensity(zero, rng.standard_normal((4, 2)))


def test_matches_exact_balancing_score_on_oracle():
    r = np.random.default_rng(5)
    scm = random_scm(r, n_points=4)
    k, z, y = scm.sample(100_000, r)
    onehot = np.eye(4)[k][:, 1:]  # drop one level; the intercept absorbs it
    ds = Dataset(onehot, y, z, ["k1", "k2", "k3"])
    b = predict_propensity(fit_propensity(ds), ds)
    exact = scm.balancing_score()[k]
    assert np.abs(b - exact).max() < 0.02


def test_calibration_on_large_synthetic():
    ds = generate_synthetic(100_000, seed=12)
    b = predict_propensity(fit_propensity(ds), ds)
    edges = np.quantile(b, np.linspace(0, 1, 11))
    bins = np.clip(np.searchsorted(edges, b, side="right") - 1, 0, 9)
    for j in range(10):
        m = bins == j
        assert abs(ds.z[m].mean() - b[m].mean()) < 0.03


def test_save_load_round_trip(tmp_path, rng):
    model = PropensityModel(rng.standard_normal(3), 0.25, 10.0, 1e-6, ["a", "b", "c"])
    save_propensity(model, tmp_path / "p.csv")
    back = load_propensity(tmp_path / "p.csv")
    np.testing.assert_array_equal(back.weights, model.weights)
    assert (back.intercept, back.C, back.eps) == (0.25, 10.0, 1e-6)
    assert back.feature_names == ["a", "b", "c"]
