import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fairreg.datasets import Dataset
from fairreg.losses import LossBundle, bce, sigmoid, to_margin_space
from fairreg.trainers import (Booster, BoostingError, GBTConfig, LinearDescent, LinearModel,
                              SplitFinder, TrainingError, fit_tree, load_ensemble, load_linear,
                              save_ensemble, save_linear, train_gbt, train_linear, zero_model)
from fairreg.trainers.boosting import base_margin
from fairreg.trainers.stopping import EarlyStopper, StoppingRule

from split_oracle import best_split, grow_predict


def margin_bce(y):
    return lambda p: to_margin_space(bce(p, y), p)


def random_problem(r, n=60, d=3, levels=6):
    X = r.integers(0, levels, (n, d)).astype(float) + r.random(d)
    g = r.standard_normal(n)
    h = r.uniform(0.05, 1.0, n)
    return X, g, h


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([0.0, 1.0, 10.0]))
def test_split_search_matches_brute_force(seed, lam):
    r = np.random.default_rng(seed)
    X, g, h = random_problem(r)
    finder = SplitFinder(X, lam, 1.0)
    rows = r.random(X.shape[0]) < 0.8
    if rows.sum() < 2:
        return
    ref = best_split(X, g, h, np.flatnonzero(rows), lam, 1.0)
    got = finder.best(g, h, rows)
    if ref is None:
        assert got is None
        return
    assert (got.feature, got.threshold) == (ref[0], pytest.approx(ref[1]))
    assert got.gain == pytest.approx(ref[2], rel=1e-9)
    np.testing.assert_array_equal(got.left_mask, rows & (X[:, ref[0]] < ref[1]))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3))
def test_tree_matches_brute_force(seed, depth):
    r = np.random.default_rng(seed)
    X, g, h = random_problem(r, n=50)
    tree = fit_tree(SplitFinder(X, 10.0, 1.0), g, h, depth)
    np.testing.assert_allclose(tree.predict(X), grow_predict(X, g, h, 10.0, 1.0, depth),
                               rtol=1e-10, atol=1e-14)
    assert tree.depth() <= depth


def test_first_round_leaves_are_newton_steps(rng):
    n = 400
    X = rng.standard_normal((n, 2))
    y = (X[:, 0] + 0.5 * rng.standard_normal(n) > 0).astype(float)
    booster = Booster(X, y, GBTConfig(), base_score=0.0)
    p = booster.scores()
    booster.step(margin_bce(y))
    tree = booster.ensemble.trees[0]
    leaf = tree.apply(X)
    for k in np.unique(leaf):
        m = leaf == k
        expected = -(p[m] - y[m]).sum() / ((p[m] * (1 - p[m])).sum() + 10.0)
        assert tree.value[k] == pytest.approx(expected, rel=1e-10)
    np.testing.assert_allclose(booster.scores(), sigmoid(0.1 * np.asarray(tree.value)[leaf]))


def test_no_positive_gain_gives_stump():
    X = np.arange(10.0)[:, None]
    tree = fit_tree(SplitFinder(X, 1.0, 1.0), np.ones(10), np.ones(10), 2)
    assert tree.depth() == 0
    assert tree.value == [pytest.approx(-10 / 11)]
    with pytest.raises(BoostingError):
        fit_tree(SplitFinder(X, 1.0, 1.0), np.ones(10), np.zeros(10), 2)


def test_min_child_weight_blocks_small_leaves():
    X = np.arange(4.0)[:, None]
    g = np.array([-5.0, 1.0, 1.0, 1.0])
    h = np.full(4, 0.6)
    tree = fit_tree(SplitFinder(X, 0.0, 1.0), g, h, 1)
    assert tree.threshold[0] == 1.5  # the lone outlier leaf would weigh only 0.6


def test_all_positive_labels_push_scores_up(rng):
    X = rng.standard_normal((100, 2))
    y = np.ones(100)
    booster = Booster(X, y, GBTConfig(), base_score=0.0)
    means = [booster.scores().mean()]
    for _ in range(10):
        booster.step(margin_bce(y))
        means.append(booster.scores().mean())
    assert np.all(np.diff(means) > 0)
    assert base_margin(y) > 10


def test_ensemble_is_additive_and_deterministic(rng):
    X = rng.standard_normal((300, 3))
    y = (X[:, 1] > 0).astype(float)
    tracked = rng.standard_normal((50, 3))
    runs, history = [], []
    for _ in range(2):
        b = Booster(X, y, GBTConfig(), tracked={"other": tracked})
        for _ in range(5):
            b.step(margin_bce(y))
            history.append(b.scores().copy())
        runs.append(b)
    a, b = runs
    model = a.model()
    np.testing.assert_array_equal(model.margin(X), b.model().margin(X))
    np.testing.assert_allclose(model.predict(X), a.scores(), rtol=1e-12)
    np.testing.assert_allclose(model.predict(tracked), a.scores("other"), rtol=1e-12)
    for k in range(1, 6):
        partial = model.base_score + model.eta * sum(t.predict(X) for t in model.trees[:k])
        np.testing.assert_allclose(sigmoid(partial), history[k - 1], rtol=1e-12)
    assert all(t.depth() <= 2 for t in model.trees)


def test_train_gbt_stops_and_round_trips(tmp_path, rng):
    X = rng.standard_normal((300, 3))
    y = (X[:, 0] + X[:, 1] ** 2 > 0.7).astype(float)
    ds = Dataset(X, y, rng.integers(0, 2, 300), ["a", "b", "c"])
    model = train_gbt(ds, margin_bce(y), stop=StoppingRule(patience=3, max_steps=40))
    assert 0 < len(model.trees) <= 40
    save_ensemble(model, tmp_path / "m.csv")
    back = load_ensemble(tmp_path / "m.csv")
    np.testing.assert_array_equal(back.margin(X), model.margin(X))
    assert bce(model.predict(X), y).value < bce(np.full(300, y.mean()), y).value


# -- linear -------------------------------------------------------------------------


def linear_data(r, n=500):
    X = r.standard_normal((n, 3))
    y = (r.random(n) < sigmoid(X @ [1.0, -2.0, 0.0] + 0.3)).astype(float)
    return Dataset(X, y, r.integers(0, 2, n), ["a", "b", "c"])


def test_zero_gradient_keeps_init(rng):
    ds = linear_data(rng)
    init = LinearModel(np.array([0.2, -0.1, 0.4]), 0.1, ["a", "b", "c"])
    flat = lambda p: LossBundle(1.0, np.zeros_like(p), np.zeros_like(p))  # noqa: E731
    model = train_linear(ds, flat, init=init, stop=StoppingRule(patience=3))
    np.testing.assert_array_equal(model.weights, init.weights)
    assert model.intercept == init.intercept


def test_loss_decreases_monotonically(rng):
    ds = linear_data(rng)
    loss = lambda p: bce(p, ds.y)  # noqa: E731
    trainer = LinearDescent(ds.features, zero_model(ds), step=0.5)
    values = [trainer.step(loss).value for _ in range(60)]
    assert np.all(np.diff(values) <= 0)
    assert values[-1] < values[0]


def test_converges_to_maximum_likelihood(rng):
    from fairreg.trainers import baseline_logistic
    ds = linear_data(rng)
    loss = lambda p: bce(p, ds.y)  # noqa: E731
    model = train_linear(ds, loss, init=zero_model(ds),
                         stop=StoppingRule(patience=5, min_delta=1e-12, max_steps=20_000))
    ref = baseline_logistic(ds)
    np.testing.assert_allclose(model.weights, ref.weights, atol=2e-3)
    assert model.trace and model.trace[-1][0] == len(model.trace)


def test_non_finite_loss_raises_with_trace(rng):
    ds = linear_data(rng)
    calls = {"n": 0}

    def loss(p):
        calls["n"] += 1
        out = bce(p, ds.y)
        return out if calls["n"] < 8 else LossBundle(np.nan, out.grad, out.hess)

    with pytest.raises(TrainingError) as err:
        train_linear(ds, loss, init=zero_model(ds), stop=StoppingRule(patience=50))
    assert len(err.value.trace) >= 1


def test_linear_round_trip(tmp_path, rng):
    model = LinearModel(rng.standard_normal(3), -0.4, ["a", "b", "c"])
    save_linear(model, tmp_path / "w.csv")
    back = load_linear(tmp_path / "w.csv")
    np.testing.assert_array_equal(back.weights, model.weights)
    assert back.intercept == model.intercept and back.feature_names == ["a", "b", "c"]


def test_early_stopper_patience():
    s = EarlyStopper(patience=2)
    assert [s.update(v) for v in [3.0, 2.0, 2.0 - 1e-10, 2.5]] == [False, False, False, True]
    assert s.best == 2.0
    with pytest.raises(ValueError):
        StoppingRule(patience=0)
    with pytest.raises(ValueError):
        StoppingRule(watch="bogus")
