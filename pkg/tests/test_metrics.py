import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fairreg.datasets import load_adult
from fairreg.losses import CDERegularizer
from fairreg.metrics import (UndefinedMetricError, accuracy, error_rate, metric_columns,
                             metrics_row, precision, spd_outcomes, spd_scores,
                             surrogate_diagnostics)
from fairreg.surrogate import FairTargetCoeffs, fair_target_coeffs


def test_worked_examples():
    s = np.array([0.9, 0.2, 0.7, 0.4, 0.6, 0.1])
    y = np.array([1, 0, 0, 1, 1, 0])
    z = np.array([1, 1, 1, 0, 0, 0])
    # predictions 1,0,1,0,1,0
    assert accuracy(s, y) == pytest.approx(4 / 6)
    assert error_rate(s, y) == pytest.approx(2 / 6)
    assert precision(s, y) == pytest.approx(2 / 3)
    assert spd_outcomes(s, z) == pytest.approx(1 / 3)
    assert spd_scores(s, z) == pytest.approx(abs(1.8 / 3 - 1.1 / 3))
    assert spd_outcomes(s, z, threshold=0.8) == pytest.approx(1 / 3)
    assert accuracy([0.5], [0]) == 1.0  # ties predict the negative class


def test_precision_undefined():
    with pytest.raises(UndefinedMetricError):
        precision([0.1, 0.2], [1, 0])


scores_and_groups = st.integers(2, 60).flatmap(lambda n: st.tuples(
    st.lists(st.floats(0, 1), min_size=n, max_size=n),
    st.lists(st.integers(0, 1), min_size=n, max_size=n),
    st.lists(st.integers(0, 1), min_size=n, max_size=n),
)).filter(lambda t: 0 < sum(t[1]) < len(t[1]))


@settings(max_examples=200, deadline=None)
@given(scores_and_groups, st.floats(0.05, 0.95))
def test_invariants(data, thr):
    s, z, y = map(np.asarray, data)
    for gap in (spd_outcomes(s, z, thr), spd_scores(s, z)):
        assert 0.0 <= gap <= 1.0
    assert spd_outcomes(s, 1 - z, thr) == spd_outcomes(s, z, thr)
    assert spd_scores(s, 1 - z) == pytest.approx(spd_scores(s, z), abs=1e-15)
    assert accuracy(s, y, thr) + error_rate(s, y, thr) == pytest.approx(1.0)


def test_constant_scores_have_no_dependence(rng):
    n = 300
    b = rng.uniform(0.1, 0.9, n)
    z = (rng.random(n) < b).astype(int)
    target = FairTargetCoeffs(np.array([0.3, 0.1]), np.zeros(2), np.zeros(2), 1, 1)
    fit = surrogate_diagnostics(np.full(n, 0.42), b, z, target)
    np.testing.assert_allclose(fit.alpha, [0.42, 0.0], atol=1e-8)
    np.testing.assert_allclose(fit.beta, 0.0, atol=1e-8)
    assert spd_outcomes(np.full(n, 0.42), z) == 0.0


def test_gamma_polynomial_recovered(rng):
    n = 500
    b = rng.uniform(0.05, 0.95, n)
    z = (rng.random(n) < b).astype(int)
    scores = 0.1 + 0.4 * b - 0.2 * b**2
    target = FairTargetCoeffs(np.zeros(3), np.zeros(3), np.zeros(1), 2, 0)
    fit = surrogate_diagnostics(scores, b, z, target)
    np.testing.assert_allclose(fit.alpha, [0.1, 0.4, -0.2], atol=1e-8)
    np.testing.assert_allclose(fit.beta, [0.0], atol=1e-8)


def test_diagnostics_match_penalty_surrogate(rng):
    n = 400
    b = rng.uniform(0.05, 0.95, n)
    z = (rng.random(n) < b).astype(int)
    y = (rng.random(n) < 0.3 + 0.4 * b).astype(float)
    target = fair_target_coeffs(y, b, z, 2, 1)
    scores = rng.random(n)
    a = surrogate_diagnostics(scores, b, z, target)
    r = CDERegularizer(b, z, target).surrogate(scores)
    np.testing.assert_allclose(a.zeta, r.zeta, atol=1e-9)


def test_metrics_row_columns(rng):
    n = 200
    b = rng.uniform(0.1, 0.9, n)
    z = rng.integers(0, 2, n)
    y = rng.integers(0, 2, n)
    for n1, n2 in [(1, 0), (2, 1), (1, 3)]:
        target = fair_target_coeffs(y, b, z, n1, n2)
        row = metrics_row(0.25, rng.random(n), y, z, b, target)
        assert list(row) == metric_columns(n1, n2)
    row = metrics_row(0.0, np.zeros(n), y, z, b, fair_target_coeffs(y, b, z, 1, 0))
    assert math.isnan(row["precision"])


def test_majority_class_on_adult(adult_paths):
    train, test = load_adult(*adult_paths)
    rate = test.y.mean()
    assert accuracy(np.zeros(test.n_rows), test.y) == pytest.approx(1 - rate)
    assert 1 - rate == pytest.approx(0.764, abs=0.005)
    assert spd_outcomes(np.zeros(test.n_rows), test.z) == 0.0
