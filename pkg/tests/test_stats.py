import math

import numpy as np
import pytest
import scipy.special
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from cropfcnn.net import DenseLayer, Model, init_model
from cropfcnn.stats import (
    betainc_regularized,
    bootstrap_ci,
    confusion,
    metric_selector,
    metrics,
    paired_t_test,
    permutation_importance,
    student_t_sf2,
)


def test_confusion_examples():
    cm = confusion([1] * 5 + [2] * 5 + [3] * 5, [1] * 5 + [2] * 5 + [3] * 5)
    np.testing.assert_array_equal(cm.counts, np.diag([5, 5, 5]))
    cm = confusion([1, 1, 2, 3], [1, 2, 2, 3])
    assert (cm.at(1, 1), cm.at(1, 2), cm.at(2, 2), cm.at(3, 3)) == (1, 1, 1, 1)
    assert cm.total == 4


def test_confusion_errors():
    with pytest.raises(ValueError):
        confusion([], [])
    with pytest.raises(ValueError):
        confusion([1, 2], [1])
    with pytest.raises(ValueError):
        confusion([1, 4], [1, 1])


def test_metrics_examples():
    m = metrics(np.diag([3, 4, 5]))
    assert np.all(m.precision == 1) and np.all(m.recall == 1) and np.all(m.f1 == 1) and m.accuracy == 1
    m = metrics(np.array([[8, 2, 0], [1, 9, 0], [0, 0, 10]]))
    assert m.precision[0] == pytest.approx(8 / 9)
    assert m.recall[0] == pytest.approx(0.8)
    assert m.accuracy == pytest.approx(27 / 30)
    m = metrics(np.array([[5, 0, 1], [0, 4, 2], [0, 0, 0]]))
    assert m.precision[2] == 0.0 and m.recall[2] == 0.0 and m.f1[2] == 0.0
    with pytest.raises(ValueError):
        metrics(np.zeros((3, 3)))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 3), st.integers(1, 3)), min_size=1, max_size=60))
def test_metrics_identities(pairs):
    t, p = map(np.array, zip(*pairs))
    m = metrics(confusion(t, p))
    assert m.accuracy == pytest.approx(np.mean(t == p))
    counts = confusion(t, p).counts
    assert np.trace(counts) / counts.sum() == pytest.approx(m.accuracy)
    for c in range(3):
        if m.precision[c] + m.recall[c] > 0:
            assert m.f1[c] == pytest.approx(2 * m.precision[c] * m.recall[c] / (m.precision[c] + m.recall[c]))
        assert 0 <= m.precision[c] <= 1 and 0 <= m.recall[c] <= 1


@pytest.mark.parametrize(
    "a, b, x",
    [(1, 1, 0.3), (0.5, 0.5, 0.5), (2, 3, 0.9), (10, 0.5, 0.7), (0.5, 20, 0.01), (50, 60, 0.45), (1.5, 0.5, 0.999)],
)
def test_betainc_matches_scipy(a, b, x):
    assert betainc_regularized(a, b, x) == pytest.approx(scipy.special.betainc(a, b, x), abs=1e-12)


@pytest.mark.parametrize(
    "t, df, p",
    # two-tailed critical values from standard t tables
    [(12.706, 1, 0.05), (4.303, 2, 0.05), (2.776, 4, 0.05), (2.228, 10, 0.05), (2.042, 30, 0.05), (3.182, 3, 0.05),
     (9.925, 2, 0.01), (1.833, 9, 0.10)],
)
def test_t_tail_tabulated(t, df, p):
    assert student_t_sf2(t, df) == pytest.approx(p, abs=5e-4)


@given(st.floats(-50, 50), st.integers(1, 200))
def test_t_tail_matches_scipy(t, df):
    assert student_t_sf2(t, df) == pytest.approx(2 * scipy.stats.t.sf(abs(t), df), abs=1e-10)


def test_ttest_examples():
    r = paired_t_test([1, 2, 3], [0, 0, 0])
    assert r.t_statistic == pytest.approx(2 * math.sqrt(3), abs=1e-9)
    assert r.degrees_of_freedom == 2
    assert r.p_value == pytest.approx(0.0742, abs=1e-3)
    assert not r.degenerate
    same = paired_t_test([0.9, 0.8, 0.95], [0.9, 0.8, 0.95])
    assert same.degenerate and same.mean_difference == 0.0
    shifted = paired_t_test([0.95, 0.85, 0.9], [0.9, 0.8, 0.85])
    assert shifted.degenerate and shifted.mean_difference == pytest.approx(0.05)


def test_ttest_errors():
    with pytest.raises(ValueError):
        paired_t_test([1], [2])
    with pytest.raises(ValueError):
        paired_t_test([1, 2], [1, 2, 3])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=2, max_size=10))
def test_ttest_antisymmetric_and_scipy(pairs):
    a, b = map(np.array, zip(*pairs))
    ab, ba = paired_t_test(a, b), paired_t_test(b, a)
    if ab.degenerate:
        assert ba.degenerate
        return
    assert ab.t_statistic == -ba.t_statistic
    assert ab.p_value == ba.p_value
    ref = scipy.stats.ttest_rel(a, b)
    assert ab.t_statistic == pytest.approx(ref.statistic, rel=1e-9)
    assert ab.p_value == pytest.approx(ref.pvalue, abs=1e-9)


def _ninety_percent(n=400):
    t = np.repeat([1, 2, 3], [134, 133, 133])[:n]
    p = t.copy()
    wrong = np.random.default_rng(0).permutation(n)[: n // 10]
    p[wrong] = p[wrong] % 3 + 1
    return t, p


def test_bootstrap_degenerate():
    t = np.array([1, 2, 3, 1, 2])
    ci = bootstrap_ci(t, t, resamples=200)
    assert (ci.lower, ci.point_estimate, ci.upper) == (1.0, 1.0, 1.0)
    ci = bootstrap_ci(t, t % 3 + 1, resamples=200)
    assert (ci.lower, ci.upper) == (0.0, 0.0)


def test_bootstrap_ninety_percent():
    t, p = _ninety_percent()
    ci = bootstrap_ci(t, p, resamples=1000, seed=1)
    assert ci.point_estimate == 0.9
    assert ci.lower <= 0.9 <= ci.upper
    assert 0.86 <= ci.lower <= 0.88 and 0.92 <= ci.upper <= 0.94


def test_bootstrap_deterministic_and_stable():
    t, p = _ninety_percent()
    assert bootstrap_ci(t, p, seed=4) == bootstrap_ci(t, p, seed=4)
    small, big = bootstrap_ci(t, p, resamples=500, seed=2), bootstrap_ci(t, p, resamples=2000, seed=2)
    assert abs(small.lower - big.lower) < 0.01 and abs(small.upper - big.upper) < 0.01


def test_bootstrap_other_metrics():
    t, p = _ninety_percent()
    for name in ("macro_f1", "precision_1", "recall_2", "f1_3"):
        ci = bootstrap_ci(t, p, name, resamples=200)
        assert 0 <= ci.lower <= ci.upper <= 1
        assert ci.point_estimate == metric_selector(name)(t, p)
    with pytest.raises(ValueError):
        metric_selector("precision_4")


def test_bootstrap_errors():
    with pytest.raises(ValueError):
        bootstrap_ci([], [])
    with pytest.raises(ValueError):
        bootstrap_ci([1], [1], resamples=50)


def test_importance_constant_feature_is_zero():
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 1, (50, 5))
    x[:, 2] = 0.37
    y = rng.integers(1, 4, 50)
    assert permutation_importance(init_model((8,), seed=0), x, y, 2, repeats=5) == 0.0


def test_importance_ignored_feature():
    rng = np.random.default_rng(1)
    hidden = DenseLayer(rng.normal(size=(6, 5)), np.zeros(6))
    hidden.weights[:, 3] = 0.0
    model = Model(np.full(4, 0.25), [hidden, DenseLayer(rng.normal(size=(3, 6)), np.zeros(3))])
    x = rng.uniform(0, 1, (100, 5))
    y = rng.integers(1, 4, 100)
    assert abs(permutation_importance(model, x, y, 3, repeats=10)) <= 0.02


def test_importance_deterministic_and_errors():
    rng = np.random.default_rng(2)
    x, y = rng.uniform(0, 1, (30, 5)), rng.integers(1, 4, 30)
    m = init_model((4,), seed=1)
    assert permutation_importance(m, x, y, 0, seed=3) == permutation_importance(m, x, y, 0, seed=3)
    with pytest.raises(ValueError):
        permutation_importance(m, x[:0], y[:0], 0)
    with pytest.raises(ValueError):
        permutation_importance(m, x, y, 5)
