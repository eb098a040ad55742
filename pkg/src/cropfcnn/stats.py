"""Evaluation statistics: confusion matrices, per-class metrics, paired t-test,
percentile bootstrap intervals and permutation feature importance."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, Sequence, Union

import numpy as np

from .net import N_CLASSES, Model, forward_batch


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # rows: true class, columns: predicted class

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def at(self, true_label: int, pred_label: int) -> int:
        return int(self.counts[true_label - 1, pred_label - 1])


def confusion(true_labels, predicted_labels, n_classes: int = N_CLASSES) -> ConfusionMatrix:
    t = np.asarray(true_labels, dtype=np.int64).ravel()
    p = np.asarray(predicted_labels, dtype=np.int64).ravel()
    if t.size == 0:
        raise ValueError("no labels to tally")
    if t.size != p.size:
        raise ValueError(f"label sequences differ in length ({t.size} vs {p.size})")
    for name, arr in (("true", t), ("predicted", p)):
        if arr.min() < 1 or arr.max() > n_classes:
            raise ValueError(f"{name} labels must lie in 1..{n_classes}")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (t - 1, p - 1), 1)
    return ConfusionMatrix(counts)


@dataclass(frozen=True)
class ClassMetrics:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    accuracy: float

    @property
    def macro_f1(self) -> float:
        return float(np.mean(self.f1))


def _ratio(num, den):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    return np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)


def metrics(cm: Union[ConfusionMatrix, np.ndarray]) -> ClassMetrics:
    """Per-class precision/recall/F1 and accuracy; undefined ratios are 0."""
    counts = np.asarray(getattr(cm, "counts", cm))
    if counts.size == 0 or counts.sum() == 0:
        raise ValueError("confusion matrix is empty")
    diag = np.diag(counts)
    precision = _ratio(diag, counts.sum(axis=0))
    recall = _ratio(diag, counts.sum(axis=1))
    f1 = _ratio(2 * precision * recall, precision + recall)
    return ClassMetrics(precision, recall, f1, float(diag.sum() / counts.sum()))


def betainc_regularized(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b) by Lentz's continued fraction."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    if x > (a + 1.0) / (a + b + 2.0):
        return 1.0 - betainc_regularized(b, a, 1.0 - x)
    log_front = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    tiny = 1e-300
    c, d = 1.0, 1.0 - (a + b) * x / (a + 1.0)
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, 500):
        m2 = 2 * m
        num = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2))
        d = 1.0 + num * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + num / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        num = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0))
        d = 1.0 + num * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + num / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            break
    return math.exp(log_front) * h / a


def student_t_sf2(t: float, df: float) -> float:
    """Two-tailed tail probability P(|T| >= |t|) for Student's t."""
    t2 = t * t
    # both arguments are formed directly so neither loses digits to 1 - x
    if t2 < df:
        return 1.0 - betainc_regularized(0.5, df / 2.0, t2 / (df + t2))
    return betainc_regularized(df / 2.0, 0.5, df / (df + t2))


ZERO_SPREAD = 1e-12


@dataclass(frozen=True)
class TTestResult:
    t_statistic: float
    degrees_of_freedom: int
    p_value: float
    mean_difference: float
    degenerate: bool


def paired_t_test(scores_a: Sequence[float], scores_b: Sequence[float]) -> TTestResult:
    """Paired t-test on ``a - b``; zero-variance differences give NaN t and p.

    Differences whose spread is pure rounding noise (a == b + c computed in
    floating point) also count as zero variance.
    """
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("score sequences must be 1-D and equal length")
    n = a.size
    if n < 2:
        raise ValueError("paired t-test needs at least 2 pairs")
    d = a - b
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd <= ZERO_SPREAD * max(1.0, float(np.abs(d).max())):
        return TTestResult(math.nan, n - 1, math.nan, mean, True)
    t = mean / (sd / math.sqrt(n))
    return TTestResult(t, n - 1, min(1.0, student_t_sf2(t, n - 1)), mean, False)


MetricFn = Callable[[np.ndarray, np.ndarray], float]


def accuracy_metric(t: np.ndarray, p: np.ndarray) -> float:
    return float(np.mean(t == p))


def _per_class(kind: str, label: int) -> MetricFn:
    def fn(t, p):
        m = metrics(confusion(t, p))
        return float(getattr(m, kind)[label - 1])

    fn.__name__ = f"{kind}_{label}"
    return fn


def metric_selector(name: str) -> MetricFn:
    """``accuracy``, ``macro_f1`` or ``precision_<c>`` / ``recall_<c>`` / ``f1_<c>``."""
    if name == "accuracy":
        return accuracy_metric
    if name == "macro_f1":
        return lambda t, p: metrics(confusion(t, p)).macro_f1
    kind, _, label = name.rpartition("_")
    if kind in ("precision", "recall", "f1") and label.isdigit() and 1 <= int(label) <= N_CLASSES:
        return _per_class(kind, int(label))
    raise ValueError(f"unknown metric {name!r}")


@dataclass(frozen=True)
class BootstrapCI:
    point_estimate: float
    lower: float
    upper: float
    confidence: float
    resamples: int


def bootstrap_ci(
    true_labels,
    predicted_labels,
    metric: Union[str, MetricFn] = "accuracy",
    resamples: int = 1000,
    seed: int = 0,
    confidence: float = 0.95,
) -> BootstrapCI:
    """Percentile bootstrap over (true, predicted) pairs."""
    t = np.asarray(true_labels)
    p = np.asarray(predicted_labels)
    if t.size == 0:
        raise ValueError("no predictions to resample")
    if t.size != p.size:
        raise ValueError("label sequences differ in length")
    if resamples < 100:
        raise ValueError("use at least 100 bootstrap resamples")
    fn = metric_selector(metric) if isinstance(metric, str) else metric
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, t.size, size=(resamples, t.size))
    if fn is accuracy_metric:
        stats = np.mean(t[idx] == p[idx], axis=1)
    else:
        stats = np.array([fn(t[row], p[row]) for row in idx])
    alpha = (1.0 - confidence) / 2.0
    lo, hi = np.percentile(stats, [100 * alpha, 100 * (1 - alpha)])
    return BootstrapCI(fn(t, p), float(lo), float(hi), confidence, resamples)


def permutation_importance(
    model: Model,
    features: np.ndarray,
    labels,
    feature: int,
    repeats: int = 10,
    seed: int = 0,
) -> float:
    """Accuracy drop when column ``feature`` of the ``(n, 5)`` matrix is shuffled."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if len(x) == 0:
        raise ValueError("evaluation set is empty")
    if not 0 <= feature < x.shape[1]:
        raise ValueError(f"feature index {feature} out of range")
    base = np.mean(forward_batch(model, x).out.label == y)
    rng = np.random.default_rng([seed, feature])
    scores = []
    for _ in range(repeats):
        shuffled = x.copy()
        shuffled[:, feature] = x[rng.permutation(len(x)), feature]
        scores.append(np.mean(forward_batch(model, shuffled).out.label == y))
    return float(base - np.mean(scores))


def all_importances(model: Model, features, labels, repeats: int = 10, seed: int = 0) -> List[float]:
    return [permutation_importance(model, features, labels, f, repeats, seed) for f in range(np.shape(features)[1])]
