"""Cross-entropy loss, backpropagation through the fusion weights, Adam, and data splits."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .net import N_CLASSES, Model, forward_batch

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 128
    learning_rate: float = 1e-3
    epochs: int = 15
    dropout_p: float = 0.5
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    rng_seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must be in [0, 1)")


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.70
    val_fraction: float = 0.15
    test_fraction: float = 0.15
    rng_seed: int = 0

    def __post_init__(self):
        fr = (self.train_fraction, self.val_fraction, self.test_fraction)
        if min(fr) <= 0:
            raise ValueError("split fractions must be positive")
        if abs(sum(fr) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {sum(fr)}")


@dataclass
class LabeledSet:
    """Raw per-image index means ``(n, 4)`` with class labels in 1..3."""

    raw: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.raw = np.asarray(self.raw, dtype=np.float64).reshape(-1, 4)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if len(self.raw) != len(self.labels):
            raise ValueError("raw features and labels differ in length")
        if self.labels.size and (self.labels.min() < 1 or self.labels.max() > N_CLASSES):
            raise ValueError(f"labels must lie in 1..{N_CLASSES}")

    def __len__(self):
        return len(self.labels)

    def subset(self, idx) -> "LabeledSet":
        return LabeledSet(self.raw[idx], self.labels[idx])


def one_hot(labels, n_classes: int = N_CLASSES) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros(labels.shape + (n_classes,))
    np.put_along_axis(out, (labels - 1)[..., None], 1.0, axis=-1)
    return out


def cross_entropy(y, y_hat) -> float:
    """Mean over rows of -sum(y * log(max(y_hat, 1e-12)))."""
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(getattr(y_hat, "probs", y_hat), dtype=np.float64)
    if y.shape != y_hat.shape:
        raise ValueError(f"label shape {y.shape} does not match prediction shape {y_hat.shape}")
    per_row = -np.sum(y * np.log(np.maximum(y_hat, PROB_FLOOR)), axis=-1)
    return float(np.mean(per_row))


def loss_on(model: Model, data: LabeledSet, training: bool = False, seed=None) -> float:
    out = forward_batch(model, model.features(data.raw), training, seed).out
    return cross_entropy(one_hot(data.labels), out.probs)


def backward(model: Model, raw: np.ndarray, labels, seed=None) -> Tuple[List[np.ndarray], float]:
    """Gradient of mean batch cross-entropy for every entry of ``model.params()``.

    Runs a training-mode forward pass with dropout masks drawn from ``seed``.
    Returns ``(grads, loss)``, grads aligned with ``model.params()``.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2 or raw.shape[1] != 4 or len(raw) == 0:
        raise ValueError(f"expected non-empty (n, 4) raw indices, got shape {raw.shape}")
    y = one_hot(labels)
    if len(y) != len(raw):
        raise ValueError("batch features and labels differ in length")
    n = len(raw)
    cache = forward_batch(model, model.features(raw), training=True, seed=seed)
    probs = cache.out.probs
    loss = cross_entropy(y, probs)

    # d loss / d logits; rows whose true-class probability sits below the clamp are flat
    dz = (probs - y) / n
    dz[np.sum(y * probs, axis=-1) < PROB_FLOOR] = 0.0

    layer_grads = []
    for i in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[i]
        a_prev = cache.acts[i - 1] if i > 0 else cache.inputs
        layer_grads.append((dz.T @ a_prev, dz.sum(axis=0)))
        da = dz @ layer.weights
        if i > 0:
            if cache.masks[i - 1] is not None:
                da = da * cache.masks[i - 1]
            dz = da * (cache.pre[i - 1] > 0)
        else:
            dx = da
    layer_grads.reverse()

    # HVI column = raw @ fusion, so d loss / d w_k = sum_i dx[i, 4] * raw[i, k]
    grads = [raw.T @ dx[:, 4]]
    for gw, gb in layer_grads:
        grads += [gw, gb]
    return grads, loss


@dataclass
class AdamState:
    m: List[np.ndarray]
    v: List[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], 0)


def adam_step(params: List[np.ndarray], grads: List[np.ndarray], state: AdamState, config: TrainConfig) -> None:
    """Bias-corrected Adam update, applied to ``params`` and ``state`` in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state differ in length")
    for p, g, m in zip(params, grads, state.m):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}, state {m.shape}")
    b1, b2 = config.adam_beta1, config.adam_beta2
    state.t += 1
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= config.learning_rate * (m / c1) / (np.sqrt(v / c2) + config.adam_eps)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_accuracy: float


HISTORY_HEADER = "epoch,train_loss,val_loss,val_accuracy"


def format_history(history: Sequence[EpochRecord]) -> str:
    rows = [HISTORY_HEADER]
    rows += [f"{r.epoch},{r.train_loss!r},{r.val_loss!r},{r.val_accuracy!r}" for r in history]
    return "\n".join(rows) + "\n"


def train(
    model: Model,
    train_set: LabeledSet,
    val_set: Optional[LabeledSet],
    config: TrainConfig,
) -> Tuple[Model, List[EpochRecord]]:
    """Mini-batch Adam training; returns a trained copy and per-epoch history.

    Each epoch reshuffles with ``default_rng([seed, epoch])``; batch ``b``
    draws its dropout masks from ``[seed, epoch, b]``. Losses in the
    history are inference-mode losses over the whole set after the epoch.
    """
    if len(train_set) == 0:
        raise ValueError("training set is empty")
    model = model.copy()
    model.dropout = config.dropout_p
    params = model.params()
    state = AdamState.zeros_like(params)
    n = len(train_set)
    history = []
    for epoch in range(1, config.epochs + 1):
        order = np.random.default_rng([config.rng_seed, epoch]).permutation(n)
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start : start + config.batch_size]
            grads, _ = backward(model, train_set.raw[idx], train_set.labels[idx], seed=[config.rng_seed, epoch, b])
            adam_step(params, grads, state, config)
        if not all(np.all(np.isfinite(p)) for p in params):
            raise FloatingPointError(f"non-finite parameters after epoch {epoch}")
        train_loss = loss_on(model, train_set)
        if val_set is not None and len(val_set):
            val_loss = loss_on(model, val_set)
            val_acc = float(np.mean(forward_batch(model, model.features(val_set.raw)).out.label == val_set.labels))
        else:
            val_loss = val_acc = math.nan
        history.append(EpochRecord(epoch, train_loss, val_loss, val_acc))
        log.info("epoch %d train_loss %.4f val_loss %.4f val_acc %.4f", epoch, train_loss, val_loss, val_acc)
    return model, history


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _class_members(labels: np.ndarray):
    return {c: np.flatnonzero(labels == c) for c in np.unique(labels)}


def _apportion(target: int, fraction: float, counts: dict) -> dict:
    """Largest-remainder allocation of ``target`` across classes."""
    quotas = {c: fraction * n for c, n in counts.items()}
    alloc = {c: int(math.floor(q)) for c, q in quotas.items()}
    order = sorted(counts, key=lambda c: (-(quotas[c] - alloc[c]), c))
    left = target - sum(alloc.values())
    i = 0
    while left > 0:
        c = order[i % len(order)]
        if alloc[c] < counts[c]:
            alloc[c] += 1
            left -= 1
        i += 1
    return alloc


def split(labels, spec: SplitSpec) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stratified train/val/test index sets.

    Set sizes are ``round(fraction * n)`` for validation and test with the
    remainder going to training; per-class shares use largest remainders.
    """
    labels = np.asarray(labels)
    n = labels.size
    if n < 3:
        raise ValueError("need at least 3 examples to split")
    members = _class_members(labels)
    for c, idx in members.items():
        if idx.size < 3:
            raise ValueError(f"class {c} has {idx.size} examples; a 3-way split needs at least 3")
    counts = {c: idx.size for c, idx in members.items()}
    n_val = _round_half_up(spec.val_fraction * n)
    n_test = _round_half_up(spec.test_fraction * n)
    val_alloc = _apportion(n_val, spec.val_fraction, counts)
    rest = {c: counts[c] - val_alloc[c] for c in counts}
    test_alloc = _apportion(n_test, spec.test_fraction, {c: counts[c] for c in counts})
    for c in counts:
        if test_alloc[c] > rest[c]:
            raise ValueError(f"class {c} too small for the requested split")
    rng = np.random.default_rng(spec.rng_seed)
    tr, va, te = [], [], []
    for c in sorted(members):
        idx = rng.permutation(members[c])
        va.append(idx[: val_alloc[c]])
        te.append(idx[val_alloc[c] : val_alloc[c] + test_alloc[c]])
        tr.append(idx[val_alloc[c] + test_alloc[c] :])
    return tuple(np.sort(np.concatenate(parts)).astype(np.int64) for parts in (tr, va, te))


def k_fold(labels, k: int = 5, seed: int = 0) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Stratified k-fold: each class is shuffled and dealt round-robin into folds."""
    labels = np.asarray(labels)
    if k < 2:
        raise ValueError("k must be >= 2")
    members = _class_members(labels)
    for c, idx in members.items():
        if idx.size < k:
            raise ValueError(f"class {c} has {idx.size} examples, fewer than k={k}")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(labels.size, dtype=np.int64)
    pos = 0
    for c in sorted(members):
        for i in rng.permutation(members[c]):
            fold_of[i] = pos % k
            pos += 1
    all_idx = np.arange(labels.size)
    return [(all_idx[fold_of != f], all_idx[fold_of == f]) for f in range(k)]


@dataclass
class CrossValResult:
    accuracies: List[float] = field(default_factory=list)

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def std(self) -> float:
        return float(np.std(self.accuracies))


def cross_validate(model: Model, data: LabeledSet, config: TrainConfig, k: int = 5, seed: int = 0) -> CrossValResult:
    """Retrain ``model`` from its initial weights on each fold; score on the held-out fold."""
    result = CrossValResult()
    for tr, va in k_fold(data.labels, k, seed):
        trained, _ = train(model, data.subset(tr), None, config)
        held = data.subset(va)
        acc = np.mean(forward_batch(trained, trained.features(held.raw)).out.label == held.labels)
        result.accuracies.append(float(acc))
    return result
