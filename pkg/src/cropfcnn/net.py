"""Fully connected classifier: dense layers, ReLU, inverted dropout and softmax."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np

from .indices import DEFAULT_FUSION, with_hvi

N_FEATURES = 5
N_CLASSES = 3
# a 600-scene set at batch 128 for 15 epochs gets ~60 Adam steps; narrower
# stacks (64->32) under p=0.5 dropout do not converge in that budget
DEFAULT_HIDDEN = (256, 128)
DEFAULT_DROPOUT = 0.5

FCN_MAGIC = b"FCN1"


class CheckpointError(ValueError):
    pass


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out_dim, in_dim)
    biases: np.ndarray  # (out_dim,)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.weights.ndim != 2 or self.biases.shape != (self.weights.shape[0],):
            raise ValueError(
                f"layer shapes inconsistent: weights {self.weights.shape}, biases {self.biases.shape}"
            )

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class DropoutSpec:
    rate: float = DEFAULT_DROPOUT
    active: bool = False

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {self.rate}")


@dataclass
class Model:
    """Fusion weights w1..w4 followed by a dense ReLU stack ending in softmax."""

    fusion: np.ndarray
    layers: List[DenseLayer]
    dropout: float = DEFAULT_DROPOUT

    def __post_init__(self):
        self.fusion = np.asarray(self.fusion, dtype=np.float64)
        if self.fusion.shape != (4,):
            raise ValueError("fusion weights must have 4 entries")
        if not self.layers:
            raise ValueError("model needs at least one layer")
        if self.layers[0].in_dim != N_FEATURES:
            raise ValueError(f"first layer must take {N_FEATURES} inputs, got {self.layers[0].in_dim}")
        if self.layers[-1].out_dim != N_CLASSES:
            raise ValueError(f"last layer must emit {N_CLASSES} logits, got {self.layers[-1].out_dim}")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_dim != b.in_dim:
                raise ValueError(f"layer dims do not chain: {a.out_dim} -> {b.in_dim}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {self.dropout}")

    @property
    def sizes(self) -> List[int]:
        return [self.layers[0].in_dim] + [layer.out_dim for layer in self.layers]

    def params(self) -> List[np.ndarray]:
        """Live parameter arrays: fusion, then (weights, biases) per layer."""
        out = [self.fusion]
        for layer in self.layers:
            out += [layer.weights, layer.biases]
        return out

    def copy(self) -> "Model":
        return Model(
            self.fusion.copy(),
            [DenseLayer(l.weights.copy(), l.biases.copy()) for l in self.layers],
            self.dropout,
        )

    def features(self, raw: np.ndarray) -> np.ndarray:
        """Append this model's hybrid index to raw ``(..., 4)`` index means."""
        return with_hvi(raw, self.fusion)


def init_model(
    hidden: Sequence[int] = DEFAULT_HIDDEN,
    dropout: float = DEFAULT_DROPOUT,
    seed: int = 0,
    fusion: Sequence[float] = DEFAULT_FUSION,
) -> Model:
    """He-normal weights (variance 2/in_dim), zero biases."""
    rng = np.random.default_rng(seed)
    sizes = [N_FEATURES, *hidden, N_CLASSES]
    layers = [
        DenseLayer(rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_out, n_in)), np.zeros(n_out))
        for n_in, n_out in zip(sizes[:-1], sizes[1:])
    ]
    return Model(np.array(fusion, dtype=np.float64), layers, dropout)


def flatten(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise ValueError("cannot flatten an empty input")
    return x.reshape(-1)


def dense_forward(layer: DenseLayer, a_prev: np.ndarray) -> np.ndarray:
    """Z = W a + b for a vector or a row-stacked batch ``(n, in_dim)``."""
    a_prev = np.asarray(a_prev, dtype=np.float64)
    if a_prev.shape[-1] != layer.in_dim:
        raise ValueError(f"dense layer expects {layer.in_dim} inputs, got {a_prev.shape[-1]}")
    return a_prev @ layer.weights.T + layer.biases


def relu(z):
    return np.maximum(np.asarray(z, dtype=np.float64), 0.0)


def dropout_mask(shape, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted-dropout multiplier: 0 for dropped units, 1/(1-rate) for kept ones."""
    if rate == 0.0:
        return np.ones(shape)
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def dropout_apply(a, spec: DropoutSpec, seed=None) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if not spec.active or spec.rate == 0.0:
        return a.copy()
    return a * dropout_mask(a.shape, spec.rate, np.random.default_rng(seed))


@dataclass(frozen=True)
class ClassProbabilities:
    probs: np.ndarray
    logits: np.ndarray

    @property
    def label(self):
        """Argmax class in 1..C; ties go to the lowest index."""
        lab = np.argmax(self.probs, axis=-1) + 1
        return int(lab) if np.ndim(lab) == 0 else lab


def softmax(z) -> ClassProbabilities:
    z = np.asarray(z, dtype=np.float64)
    shifted = np.exp(z - z.max(axis=-1, keepdims=True))
    return ClassProbabilities(shifted / shifted.sum(axis=-1, keepdims=True), z)


@dataclass
class ForwardCache:
    """Intermediates of a batched pass, kept for backprop."""

    inputs: np.ndarray
    pre: List[np.ndarray] = field(default_factory=list)
    masks: List[Optional[np.ndarray]] = field(default_factory=list)
    acts: List[np.ndarray] = field(default_factory=list)
    out: Optional[ClassProbabilities] = None


def forward_batch(model: Model, x: np.ndarray, training: bool = False, seed=None) -> ForwardCache:
    """Evaluate ``(n, 5)`` feature rows.

    In training mode one dropout mask per hidden layer is drawn from
    ``default_rng(seed)``; a backward pass given the same seed sees the
    same masks.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != N_FEATURES:
        raise ValueError(f"expected (n, {N_FEATURES}) features, got shape {x.shape}")
    rng = np.random.default_rng(seed) if training else None
    cache = ForwardCache(inputs=x)
    a = x
    for layer in model.layers[:-1]:
        z = dense_forward(layer, a)
        a = relu(z)
        mask = None
        if training and model.dropout > 0:
            mask = dropout_mask(a.shape, model.dropout, rng)
            a = a * mask
        cache.pre.append(z)
        cache.masks.append(mask)
        cache.acts.append(a)
    z_out = dense_forward(model.layers[-1], a)
    cache.pre.append(z_out)
    cache.out = softmax(z_out)
    return cache


def forward(model: Model, x, training: bool = False, seed=None) -> ClassProbabilities:
    """Single feature vector (any shape flattening to 5 values) to class probabilities."""
    flat = flatten(x)
    if flat.size != N_FEATURES:
        raise ValueError(f"expected {N_FEATURES} features, got {flat.size}")
    out = forward_batch(model, flat[None, :], training, seed).out
    return ClassProbabilities(out.probs[0], out.logits[0])


def predict(model: Model, x) -> int:
    return forward(model, x).label


def predict_batch(model: Model, x: np.ndarray) -> np.ndarray:
    return forward_batch(model, x).out.label


def predict_raw(model: Model, raw: np.ndarray) -> np.ndarray:
    """Labels for ``(n, 4)`` raw index means, fusing with the model's own weights."""
    return predict_batch(model, model.features(raw))


def save_model(model: Model, path: Union[str, Path]) -> None:
    """FCN1 layout: magic, u32 layer count, (u32 out, u32 in) per layer, then
    little-endian f64 fusion weights and each layer's weights (row-major)
    followed by its biases."""
    parts = [FCN_MAGIC, struct.pack("<I", len(model.layers))]
    parts += [struct.pack("<II", l.out_dim, l.in_dim) for l in model.layers]
    parts.append(model.fusion.astype("<f8").tobytes())
    for layer in model.layers:
        parts.append(layer.weights.astype("<f8").tobytes(order="C"))
        parts.append(layer.biases.astype("<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_model(path: Union[str, Path], dropout: float = DEFAULT_DROPOUT) -> Model:
    raw = Path(path).read_bytes()
    if raw[:4] != FCN_MAGIC:
        raise CheckpointError(f"{path}: not an FCN1 checkpoint")
    try:
        (n_layers,) = struct.unpack_from("<I", raw, 4)
        offset = 8
        dims = []
        for _ in range(n_layers):
            dims.append(struct.unpack_from("<II", raw, offset))
            offset += 8
        expected = offset + 8 * (4 + sum(o * i + o for o, i in dims))
    except struct.error as exc:
        raise CheckpointError(f"{path}: truncated header") from exc
    if len(raw) != expected:
        raise CheckpointError(f"{path}: expected {expected} bytes, found {len(raw)}")
    values = np.frombuffer(raw, dtype="<f8", offset=offset).astype(np.float64)
    fusion, pos = values[:4].copy(), 4
    layers = []
    for out_dim, in_dim in dims:
        w = values[pos : pos + out_dim * in_dim].reshape(out_dim, in_dim).copy()
        pos += out_dim * in_dim
        b = values[pos : pos + out_dim].copy()
        pos += out_dim
        layers.append(DenseLayer(w, b))
    try:
        return Model(fusion, layers, dropout)
    except ValueError as exc:
        raise CheckpointError(f"{path}: {exc}") from exc
