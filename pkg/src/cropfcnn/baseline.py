"""NDVI threshold classifier and a k-nearest-neighbour baseline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .indices import DomainError

HEALTHY, RUST, OTHER = 1, 2, 3


@dataclass(frozen=True)
class ThresholdBands:
    """Healthy [healthy_low, 1], Rust [rust_low, healthy_low), Other below rust_low."""

    healthy_low: float = 0.6
    rust_low: float = 0.2

    def __post_init__(self):
        if not self.rust_low < self.healthy_low <= 1.0:
            raise ValueError("need rust_low < healthy_low <= 1")


@dataclass(frozen=True)
class KnnConfig:
    k: int = 5

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")


def classify_threshold(ndvi: float, bands: ThresholdBands = ThresholdBands()) -> int:
    if not -1.0 <= ndvi <= 1.0:
        raise DomainError(f"NDVI {ndvi} outside [-1, 1]")
    if ndvi >= bands.healthy_low:
        return HEALTHY
    if ndvi >= bands.rust_low:
        return RUST
    return OTHER


def classify_map(ndvi_map, bands: ThresholdBands = ThresholdBands()) -> np.ndarray:
    ndvi_map = np.asarray(ndvi_map, dtype=np.float64)
    if ndvi_map.size == 0:
        raise ValueError("empty NDVI raster")
    if not np.all((ndvi_map >= -1.0) & (ndvi_map <= 1.0)):
        raise DomainError("NDVI raster has values outside [-1, 1]")
    labels = np.full(ndvi_map.shape, OTHER, dtype=np.int64)
    labels[ndvi_map >= bands.rust_low] = RUST
    labels[ndvi_map >= bands.healthy_low] = HEALTHY
    return labels


def knn_predict(train_x, train_y, x, config: KnnConfig = KnnConfig()) -> int:
    """Majority vote among the k nearest training rows (Euclidean).

    Distance ties keep training-set order (stable sort); vote ties go to
    the lowest class label.
    """
    train_x = np.asarray(train_x, dtype=np.float64)
    train_y = np.asarray(train_y)
    if len(train_x) == 0:
        raise ValueError("KNN needs a non-empty training set")
    if config.k > len(train_x):
        raise ValueError(f"k={config.k} exceeds training set size {len(train_x)}")
    dist = np.sqrt(np.sum((train_x - np.asarray(x, dtype=np.float64)) ** 2, axis=1))
    nearest = np.argsort(dist, kind="stable")[: config.k]
    labels, counts = np.unique(train_y[nearest], return_counts=True)
    return int(labels[np.argmax(counts)])


def knn_predict_batch(train_x, train_y, xs, config: KnnConfig = KnnConfig()) -> np.ndarray:
    return np.array([knn_predict(train_x, train_y, x, config) for x in np.asarray(xs)], dtype=np.int64)
