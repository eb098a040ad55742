"""Vegetation indices, the learnable hybrid index and per-image feature vectors.

All index functions accept scalars or numpy arrays of reflectance and
return the same shape (a Python float for scalar input). Degenerate
denominators yield 0, the "no signal" value.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .hypercube import DEFAULT_WINDOWS, BandWindow, SpectralCube, extract_band_mean

FEATURE_NAMES = ("ndvi", "gndvi", "evi", "msavi", "hvi")
DEFAULT_FUSION = (0.25, 0.25, 0.25, 0.25)
EVI_DEN_EPS = 1e-9


class DomainError(ValueError):
    """Reflectance input is negative or non-finite."""


def _check(name, values):
    arr = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name}: non-finite reflectance")
    if np.any(arr < 0):
        raise DomainError(f"{name}: negative reflectance")
    return arr


def _out(arr):
    return float(arr) if arr.ndim == 0 else arr


def _normalized_difference(a, b):
    num = a - b
    den = a + b
    safe = np.where(den == 0, 1.0, den)
    return np.where(den == 0, 0.0, num / safe)


def ndvi(nir, red):
    """(nir - red) / (nir + red); 0 where both bands are zero."""
    return _out(_normalized_difference(_check("nir", nir), _check("red", red)))


def gndvi(nir, green):
    return _out(_normalized_difference(_check("nir", nir), _check("green", green)))


def evi(nir, red, blue):
    """Enhanced Vegetation Index with gain 2.5, C1=6, C2=7.5, L=1.

    Returns 0 where ``|nir + 6 red - 7.5 blue + 1| < 1e-9``.
    """
    nir, red, blue = _check("nir", nir), _check("red", red), _check("blue", blue)
    den = nir + 6.0 * red - 7.5 * blue + 1.0
    bad = np.abs(den) < EVI_DEN_EPS
    safe = np.where(bad, 1.0, den)
    return _out(np.where(bad, 0.0, 2.5 * (nir - red) / safe))


def msavi(nir, red):
    """Closed-form MSAVI2: (2 nir + 1 - sqrt((2 nir + 1)^2 - 8 (nir - red))) / 2."""
    nir, red = _check("nir", nir), _check("red", red)
    lead = 2.0 * nir + 1.0
    disc = np.maximum(lead * lead - 8.0 * (nir - red), 0.0)
    return _out((lead - np.sqrt(disc)) / 2.0)


def hvi(indices: Sequence[float], weights: Sequence[float]) -> float:
    """Hybrid index: w1*NDVI + w2*GNDVI + w3*EVI + w4*MSAVI."""
    ind = np.asarray(indices, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if ind.shape[-1] != 4 or w.shape != (4,):
        raise ValueError("hvi needs 4 indices and 4 weights")
    if not (np.all(np.isfinite(ind)) and np.all(np.isfinite(w))):
        raise ValueError("hvi inputs must be finite")
    out = ind[..., 0] * w[0] + ind[..., 1] * w[1] + ind[..., 2] * w[2] + ind[..., 3] * w[3]
    return _out(np.asarray(out))


@dataclass(frozen=True)
class IndexMaps:
    ndvi: np.ndarray
    gndvi: np.ndarray
    evi: np.ndarray
    msavi: np.ndarray

    def stack(self) -> np.ndarray:
        return np.stack([self.ndvi, self.gndvi, self.evi, self.msavi])


def compute_index_maps(cube: SpectralCube, windows: Optional[Dict[str, BandWindow]] = None) -> IndexMaps:
    windows = DEFAULT_WINDOWS if windows is None else windows
    means = {name: extract_band_mean(cube, windows[name]) for name in ("Blue", "Green", "Red", "RedEdge", "NIR")}
    nir, red, green, blue = means["NIR"], means["Red"], means["Green"], means["Blue"]
    return IndexMaps(
        ndvi=ndvi(nir, red),
        gndvi=gndvi(nir, green),
        evi=evi(nir, red, blue),
        msavi=msavi(nir, red),
    )


def _fixed_order_mean(raster: np.ndarray) -> float:
    flat = np.asarray(raster, dtype=np.float64).ravel()
    total = 0.0
    for v in flat.tolist():
        total += v
    return total / flat.size


def raw_indices(maps: IndexMaps) -> np.ndarray:
    """Spatial means of the four index maps, left-to-right summation."""
    if np.asarray(maps.ndvi).size == 0:
        raise ValueError("cannot featurize an empty raster")
    return np.array([_fixed_order_mean(m) for m in (maps.ndvi, maps.gndvi, maps.evi, maps.msavi)])


def featurize(maps: IndexMaps, weights: Sequence[float] = DEFAULT_FUSION) -> np.ndarray:
    """Five-element feature vector ``[ndvi, gndvi, evi, msavi, hvi]``.

    The hybrid entry is computed from the four spatial means, which by
    linearity equals the mean of the per-pixel hybrid index.
    """
    means = raw_indices(maps)
    return np.append(means, hvi(means, weights))


def with_hvi(raw: np.ndarray, weights: Sequence[float]) -> np.ndarray:
    """Append the hybrid column to an ``(n, 4)`` matrix of index means."""
    raw = np.asarray(raw, dtype=np.float64)
    return np.concatenate([raw, (raw @ np.asarray(weights, dtype=np.float64))[..., None]], axis=-1)


def fit_standardizer(features: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Column means and standard deviations (std floored at 1e-12)."""
    features = np.asarray(features, dtype=np.float64)
    return features.mean(axis=0), np.maximum(features.std(axis=0), 1e-12)


def standardize(features: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    """Optional dataset-level z-scoring; not applied anywhere by default."""
    return (np.asarray(features, dtype=np.float64) - mean) / std


def format_feature_row(features: Sequence[float], label: int) -> str:
    return ",".join(repr(float(v)) for v in features) + f",{int(label)}"
