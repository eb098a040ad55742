"""Hyperspectral cube data model, HSC file I/O, band windows and a synthetic scene generator."""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from enum import IntEnum
from pathlib import Path
from typing import Dict, Tuple, Union

import numpy as np

PathLike = Union[str, Path]

HSC_MAGIC = b"HSC1"
_HEADER = struct.Struct("<4sIIIff")

# S185 acquisition: 125 bands from 450 nm at 4 nm spacing
SENSOR_BANDS = 125
SENSOR_START_NM = 450.0
SENSOR_STEP_NM = 4.0
DEFAULT_DROP_FRONT = 10
DEFAULT_DROP_BACK = 14


class CubeFormatError(ValueError):
    """Raised when an HSC file or cube array violates the format or invariants."""


class Health(IntEnum):
    HEALTHY = 1
    RUST = 2
    OTHER = 3


@dataclass(frozen=True)
class SpectralCube:
    """Reflectance raster stored band-major as ``data[band, row, col]``.

    ``width`` is the column count and ``height`` the row count. Values are
    held as float64 in memory; files store float32.
    """

    data: np.ndarray
    wavelength_start: float
    wavelength_step: float

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3 or 0 in data.shape:
            raise CubeFormatError(f"data: expected non-empty (bands, height, width) array, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise CubeFormatError("data: non-finite reflectance")
        if data.min() < 0.0 or data.max() > 1.0:
            raise CubeFormatError("data: reflectance outside [0, 1]")
        if not (np.isfinite(self.wavelength_start) and np.isfinite(self.wavelength_step)):
            raise CubeFormatError("wavelength: non-finite start or step")
        if self.wavelength_step <= 0:
            raise CubeFormatError(f"wavelength_step: must be positive, got {self.wavelength_step}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def wavelengths(self) -> np.ndarray:
        return self.wavelength_start + np.arange(self.bands) * self.wavelength_step

    def value(self, band: int, row: int, col: int) -> float:
        return float(self.data[band, row, col])

    def __eq__(self, other):
        if not isinstance(other, SpectralCube):
            return NotImplemented
        return (
            self.wavelength_start == other.wavelength_start
            and self.wavelength_step == other.wavelength_step
            and self.data.shape == other.data.shape
            and np.array_equal(self.data, other.data)
        )

    __hash__ = None


@dataclass(frozen=True)
class BandWindow:
    """Half-open wavelength interval ``[low, high)`` in nm."""

    name: str
    low: float
    high: float

    def __post_init__(self):
        if not self.low < self.high:
            raise ValueError(f"BandWindow {self.name}: low ({self.low}) must be < high ({self.high})")


DEFAULT_WINDOWS: Dict[str, BandWindow] = {
    w.name: w
    for w in (
        BandWindow("Blue", 450.0, 495.0),
        BandWindow("Green", 495.0, 570.0),
        BandWindow("Red", 620.0, 690.0),
        BandWindow("RedEdge", 700.0, 740.0),
        BandWindow("NIR", 760.0, 900.0),
    )
}


def check_windows(windows: Dict[str, BandWindow]) -> None:
    """Raise ValueError if any two windows overlap."""
    ordered = sorted(windows.values(), key=lambda w: w.low)
    for a, b in zip(ordered, ordered[1:]):
        if b.low < a.high:
            raise ValueError(f"band windows {a.name} and {b.name} overlap")


@dataclass(frozen=True)
class SceneSpec:
    class_label: int
    image_size: int = 16
    noise_sigma: float = 0.02
    rng_seed: int = 0

    def __post_init__(self):
        if self.class_label not in (1, 2, 3):
            raise ValueError(f"class_label must be 1, 2 or 3, got {self.class_label}")
        if self.image_size < 1:
            raise ValueError("image_size must be >= 1")
        if not self.noise_sigma >= 0:
            raise ValueError("noise_sigma must be >= 0")


def write_cube(cube: SpectralCube, path: PathLike) -> None:
    header = _HEADER.pack(
        HSC_MAGIC, cube.width, cube.height, cube.bands, cube.wavelength_start, cube.wavelength_step
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(cube.data.astype("<f4").tobytes(order="C"))


def load_cube(path: PathLike) -> SpectralCube:
    """Read an HSC1 file.

    Raises:
        CubeFormatError: bad magic, truncated header, size mismatch, or
            reflectance that is non-finite or outside [0, 1].
    """
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise CubeFormatError(f"header: file has {len(raw)} bytes, need {_HEADER.size}")
    magic, width, height, bands, start, step = _HEADER.unpack_from(raw)
    if magic != HSC_MAGIC:
        raise CubeFormatError(f"magic: expected {HSC_MAGIC!r}, got {magic!r}")
    if 0 in (width, height, bands):
        raise CubeFormatError(f"dimensions: zero extent (width={width}, height={height}, bands={bands})")
    expected = width * height * bands * 4
    payload = len(raw) - _HEADER.size
    if payload != expected:
        raise CubeFormatError(
            f"data: dimension mismatch, header implies {expected} bytes of reflectance, found {payload}"
        )
    values = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).astype(np.float64)
    return SpectralCube(values.reshape(bands, height, width), float(start), float(step))


def trim_bands(cube: SpectralCube, drop_front: int, drop_back: int) -> SpectralCube:
    if drop_front < 0 or drop_back < 0:
        raise ValueError("drop counts must be non-negative")
    if drop_front + drop_back >= cube.bands:
        raise ValueError(
            f"dropping {drop_front}+{drop_back} bands leaves nothing of a {cube.bands}-band cube"
        )
    return replace(
        cube,
        data=cube.data[drop_front : cube.bands - drop_back],
        wavelength_start=cube.wavelength_start + drop_front * cube.wavelength_step,
    )


def window_bands(cube: SpectralCube, window: BandWindow) -> np.ndarray:
    """Indices of bands whose centre wavelength lies in ``window``."""
    wl = cube.wavelengths
    idx = np.flatnonzero((wl >= window.low) & (wl < window.high))
    if idx.size == 0:
        raise ValueError(
            f"band window {window.name} [{window.low}, {window.high}) nm contains no band centres "
            f"(cube spans {wl[0]}-{wl[-1]} nm)"
        )
    return idx


def extract_band_mean(cube: SpectralCube, window: BandWindow) -> np.ndarray:
    idx = window_bands(cube, window)
    # sequential sum over bands keeps the reduction order fixed
    total = np.zeros(cube.data.shape[1:], dtype=np.float64)
    for i in idx:
        total += cube.data[i]
    return total / idx.size


# Per-class ranges for scene-level reflectance levels (blue, green, red, nir).
# Noiseless NDVI bounds: Healthy [0.70, 0.91], Rust [0.33, 0.55], Other [-0.17, 0.19].
_CLASS_LEVELS = {
    Health.HEALTHY: {"blue": (0.02, 0.05), "green": (0.08, 0.12), "red": (0.03, 0.07), "nir": (0.40, 0.60)},
    Health.RUST: {"blue": (0.04, 0.07), "green": (0.10, 0.14), "red": (0.10, 0.14), "nir": (0.28, 0.34)},
    Health.OTHER: {"blue": (0.08, 0.12), "green": (0.14, 0.18), "red": (0.18, 0.25), "nir": (0.18, 0.26)},
}


def class_template(levels: Dict[str, float], wavelengths: np.ndarray) -> np.ndarray:
    """Piecewise-linear reflectance spectrum, flat across each index window."""
    knots_nm = [440.0, 495.0, 520.0, 565.0, 615.0, 695.0, 755.0, 960.0]
    knots_val = [
        levels["blue"], levels["blue"], levels["green"], levels["green"],
        levels["red"], levels["red"], levels["nir"], levels["nir"],
    ]
    return np.interp(wavelengths, knots_nm, knots_val)


def generate_scene(spec: SceneSpec) -> Tuple[SpectralCube, int]:
    """Synthesize a full-sensor 125-band scene for ``spec.class_label``.

    Reflectance is rounded to float32 so the cube survives an HSC roundtrip
    unchanged.
    """
    label = Health(spec.class_label)
    rng = np.random.default_rng([spec.rng_seed, int(label)])
    levels = {band: float(rng.uniform(lo, hi)) for band, (lo, hi) in _CLASS_LEVELS[label].items()}
    wavelengths = SENSOR_START_NM + np.arange(SENSOR_BANDS) * SENSOR_STEP_NM
    spectrum = class_template(levels, wavelengths)
    n = spec.image_size
    data = np.broadcast_to(spectrum[:, None, None], (SENSOR_BANDS, n, n)).copy()
    if spec.noise_sigma > 0:
        data += rng.normal(0.0, spec.noise_sigma, size=data.shape)
        np.clip(data, 0.0, 1.0, out=data)
    data = data.astype(np.float32).astype(np.float64)
    return SpectralCube(data, SENSOR_START_NM, SENSOR_STEP_NM), int(label)
