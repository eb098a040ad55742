"""Binary PPM output for NDVI heatmaps and classification maps."""

from __future__ import annotations

from pathlib import Path

import numpy as np

# three-stop ramp: blue at -1, red at the rust/other boundary, green at 1
RAMP_STOPS = (-1.0, 0.2, 1.0)
RAMP_COLORS = ((0, 0, 255), (255, 0, 0), (0, 255, 0))

PALETTE = {
    1: (0, 170, 0),  # healthy
    2: (230, 120, 0),  # rust
    3: (128, 128, 128),  # other
}


def ndvi_heatmap(ndvi_map) -> np.ndarray:
    """(h, w) NDVI raster to (h, w, 3) uint8 RGB; values are clipped to [-1, 1]."""
    v = np.clip(np.asarray(ndvi_map, dtype=np.float64), -1.0, 1.0)
    channels = [np.interp(v, RAMP_STOPS, [c[k] for c in RAMP_COLORS]) for k in range(3)]
    return np.rint(np.stack(channels, axis=-1)).astype(np.uint8)


def label_image(labels) -> np.ndarray:
    labels = np.asarray(labels)
    rgb = np.zeros(labels.shape + (3,), dtype=np.uint8)
    for lab, color in PALETTE.items():
        rgb[labels == lab] = color
    if not np.all(np.isin(labels, list(PALETTE))):
        raise ValueError("label raster contains values outside 1..3")
    return rgb


def write_ppm(path, rgb: np.ndarray) -> None:
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise ValueError("expected (h, w, 3) uint8 image")
    h, w, _ = rgb.shape
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode("ascii") + rgb.tobytes())


def read_ppm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if len(parts) < 4 or parts[0] != b"P6" or parts[3] != b"255":
        raise ValueError(f"{path}: not an 8-bit binary PPM")
    w, h = int(parts[1]), int(parts[2])
    header_len = len(b" ".join(parts[:4])) + 1
    pixels = raw[header_len:]
    if len(pixels) != w * h * 3:
        raise ValueError(f"{path}: expected {w * h * 3} pixel bytes, found {len(pixels)}")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(h, w, 3)
