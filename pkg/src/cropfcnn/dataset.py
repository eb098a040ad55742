"""Manifest files and bulk featurization of scene collections."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from .hypercube import (
    DEFAULT_DROP_BACK,
    DEFAULT_DROP_FRONT,
    SceneSpec,
    SpectralCube,
    generate_scene,
    load_cube,
    trim_bands,
)
from .indices import compute_index_maps, raw_indices
from .train import LabeledSet

MANIFEST_HEADER = ["path", "label"]


class ManifestError(ValueError):
    pass


def read_manifest(path) -> List[Tuple[Path, int]]:
    """Rows of ``(cube path, label)``; relative paths resolve against the manifest's folder."""
    path = Path(path)
    base = path.parent
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != MANIFEST_HEADER:
        raise ManifestError(f"{path}: line 1: expected header 'path,label'")
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise ManifestError(f"{path}: line {lineno}: expected 2 fields")
        try:
            label = int(row[1])
        except ValueError:
            raise ManifestError(f"{path}: line {lineno}: bad label {row[1]!r}") from None
        if label not in (1, 2, 3):
            raise ManifestError(f"{path}: line {lineno}: label must be 1, 2 or 3")
        out.append((base / row[0], label))
    return out


def write_manifest(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        writer.writerows(rows)


def scene_seed(seed: int, label: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, label, index]).generate_state(1)[0])


def synthetic_scenes(count: int, seed: int, image_size: int = 16, noise: float = 0.02):
    """Yield ``(cube, label)`` for ``count`` scenes per class, class by class."""
    for label in (1, 2, 3):
        for i in range(count):
            yield generate_scene(SceneSpec(label, image_size, noise, scene_seed(seed, label, i)))


def cube_indices(
    cube: SpectralCube,
    drop_front: int = DEFAULT_DROP_FRONT,
    drop_back: int = DEFAULT_DROP_BACK,
    windows=None,
) -> np.ndarray:
    if drop_front or drop_back:
        cube = trim_bands(cube, drop_front, drop_back)
    return raw_indices(compute_index_maps(cube, windows))


def featurize_cubes(pairs, drop_front=DEFAULT_DROP_FRONT, drop_back=DEFAULT_DROP_BACK, windows=None) -> LabeledSet:
    raw, labels = [], []
    for cube, label in pairs:
        raw.append(cube_indices(cube, drop_front, drop_back, windows))
        labels.append(label)
    return LabeledSet(np.array(raw).reshape(-1, 4), np.array(labels, dtype=np.int64))


def featurize_manifest(rows, drop_front=DEFAULT_DROP_FRONT, drop_back=DEFAULT_DROP_BACK, windows=None) -> LabeledSet:
    return featurize_cubes(((load_cube(p), lab) for p, lab in rows), drop_front, drop_back, windows)


def synthetic_benchmark(count: int = 200, seed: int = 7, image_size: int = 16, noise: float = 0.02) -> LabeledSet:
    """In-memory equivalent of ``generate`` followed by featurization."""
    return featurize_cubes(synthetic_scenes(count, seed, image_size, noise))
