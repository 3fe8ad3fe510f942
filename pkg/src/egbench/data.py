"""Dataset loading and synthesis.

Supports IDX image/label pairs (big-endian binary), CSV feature tables
with a header row, and seeded Gaussian-blob synthesis for oracle-scale
experiments. Every loaded sample is validated against the feature
bounds; out-of-bounds data is an error, never a silent clamp, because
clamping would corrupt perturbation-budget accounting downstream.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .models import FeatureVector
from .rng import make_rng

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

# Per-coordinate standard deviation of synthetic blobs; `separation` in
# make_synthetic is measured in units of this sigma.
SYNTHETIC_SIGMA = 0.05


@dataclass(frozen=True)
class Dataset:
    """Immutable collection of samples with shared dimension and bounds."""

    X: np.ndarray
    y: np.ndarray
    name: str
    lb: float = 0.0
    ub: float = 1.0

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        y = np.array(self.y, dtype=int)
        if X.ndim != 2:
            raise ValueError(f"X must be 2-D, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise ValueError(f"{X.shape[0]} samples but {y.shape[0]} labels")
        if (X < self.lb).any() or (X > self.ub).any():
            row = int(np.argmax(((X < self.lb) | (X > self.ub)).any(axis=1)))
            raise ValueError(
                f"sample {row} has values outside bounds [{self.lb}, {self.ub}]"
            )
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return int(self.X.shape[0])

    @property
    def d(self) -> int:
        return int(self.X.shape[1])

    def sample(self, i: int) -> FeatureVector:
        return FeatureVector(self.X[i], self.lb, self.ub)

    def label(self, i: int) -> int:
        return int(self.y[i])

    def take(self, n: int) -> "Dataset":
        """First ``n`` samples (or all, if fewer)."""
        n = min(n, self.n)
        return Dataset(self.X[:n], self.y[:n], self.name, self.lb, self.ub)


def _read_be32(f, path, what) -> int:
    data = f.read(4)
    if len(data) != 4:
        raise ValueError(f"{path}: truncated while reading {what}")
    return struct.unpack(">I", data)[0]


def load_idx(images_path, labels_path, name: str = "idx") -> Dataset:
    """Load an IDX image/label file pair.

    Pixels are scaled to [0, 1] by division with 255 and flattened
    row-major. Parsing is big-endian and bit-exact, so repeated loads of
    the same files agree on every platform.
    """
    images_path, labels_path = Path(images_path), Path(labels_path)
    with open(images_path, "rb") as f:
        magic = _read_be32(f, images_path, "magic")
        if magic != IDX_IMAGES_MAGIC:
            raise ValueError(f"{images_path}: bad IDX magic 0x{magic:08x} "
                             f"(expected 0x{IDX_IMAGES_MAGIC:08x})")
        count = _read_be32(f, images_path, "image count")
        rows = _read_be32(f, images_path, "row count")
        cols = _read_be32(f, images_path, "column count")
        payload = f.read(count * rows * cols)
        if len(payload) != count * rows * cols:
            raise ValueError(f"{images_path}: truncated pixel payload "
                             f"({len(payload)} of {count * rows * cols} bytes)")
        pixels = np.frombuffer(payload, dtype=np.uint8).reshape(count, rows * cols)

    with open(labels_path, "rb") as f:
        magic = _read_be32(f, labels_path, "magic")
        if magic != IDX_LABELS_MAGIC:
            raise ValueError(f"{labels_path}: bad IDX magic 0x{magic:08x} "
                             f"(expected 0x{IDX_LABELS_MAGIC:08x})")
        label_count = _read_be32(f, labels_path, "label count")
        if label_count != count:
            raise ValueError(f"label count {label_count} does not match image count {count}")
        payload = f.read(label_count)
        if len(payload) != label_count:
            raise ValueError(f"{labels_path}: truncated label payload")
        labels = np.frombuffer(payload, dtype=np.uint8).astype(int)

    return Dataset(pixels.astype(float) / 255.0, labels, name)


def load_csv(path, label_column: str, lb: float = 0.0, ub: float = 1.0,
             name: str | None = None) -> Dataset:
    """Load a rectangular numeric CSV with a header row.

    ``label_column`` names the integer label column; every other column
    is a feature. Features must already lie inside [lb, ub].
    """
    path = Path(path)
    with open(path, newline="", encoding="utf8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected a header row") from None
        if label_column not in header:
            raise ValueError(f"{path}: no column named {label_column!r} in header {header}")
        label_idx = header.index(label_column)

        features, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: ragged row with {len(row)} cells, "
                                 f"expected {len(header)}")
            try:
                values = [float(cell) for cell in row]
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric cell in row {row}") from None
            raw_label = values.pop(label_idx)
            if raw_label != int(raw_label):
                raise ValueError(f"{path}:{lineno}: label {raw_label} is not an integer")
            labels.append(int(raw_label))
            features.append(values)

    if not features:
        raise ValueError(f"{path}: no data rows")
    X = np.asarray(features, dtype=float)
    if (X < lb).any() or (X > ub).any():
        row = int(np.argmax(((X < lb) | (X > ub)).any(axis=1)))
        raise ValueError(f"{path}: row {row + 2} has values outside declared bounds [{lb}, {ub}]")
    return Dataset(X, np.asarray(labels), name or path.stem, lb, ub)


def make_synthetic(seed: int, d: int, n_per_class: int, classes: int,
                   separation: float) -> Dataset:
    """Seeded Gaussian blobs clipped into [0, 1]^d.

    Class means sit on (near-)orthogonal directions around the cube
    center at pairwise distance ``separation * SYNTHETIC_SIGMA``;
    ``separation=0`` collapses all means onto the center.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    if classes < 2:
        raise ValueError("classes must be >= 2")
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    rng = make_rng("synthetic", seed, d, n_per_class, classes, separation)

    raw = rng.standard_normal((d, classes))
    if classes <= d:
        dirs, _ = np.linalg.qr(raw)
    else:
        dirs = raw / np.linalg.norm(raw, axis=0, keepdims=True)
    radius = separation * SYNTHETIC_SIGMA / np.sqrt(2.0)
    means = 0.5 + radius * dirs.T  # (classes, d)

    X = np.empty((classes * n_per_class, d))
    y = np.empty(classes * n_per_class, dtype=int)
    for c in range(classes):
        block = slice(c * n_per_class, (c + 1) * n_per_class)
        X[block] = means[c] + SYNTHETIC_SIGMA * rng.standard_normal((n_per_class, d))
        y[block] = c
    return Dataset(np.clip(X, 0.0, 1.0), y, f"synthetic-{seed}")
