"""Synthetic generators, CSV ingestion, normalization, and splits.

Labels are integers in ``1..K``. All randomness flows through explicit
seeds, so every generator and split is reproducible.
"""

import csv
import json
import logging
import math
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        labels = np.asarray(self.labels, dtype=int)
        if X.ndim != 2 or X.shape[0] < 1:
            raise ValueError(f"X must be a non-empty (N, P) matrix, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ValueError("features contain non-finite values")
        if labels.shape != (X.shape[0],):
            raise ValueError(f"labels shape {labels.shape} does not match {X.shape[0]} rows")
        if np.any(labels < 1) or np.any(labels > self.num_classes):
            raise ValueError(f"labels must lie in 1..{self.num_classes}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.labels[idx], self.num_classes)


@dataclass(frozen=True)
class SplitSpec:
    """Train/val/test sizes as fractions (summing to 1) or integer counts."""

    train: float
    val: float
    test: float
    seed: int = 0

    def sizes(self, n: int):
        parts = (self.train, self.val, self.test)
        if all(isinstance(p, (int, np.integer)) for p in parts):
            if sum(parts) != n:
                raise ValueError(f"split counts {parts} do not sum to {n}")
            return tuple(int(p) for p in parts)
        if abs(sum(parts) - 1.0) > 1e-9:
            raise ValueError(f"split fractions {parts} do not sum to 1")
        n_train = int(self.train * n + 1e-9)
        n_val = int(self.val * n + 1e-9)
        return n_train, n_val, n - n_train - n_val


def circle_centers(num_classes: int) -> np.ndarray:
    """Class centers evenly spaced on the unit circle; class k sits at angle 2*pi*k/K."""
    k = np.arange(1, num_classes + 1)
    ang = 2.0 * np.pi * k / num_classes
    return np.column_stack([np.cos(ang), np.sin(ang)])


def default_circle_mix_sd(num_classes: int) -> float:
    """Half the chord between adjacent centers, so neighbors overlap at ~2 sd."""
    return math.sin(math.pi / num_classes)


def gen_circle_mixture(num_classes: int, n: int, mix_sd: float, seed) -> Dataset:
    """Isotropic Gaussian mixture with one component per class on the unit circle.

    Class counts are balanced: ``n // K`` points each, remainder assigned to
    the first classes.
    """
    if num_classes < 2:
        raise ValueError(f"num_classes must be >= 2, got {num_classes}")
    if n < num_classes:
        raise ValueError(f"need n >= num_classes, got n={n}, K={num_classes}")
    if mix_sd < 0:
        raise ValueError(f"mix_sd must be non-negative, got {mix_sd}")
    rng = np.random.default_rng(seed)
    centers = circle_centers(num_classes)
    base = n // num_classes
    rem = n - base * num_classes
    xs, ys = [], []
    for k in range(num_classes):
        n_k = base + (1 if k < rem else 0)
        xs.append(centers[k] + mix_sd * rng.standard_normal((n_k, 2)))
        ys.append(np.full(n_k, k + 1, dtype=int))
    return Dataset(np.vstack(xs), np.concatenate(ys), num_classes)


def gen_overlap_toy(s: float, n: int, seed) -> Dataset:
    """Three-class unit-circle mixture whose ambiguity grows with ``s``."""
    if s <= 0:
        raise ValueError(f"s must be positive, got {s}")
    return gen_circle_mixture(3, n, s, seed)


def load_table(path, label_column: str) -> Dataset:
    """Read a comma-separated file with a header row into a Dataset.

    Features must be numeric; the label column may hold integers or
    arbitrary category names, which are mapped to ``1..K`` in sorted order
    (numeric order when every label parses as a number).
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        if label_column not in header:
            raise ValueError(f"{path}: no column named {label_column!r} in header")
        label_idx = header.index(label_column)
        feature_cols = [(i, name) for i, name in enumerate(header) if i != label_idx]

        rows = []
        raw_labels = []
        for r, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ValueError(f"{path}: row {r} has {len(row)} cells, expected {len(header)}")
            feats = []
            for i, name in feature_cols:
                try:
                    feats.append(float(row[i]))
                except ValueError:
                    raise ValueError(
                        f"{path}: non-numeric value {row[i]!r} at row {r}, column {name!r}"
                    ) from None
            rows.append(feats)
            raw_labels.append(row[label_idx].strip())
    if not rows:
        raise ValueError(f"{path}: no data rows")

    try:
        keys = sorted(set(raw_labels), key=float)
    except ValueError:
        keys = sorted(set(raw_labels))
    mapping = {key: k + 1 for k, key in enumerate(keys)}
    labels = np.array([mapping[v] for v in raw_labels], dtype=int)
    return Dataset(np.asarray(rows, dtype=float), labels, len(keys))


def save_table(ds: Dataset, path, label_column: str = "label"):
    """Write a Dataset back to the CSV schema accepted by :func:`load_table`."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{j + 1}" for j in range(ds.X.shape[1])] + [label_column])
        for row, label in zip(ds.X, ds.labels):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])


@dataclass(frozen=True)
class NormStats:
    """Per-feature affine normalization ``(x - center) / scale`` fit on training data."""

    mode: str
    center: np.ndarray
    scale: np.ndarray

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = (X - self.center[None, :]) / self.scale[None, :]
        if self.mode == "minmax11":
            out = out - 1.0
        return out

    def to_dict(self) -> dict:
        return {"mode": self.mode, "center": self.center.tolist(), "scale": self.scale.tolist()}

    @staticmethod
    def from_dict(d: dict) -> "NormStats":
        return NormStats(d["mode"], np.asarray(d["center"], float), np.asarray(d["scale"], float))


def fit_normalizer(X, mode: str) -> NormStats:
    """Compute normalization statistics on (training) features.

    ``zscore`` maps to zero mean and unit variance; a zero-variance feature
    maps to 0 with a warning. ``minmax11`` maps the observed range onto
    [-1, 1]; a constant feature maps to -1.
    """
    X = np.asarray(X, dtype=float)
    if mode == "zscore":
        center = X.mean(axis=0)
        scale = X.std(axis=0)
        flat = scale == 0.0
        if np.any(flat):
            log.warning("%d zero-variance feature(s) map to 0 under zscore", int(flat.sum()))
            scale = np.where(flat, 1.0, scale)
        return NormStats("zscore", center, scale)
    if mode == "minmax11":
        lo = X.min(axis=0)
        hi = X.max(axis=0)
        span = hi - lo
        scale = np.where(span == 0.0, 1.0, span / 2.0)
        return NormStats("minmax11", lo, scale)
    raise ValueError(f"unknown normalization mode {mode!r}")


def normalize(ds: Dataset, mode: str):
    """Fit statistics on ``ds`` and apply them; returns ``(dataset, stats)``."""
    stats = fit_normalizer(ds.X, mode)
    return Dataset(stats.apply(ds.X), ds.labels, ds.num_classes), stats


def apply_normalizer(ds: Dataset, stats: NormStats) -> Dataset:
    return Dataset(stats.apply(ds.X), ds.labels, ds.num_classes)


def save_dataset_bundle(ds: Dataset, path, stats: NormStats | None = None,
                        split_spec: SplitSpec | None = None, label_column: str = "label"):
    """Write a dataset as CSV plus a JSON sidecar.

    The sidecar (``<path>.meta.json``) records the class count, the
    normalization statistics applied to the features (if any), and the
    split index sets implied by ``split_spec``, so a normalized, split
    dataset round-trips without recomputation.
    """
    import json

    save_table(ds, path, label_column)
    meta = {
        "num_classes": ds.num_classes,
        "n": ds.n,
        "label_column": label_column,
        "normalization": stats.to_dict() if stats else None,
        "split": None,
    }
    if split_spec is not None:
        idx_tr, idx_va, idx_te = split_indices(ds.n, split_spec)
        meta["split"] = {
            "seed": split_spec.seed,
            "train": [int(i) for i in idx_tr],
            "val": [int(i) for i in idx_va],
            "test": [int(i) for i in idx_te],
        }
    with open(f"{path}.meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_dataset_bundle(path):
    """Read a CSV written by :func:`save_dataset_bundle` with its sidecar.

    Returns ``(dataset, meta)`` where ``meta`` is the parsed sidecar dict
    (with ``normalization`` decoded into :class:`NormStats` when present).
    """
    with open(f"{path}.meta.json", encoding="utf-8") as fh:
        meta = json.load(fh)
    ds = load_table(path, meta.get("label_column", "label"))
    if ds.num_classes != meta["num_classes"]:
        raise ValueError(
            f"{path}: sidecar declares {meta['num_classes']} classes, data has {ds.num_classes}"
        )
    if meta.get("normalization"):
        meta["normalization"] = NormStats.from_dict(meta["normalization"])
    return ds, meta


def split_indices(n: int, spec: SplitSpec):
    """Disjoint, exhaustive (train, val, test) index arrays from a seeded shuffle."""
    n_train, n_val, n_test = spec.sizes(n)
    perm = np.random.default_rng(spec.seed).permutation(n)
    return (
        np.sort(perm[:n_train]),
        np.sort(perm[n_train:n_train + n_val]),
        np.sort(perm[n_train + n_val:]),
    )


def split(ds: Dataset, spec: SplitSpec):
    """Partition a dataset into (train, val, test) subsets."""
    idx_tr, idx_va, idx_te = split_indices(ds.n, spec)
    return ds.subset(idx_tr), ds.subset(idx_va), ds.subset(idx_te)
