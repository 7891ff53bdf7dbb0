"""Datasets: synthetic Gaussian blobs, a CSV format, and CIFAR-10 binary batches."""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .numerics import make_rng

__all__ = [
    "Dataset",
    "make_blobs",
    "save_csv",
    "load_csv",
    "load_cifar_bin",
    "write_atomic",
    "fmt",
]

CIFAR_RECORD = 3073


def fmt(value: float) -> str:
    """Locale-independent round-trippable decimal (17 significant digits)."""
    return format(float(value), ".17g")


def write_atomic(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="ascii", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    n_classes: int
    domain: tuple = (0.0, 1.0)
    image_shape: tuple | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2 or self.X.shape[0] != self.y.shape[0]:
            raise ValueError("features must be 2-d with one label per row")
        if self.y.size and (self.y.min() < 0 or self.y.max() >= self.n_classes):
            raise ValueError("labels out of range")
        lo, hi = self.domain
        if np.any(self.X < lo) or np.any(self.X > hi):
            raise ValueError(f"features outside the domain [{lo}, {hi}]")
        if self.image_shape is not None:
            self.image_shape = tuple(int(s) for s in self.image_shape)
            if int(np.prod(self.image_shape)) != self.X.shape[1]:
                raise ValueError(f"image shape {self.image_shape} does not match {self.X.shape[1]} features")

    def __len__(self):
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.image_shape is None else self.image_shape[2]

    def take(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx], self.n_classes, self.domain, self.image_shape)

    def split(self, n_first: int):
        return self.take(slice(0, n_first)), self.take(slice(n_first, None))


def make_blobs(n_samples: int, n_classes: int, dim: int | None = None, image_shape=None, seed: int = 0,
               separation: float = 3.0, blobs_per_class: int = 1) -> Dataset:
    """Isotropic unit-variance Gaussian blobs, affinely rescaled into [0, 1].

    Each class owns ``blobs_per_class`` centres at distance ``separation``
    from the origin along (where the dimension allows) mutually orthogonal
    directions. Samples are assigned to classes round-robin and shuffled.
    """
    if image_shape is not None:
        image_shape = tuple(int(s) for s in image_shape)
        if len(image_shape) == 2:
            image_shape = image_shape + (1,)
        dim = int(np.prod(image_shape))
    if dim is None or dim < 1:
        raise ValueError("need a positive dim or an image shape")
    if n_samples < n_classes or n_classes < 2:
        raise ValueError("need n_classes >= 2 and at least one sample per class")
    rng = make_rng(seed)
    n_centres = n_classes * blobs_per_class
    dirs = rng.standard_normal((max(dim, n_centres), dim))
    if n_centres <= dim:
        q, _ = np.linalg.qr(dirs.T)
        dirs = q.T[:n_centres]
    else:
        dirs = dirs[:n_centres] / np.linalg.norm(dirs[:n_centres], axis=1, keepdims=True)
    centres = separation * dirs
    y = np.arange(n_samples) % n_classes
    blob = rng.integers(0, blobs_per_class, size=n_samples)
    X = centres[y * blobs_per_class + blob] + rng.standard_normal((n_samples, dim))
    order = rng.permutation(n_samples)
    X, y = X[order], y[order]
    lo, hi = X.min(), X.max()
    X = (X - lo) / (hi - lo)
    np.clip(X, 0.0, 1.0, out=X)
    return Dataset(X, y, n_classes, (0.0, 1.0), image_shape)


def _meta_path(path) -> Path:
    return Path(str(path) + ".meta")


def save_csv(ds: Dataset, path) -> None:
    """Write ``label,f1,...,fN`` rows plus a ``<path>.meta`` sidecar."""
    lines = [",".join([str(int(lbl))] + [fmt(v) for v in row]) for lbl, row in zip(ds.y, ds.X)]
    write_atomic(path, "\n".join(lines) + "\n")
    meta = [f"x_min = {fmt(ds.domain[0])}", f"x_max = {fmt(ds.domain[1])}", f"n_classes = {ds.n_classes}"]
    if ds.image_shape is not None:
        meta.append("image_shape = " + ",".join(str(s) for s in ds.image_shape))
    write_atomic(_meta_path(path), "\n".join(meta) + "\n")


def _read_meta(path) -> dict:
    meta = {}
    p = _meta_path(path)
    if not p.exists():
        return meta
    for raw in p.read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"{p}: malformed line {raw!r}")
        meta[key.strip()] = value.strip()
    return meta


def load_csv(path, limit: int | None = None) -> Dataset:
    rows = np.loadtxt(path, delimiter=",", ndmin=2, max_rows=limit)
    y = rows[:, 0]
    if np.any(y != np.round(y)):
        raise ValueError(f"{path}: labels must be integers")
    meta = _read_meta(path)
    domain = (float(meta.get("x_min", 0.0)), float(meta.get("x_max", 1.0)))
    n_classes = int(meta.get("n_classes", int(y.max()) + 1))
    shape = meta.get("image_shape")
    shape = tuple(int(s) for s in shape.split(",")) if shape else None
    return Dataset(rows[:, 1:], y.astype(np.int64), n_classes, domain, shape)


def load_cifar_bin(path, limit: int | None = None) -> Dataset:
    """Read a CIFAR-10 binary batch (1 label byte + 3072 channel-planar pixel bytes).

    Pixels are converted to channels-last order and scaled to [0, 1].
    """
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size % CIFAR_RECORD:
        raise ValueError(f"{path}: size is not a multiple of {CIFAR_RECORD} bytes")
    rec = raw.reshape(-1, CIFAR_RECORD)
    if limit is not None:
        rec = rec[:limit]
    y = rec[:, 0].astype(np.int64)
    X = rec[:, 1:].reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1).reshape(-1, 3072) / 255.0
    return Dataset(X, y, 10, (0.0, 1.0), (32, 32, 3))
