"""Dense linear algebra and seeded sampling shared by the rest of the package.

Matrices and vectors are plain ``float64`` numpy arrays. Randomness always
flows through :class:`numpy.random.Generator` instances created here, so a
seed (plus an optional stream path) fully determines every draw.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "as_matrix",
    "as_vector",
    "matvec",
    "frobenius_norm",
    "make_rng",
    "sample_standard_normal",
    "sample_laplace",
]


def as_matrix(data) -> np.ndarray:
    m = np.array(data, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-d array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def as_vector(data) -> np.ndarray:
    v = np.array(data, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-d array, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite entries")
    return v


def matvec(m, v) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise ValueError(f"dimension mismatch: {m.shape} @ {v.shape}")
    return m @ v


def frobenius_norm(m) -> float:
    m = np.asarray(m, dtype=np.float64)
    return float(np.sqrt(np.sum(m * m)))


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Return a generator for ``seed``, optionally on an independent child stream.

    ``make_rng(s, i, j)`` gives a stream that depends only on ``(s, i, j)``,
    which lets per-sample work draw noise without sharing one generator.
    """
    if seed < 0 or any(s < 0 for s in stream):
        raise ValueError("seeds and stream ids must be non-negative")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, *stream])))


def sample_standard_normal(rng: np.random.Generator, n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    return rng.standard_normal(n)


def sample_laplace(rng: np.random.Generator, n: int, b: float) -> np.ndarray:
    if not b > 0:
        raise ValueError(f"Laplace scale must be positive, got {b}")
    if n < 1:
        raise ValueError("n must be >= 1")
    return rng.laplace(0.0, b, size=n)
