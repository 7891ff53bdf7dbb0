"""Score how far explanation maps move when the input is perturbed."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .explain import LrpConfig, Method, explain_batch, normalize_rows
from .network import Network, _forward_rows, _rows
from .numerics import make_rng

__all__ = [
    "NOISE_KINDS",
    "NoiseSpec",
    "UndefinedMetricError",
    "perturb",
    "salt_pepper_count",
    "pcc",
    "mse",
    "ssim",
    "accuracy",
    "SweepConfig",
    "ReportRow",
    "RobustnessReport",
    "robustness_sweep",
]

NOISE_KINDS = ("gaussian", "laplace", "saltpepper")


class UndefinedMetricError(ValueError):
    """A similarity score is undefined for this pair (e.g. PCC of a constant map)."""


@dataclass(frozen=True)
class NoiseSpec:
    kind: str
    level: float
    seed: int = 0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}; expected one of {NOISE_KINDS}")
        if not 0 <= self.level <= 0.5:
            raise ValueError(f"noise level must be in [0, 0.5], got {self.level}")


def salt_pepper_count(n_pixels: int, level: float) -> int:
    # guard against 0.5000000001-style rounding pushing an exact product up
    return int(math.ceil(n_pixels * level / 2 - 1e-9))


def perturb(x, spec: NoiseSpec, domain, rng: np.random.Generator, channels: int = 1) -> np.ndarray:
    """Noisy copy of ``x``.

    Additive noise has scale ``(x_max - x_min) * level`` and is not clipped.
    Salt-pepper noise sets ``ceil(n_pixels * level / 2)`` distinct pixels
    (all channels together) to ``x_min`` or ``x_max`` with equal odds.
    """
    x = np.asarray(x, dtype=np.float64)
    lo, hi = domain
    tol = 1e-12 * (hi - lo)
    if np.any(x < lo - tol) or np.any(x > hi + tol):
        raise ValueError("input lies outside the declared domain")
    if spec.level == 0:
        return x.copy()
    scale = (hi - lo) * spec.level
    if spec.kind == "gaussian":
        return x + scale * rng.standard_normal(x.shape)
    if spec.kind == "laplace":
        return x + rng.laplace(0.0, scale, size=x.shape)
    if x.shape[0] % channels:
        raise ValueError("feature count is not divisible by channels")
    pixels = x.reshape(-1, channels).copy()
    count = salt_pepper_count(pixels.shape[0], spec.level)
    chosen = rng.choice(pixels.shape[0], size=count, replace=False)
    salt = rng.random(count) < 0.5
    pixels[chosen] = np.where(salt, hi, lo)[:, None]
    return pixels.reshape(-1)


def pcc(u, v) -> float:
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape or u.size < 2:
        raise ValueError("pcc needs two vectors of equal length >= 2")
    du, dv = u - u.mean(), v - v.mean()
    su, sv = np.dot(du, du), np.dot(dv, dv)
    if su == 0 or sv == 0:
        raise UndefinedMetricError("pcc is undefined for a constant vector")
    r = np.dot(du, dv) / np.sqrt(su * sv)
    return float(min(1.0, max(-1.0, r)))


def mse(u, v) -> float:
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise ValueError("mse needs vectors of equal length")
    d = u - v
    return float(np.dot(d, d) / d.size)


def ssim(u, v, dynamic_range: float, window: int = 7, k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean SSIM over every fully interior ``window x window`` patch.

    Patch statistics are uniformly weighted; variances and the covariance use
    the unbiased ``1/(n-1)`` normalisation.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 2:
        raise ValueError("ssim needs two 2-d images of equal shape")
    if min(u.shape) < window:
        raise ValueError(f"image {u.shape} is smaller than the {window}x{window} window")
    n = window * window
    pu = sliding_window_view(u, (window, window)).reshape(-1, n)
    pv = sliding_window_view(v, (window, window)).reshape(-1, n)
    mu, mv = pu.mean(axis=1), pv.mean(axis=1)
    du, dv = pu - mu[:, None], pv - mv[:, None]
    var_u = (du * du).sum(axis=1) / (n - 1)
    var_v = (dv * dv).sum(axis=1) / (n - 1)
    cov = (du * dv).sum(axis=1) / (n - 1)
    c1 = (k1 * dynamic_range) ** 2
    c2 = (k2 * dynamic_range) ** 2
    s = ((2 * mu * mv + c1) * (2 * cov + c2)) / ((mu**2 + mv**2 + c1) * (var_u + var_v + c2))
    return float(s.mean())


def accuracy(net: Network, X, y) -> float:
    X, _ = _rows(net, X)
    y = np.asarray(y)
    if X.shape[0] == 0:
        raise ValueError("accuracy of an empty dataset")
    _, acts, _ = _forward_rows(net, X)
    return float(np.mean(np.argmax(acts[-1], axis=1) == y))


@dataclass(frozen=True)
class SweepConfig:
    """Explanation and layout options for :func:`robustness_sweep`.

    ``image_shape`` is ``(height, width, channels)``; without it maps are
    treated as single-channel vectors and SSIM is not computed.
    """

    image_shape: tuple | None = None
    ig_steps: int = 64
    lrp: LrpConfig = field(default_factory=LrpConfig)

    @property
    def channels(self) -> int:
        return 1 if self.image_shape is None else int(self.image_shape[2])


@dataclass
class ReportRow:
    method: str
    noise: str
    level: float
    pcc_mean: float
    pcc_std: float
    ssim_mean: float
    ssim_std: float
    mse_mean: float
    mse_std: float
    perturbed_accuracy: float
    n: int
    n_excluded: int


@dataclass
class RobustnessReport:
    clean_accuracy: float
    rows: list

    def row(self, method, noise, level) -> ReportRow:
        for r in self.rows:
            if r.method == Method(method).value and r.noise == noise and r.level == level:
                return r
        raise KeyError((method, noise, level))


def _stats(values):
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return math.nan, math.nan
    return float(values.mean()), float(values.std())


def _map_ssim(u, v, shape):
    lo = min(u.min(), v.min())
    hi = max(u.max(), v.max())
    rng_ = hi - lo
    if rng_ == 0:
        return 1.0
    return ssim(u.reshape(shape), v.reshape(shape), rng_)


def robustness_sweep(net: Network, X, y, methods, specs, cfg: SweepConfig | None = None) -> RobustnessReport:
    """Score explanation drift for every (method, noise spec) pair.

    Each sample is explained for its clean predicted class ``k``; the noisy
    copy is explained for the same ``k``. Similarities are computed on the
    normalised maps. Sample ``i`` under spec ``j`` draws its noise from
    ``make_rng(spec.seed, j, i)``, independent of evaluation order. Samples
    whose clean or noisy map is constant have undefined PCC; they are
    counted in ``n_excluded`` and left out of every mean.
    """
    cfg = cfg or SweepConfig()
    X, _ = _rows(net, X)
    y = np.asarray(y)
    if X.shape[0] == 0:
        raise ValueError("empty dataset")
    if isinstance(methods, (str, Method)):
        methods = [methods]
    methods = [Method(m) for m in methods]
    channels = cfg.channels
    grid = None if cfg.image_shape is None else tuple(cfg.image_shape[:2])
    opts = dict(steps=cfg.ig_steps, lrp=cfg.lrp)

    _, acts, _ = _forward_rows(net, X)
    k = np.argmax(acts[-1], axis=1)
    clean_acc = float(np.mean(k == y))
    noisy = []
    for j, spec in enumerate(specs):
        noisy.append(np.stack([perturb(X[i], spec, net.input_domain, make_rng(spec.seed, j, i), channels)
                               for i in range(X.shape[0])]))

    rows = []
    for method in methods:
        clean_maps, _, _ = explain_batch(net, X, method, k, **opts)
        clean_norm, _ = normalize_rows(clean_maps, channels)
        for spec, Xn in zip(specs, noisy):
            maps, _, _ = explain_batch(net, Xn, method, k, **opts)
            norm, _ = normalize_rows(maps, channels)
            pccs, ssims, mses = [], [], []
            excluded = 0
            for u, v in zip(clean_norm, norm):
                try:
                    p = pcc(u, v)
                except UndefinedMetricError:
                    excluded += 1
                    continue
                pccs.append(p)
                mses.append(mse(u, v))
                if grid is not None:
                    ssims.append(_map_ssim(u, v, grid))
            _, acts_n, _ = _forward_rows(net, Xn)
            acc = float(np.mean(np.argmax(acts_n[-1], axis=1) == y))
            rows.append(ReportRow(method.value, spec.kind, spec.level, *_stats(pccs), *_stats(ssims),
                                  *_stats(mses), acc, X.shape[0], excluded))
    return RobustnessReport(clean_acc, rows)
