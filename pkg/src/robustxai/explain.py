"""Explanation maps: Gradient, Gradient x Input, Integrated Gradients,
Guided Backpropagation and LRP (z+ / z^B rules).

Every ``*_map`` function explains one input. :func:`explain_batch` computes
raw maps for many inputs at once and is what the robustness sweep uses.
Unless a class is passed explicitly, the explained class is the network's
prediction for ``x``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .network import Network, _classes, _forward_rows, _input_gradient_rows, _rows

__all__ = [
    "Method",
    "ExplanationMap",
    "LrpConfig",
    "gradient_map",
    "gradient_times_input_map",
    "integrated_gradients_map",
    "guided_backprop_map",
    "lrp_map",
    "normalize_map",
    "normalize_rows",
    "explain",
    "explain_batch",
]


class Method(str, enum.Enum):
    GRADIENT = "gradient"
    GRAD_TIMES_INPUT = "gradxinput"
    INTEGRATED_GRADIENTS = "intgrad"
    GUIDED_BACKPROP = "gbp"
    LRP = "lrp"


@dataclass
class ExplanationMap:
    values: np.ndarray
    method: Method
    cls: int
    normalized: bool = False
    l1_mass: float | None = None
    zero_denominators: int = 0


@dataclass(frozen=True)
class LrpConfig:
    """``epsilon`` is added to every denominator with the denominator's sign.

    ``lower``/``upper`` are the per-feature input bounds of the z^B rule;
    ``None`` means the network's input domain.
    """

    epsilon: float = 1e-9
    lower: np.ndarray | float | None = None
    upper: np.ndarray | float | None = None

    def bounds(self, net: Network):
        lo = net.input_domain[0] if self.lower is None else self.lower
        hi = net.input_domain[1] if self.upper is None else self.upper
        lo = np.broadcast_to(np.asarray(lo, dtype=np.float64), (net.input_dim,))
        hi = np.broadcast_to(np.asarray(hi, dtype=np.float64), (net.input_dim,))
        if np.any(lo > hi):
            raise ValueError("LRP bounds need lower <= upper")
        return lo, hi


def _target(net, X, cls):
    if cls is None:
        _, acts, _ = _forward_rows(net, X)
        return np.argmax(acts[-1], axis=1)
    return _classes(cls, X.shape[0], net.output_dim)


def _gradient_rows(net, X, k):
    _, _, s1s = _forward_rows(net, X)
    return _input_gradient_rows(net, X, k, s1s)


def _integrated_gradient_rows(net, X, k, baseline, steps):
    if steps < 1:
        raise ValueError("steps must be >= 1")
    Xb = np.broadcast_to(np.asarray(baseline, dtype=np.float64), X.shape)
    total = np.zeros_like(X)
    # midpoint rule on [0, 1]
    for t in (np.arange(steps) + 0.5) / steps:
        total += _gradient_rows(net, Xb + t * (X - Xb), k)
    return (X - Xb) * total / steps


def _guided_backprop_rows(net, X, k):
    _, _, s1s = _forward_rows(net, X)
    g = np.zeros((X.shape[0], net.output_dim))
    g[np.arange(X.shape[0]), k] = 1.0
    for l in range(net.n_layers - 1, -1, -1):
        if net.activated(l):
            g = np.maximum(g, 0.0) * s1s[l]
        g = g @ net.weights[l]
    return g


def _stabilize(denom, eps):
    sign = np.where(denom >= 0, 1.0, -1.0)
    d = denom + eps * sign
    zero = d == 0
    return np.where(zero, 1.0, d), zero


def _lrp_rows(net, X, k, cfg: LrpConfig):
    if net.n_layers < 2:
        raise ValueError("LRP needs at least two layers (z+ above the first, z^B on the first)")
    _, acts, _ = _forward_rows(net, X)
    B = X.shape[0]
    R = np.zeros((B, net.output_dim))
    R[np.arange(B), k] = 1.0
    zero_count = 0
    for l in range(net.n_layers - 1, 0, -1):
        a = acts[l - 1]
        wp = np.maximum(net.weights[l], 0.0)
        d, zero = _stabilize(a @ wp.T, cfg.epsilon)
        zero_count += int(zero.sum())
        s = np.where(zero, 0.0, R / d)
        R = a * (s @ wp)
    lo, hi = cfg.bounds(net)
    w = net.weights[0]
    wp, wn = np.maximum(w, 0.0), np.minimum(w, 0.0)
    # z_ji = x_i w_ji - lo_i w+_ji - hi_i w-_ji ; shape (B, out, in)
    z = X[:, None, :] * w[None] - (lo * wp)[None] - (hi * wn)[None]
    d, zero = _stabilize(z.sum(axis=2), cfg.epsilon)
    zero_count += int(zero.sum())
    s = np.where(zero, 0.0, R / d)
    return np.einsum("bj,bji->bi", s, z), zero_count


def explain_batch(net: Network, X, method, classes=None, *, baseline=None, steps: int = 64,
                  lrp: LrpConfig | None = None):
    """Raw (unnormalised) maps for every row of ``X``.

    Returns ``(maps, classes, zero_denominators)``.
    """
    method = Method(method)
    X, _ = _rows(net, X)
    k = _target(net, X, classes)
    zeros = 0
    if method is Method.GRADIENT:
        maps = _gradient_rows(net, X, k)
    elif method is Method.GRAD_TIMES_INPUT:
        maps = X * _gradient_rows(net, X, k)
    elif method is Method.INTEGRATED_GRADIENTS:
        base = net.input_domain[0] if baseline is None else baseline
        maps = _integrated_gradient_rows(net, X, k, base, steps)
    elif method is Method.GUIDED_BACKPROP:
        maps = _guided_backprop_rows(net, X, k)
    else:
        maps, zeros = _lrp_rows(net, X, k, lrp or LrpConfig())
    return maps, k, zeros


def _single(net, x, method, cls, **kw) -> ExplanationMap:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("expected a single input vector")
    maps, k, zeros = explain_batch(net, x[None], method, None if cls is None else [cls], **kw)
    return ExplanationMap(maps[0], Method(method), int(k[0]), zero_denominators=zeros)


def gradient_map(net: Network, x, cls=None) -> ExplanationMap:
    return _single(net, x, Method.GRADIENT, cls)


def gradient_times_input_map(net: Network, x, cls=None) -> ExplanationMap:
    return _single(net, x, Method.GRAD_TIMES_INPUT, cls)


def integrated_gradients_map(net: Network, x, baseline=None, steps: int = 64, cls=None) -> ExplanationMap:
    """``(x - baseline) * mean of gradients at steps midpoints of the segment``.

    The baseline defaults to the all-``x_min`` input.
    """
    return _single(net, x, Method.INTEGRATED_GRADIENTS, cls, baseline=baseline, steps=steps)


def guided_backprop_map(net: Network, x, cls=None) -> ExplanationMap:
    """Gradient with negative backward signals zeroed at every activation."""
    return _single(net, x, Method.GUIDED_BACKPROP, cls)


def lrp_map(net: Network, x, cfg: LrpConfig | None = None, cls=None) -> ExplanationMap:
    """Relevance: one-hot at the explained class, z+ rule down to the first
    layer, z^B rule on the first layer. Units whose denominator is still zero
    after stabilisation pass on no relevance; their count is recorded in
    ``zero_denominators``.
    """
    return _single(net, x, Method.LRP, cls, lrp=cfg)


def explain(net: Network, x, method, cls=None, **kw) -> ExplanationMap:
    return _single(net, x, Method(method), cls, **kw)


def normalize_rows(maps, channels: int = 1):
    """Pixel-wise ``sum_c |map|`` divided by its total, for each row.

    Features are laid out channels-last, so pixel ``p`` owns features
    ``p*channels ... p*channels + channels - 1``. Rows with zero mass stay
    zero; the returned mask says which rows were normalised.
    """
    maps = np.asarray(maps, dtype=np.float64)
    if maps.shape[-1] % channels:
        raise ValueError(f"map length {maps.shape[-1]} is not divisible by {channels} channels")
    pix = np.abs(maps).reshape(maps.shape[0], -1, channels).sum(axis=2)
    mass = pix.sum(axis=1, keepdims=True)
    ok = mass[:, 0] > 0
    out = np.divide(pix, mass, out=np.zeros_like(pix), where=mass > 0)
    return out, ok


def normalize_map(raw: ExplanationMap, channels: int = 1) -> ExplanationMap:
    out, ok = normalize_rows(raw.values[None], channels)
    return ExplanationMap(out[0], raw.method, raw.cls, normalized=bool(ok[0]),
                          l1_mass=float(np.abs(raw.values).sum()),
                          zero_denominators=raw.zero_denominators)
