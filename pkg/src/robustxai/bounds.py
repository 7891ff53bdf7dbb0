"""Certified limits on how far an explanation can move.

* Softplus networks: a bound on the Frobenius norm of the input Hessian
  built from layer weight norms and the activation's derivative bounds,
  and the resulting bound on gradient-map change along a segment.
* ReLU networks: the gradient is piecewise constant, so its change along a
  segment is a sum of jumps at the points where some pre-activation
  crosses zero ("kinks"). :func:`find_kinks` locates them exactly by walking
  linear regions, and :func:`kink_sum_check` rebuilds the change from the
  individual jumps.
* :func:`beta_interchange` rescales a Softplus network to a different
  ``beta`` without changing its outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .network import Activation, Network, _forward_rows, exact_hessian, input_gradient
from .numerics import frobenius_norm, make_rng
from .training import estimate_hessian_sq_norm

__all__ = [
    "BoundCertificate",
    "PathSpec",
    "KinkRecord",
    "KinkSumResult",
    "KinkAtEndpointError",
    "activation_bounds",
    "layer_norms",
    "theorem1_bound",
    "certify",
    "explanation_change_bound",
    "find_kinks",
    "kink_sum_check",
    "beta_interchange",
]

EXACT_HESSIAN_MAX_DIM = 64


class KinkAtEndpointError(ValueError):
    """A pre-activation is zero at one end of the path."""


def activation_bounds(act: Activation) -> tuple[float, float]:
    """``(sup |s'|, sup |s''|)`` for the activation; ``(1, beta/4)`` for Softplus."""
    if not act.smooth:
        raise ValueError("ReLU has no bounded second derivative; use the kink analysis instead")
    return 1.0, act.beta / 4.0


def layer_norms(net: Network, cls: int) -> list[float]:
    """Frobenius norms of the weight matrices, keeping only row ``cls`` of the last one."""
    if not 0 <= cls < net.output_dim:
        raise ValueError(f"class {cls} out of range")
    norms = [frobenius_norm(w) for w in net.weights[:-1]]
    norms.append(frobenius_norm(net.weights[-1][cls]))
    return norms


@dataclass
class BoundCertificate:
    cls: int
    layer_norms: list
    sigma1: float
    sigma2: float
    bound: float
    measured: float | None = None
    measured_kind: str | None = None
    x: np.ndarray | None = field(default=None, repr=False)

    @property
    def slack(self) -> float | None:
        return None if self.measured is None else self.bound - self.measured


def theorem1_bound(net: Network, cls: int = 0) -> BoundCertificate:
    """Hessian-norm bound for score ``cls`` of a Softplus network.

    With ``L`` layers and norms ``n_l`` the bound is
    ``sum_m prod_{l<=m} n_l^2 * prod_{l>m} n_l * S1^(L+m-2) * S2``, where the
    sum only runs over layers followed by the nonlinearity (an identity
    output layer has zero second derivative). Biases do not enter.
    """
    # an affine network never evaluates its activation, so any constants do
    s1, s2 = (1.0, 0.0) if net.affine else activation_bounds(net.activation)
    norms = layer_norms(net, cls)
    L = len(norms)
    total = 0.0
    for m in range(1, L + 1):
        if not net.activated(m - 1):
            continue
        term = np.prod([n**2 for n in norms[:m]]) * np.prod(norms[m:])
        total += term * s1 ** (L + m - 2) * s2
    return BoundCertificate(cls, norms, s1, s2, float(total))


def certify(net: Network, x, cls: int | None = None, samples: int = 16,
            rng: np.random.Generator | None = None, exact: bool | None = None) -> BoundCertificate:
    """Bound plus the Hessian norm measured at ``x``.

    The measurement is exact (full Hessian) when the input dimension is at
    most 64 unless ``exact=False``; otherwise it is the square root of a
    ``samples``-probe estimate of ``||H||_F^2``.
    """
    x = np.asarray(x, dtype=np.float64)
    if cls is None:
        _, acts, _ = _forward_rows(net, x[None])
        cls = int(np.argmax(acts[-1][0]))
    cert = theorem1_bound(net, cls)
    cert.x = x
    if exact is None:
        exact = net.input_dim <= EXACT_HESSIAN_MAX_DIM
    if exact:
        cert.measured = frobenius_norm(exact_hessian(net, x, cls))
        cert.measured_kind = "exact"
    else:
        rng = rng if rng is not None else make_rng(0)
        est = estimate_hessian_sq_norm(net, x, cls, samples, rng)
        cert.measured = float(np.sqrt(est.value))
        cert.measured_kind = "sampled"
    return cert


@dataclass(frozen=True)
class PathSpec:
    """Straight segment ``start + t * (end - start)``, ``t`` in ``[0, 1]``."""

    start: np.ndarray
    end: np.ndarray

    def __post_init__(self):
        s = np.array(self.start, dtype=np.float64)
        e = np.array(self.end, dtype=np.float64)
        if s.shape != e.shape or s.ndim != 1:
            raise ValueError("path endpoints must be vectors of equal length")
        if np.array_equal(s, e):
            raise ValueError("path endpoints coincide")
        object.__setattr__(self, "start", s)
        object.__setattr__(self, "end", e)

    @property
    def direction(self) -> np.ndarray:
        return self.end - self.start

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.direction))

    def at(self, t: float) -> np.ndarray:
        return self.start + t * self.direction


def explanation_change_bound(cert: BoundCertificate, path: PathSpec) -> float:
    return cert.bound * path.length


@dataclass(frozen=True)
class KinkRecord:
    t: float
    layer: int
    unit: int
    sign: int


def _affine_pre_activations(net: Network, path: PathSpec, masks):
    """Pre-activations as ``p + t q`` along the path under fixed on/off masks."""
    p, q = path.start, path.direction
    out = []
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        zp, zq = w @ p + b, w @ q
        out.append((zp, zq))
        if net.activated(l):
            p, q = masks[l] * zp, masks[l] * zq
        else:
            p, q = zp, zq
    return out


def _kinkable(net: Network):
    if net.activation.smooth:
        raise ValueError("kink analysis applies to ReLU networks")
    return [l for l in range(net.n_layers) if net.activated(l)]


def find_kinks(net: Network, path: PathSpec, merge_tol: float = 1e-12) -> list[KinkRecord]:
    """Every ``t`` in (0, 1) where a ReLU pre-activation changes sign.

    Inside a linear region all pre-activations are affine in ``t``, so the
    next kink is the nearest root among units heading towards zero. Roots
    within ``merge_tol`` of each other are treated as one simultaneous
    crossing. Raises :class:`KinkAtEndpointError` when a pre-activation
    vanishes at ``t = 0`` or ``t = 1``.
    """
    layers = _kinkable(net)
    masks = [None] * net.n_layers
    # masks at t = 0, layer by layer
    p = path.start
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = w @ p + b
        if net.activated(l):
            scale = 1e-12 * (1.0 + np.abs(w) @ np.abs(p) + abs(b).max())
            if np.any(np.abs(z) <= scale):
                raise KinkAtEndpointError("a pre-activation vanishes at the path start")
            masks[l] = (z > 0).astype(np.float64)
            p = masks[l] * z
        else:
            p = z

    kinks = []
    t = 0.0
    while True:
        pre = _affine_pre_activations(net, path, masks)
        best = np.inf
        cands = []
        for l in layers:
            zp, zq = pre[l]
            on = masks[l] > 0
            heading = np.where(on, zq < 0, zq > 0)
            with np.errstate(divide="ignore", invalid="ignore"):
                roots = np.where(heading & (zq != 0), -zp / zq, np.inf)
            roots = np.where(roots >= t, roots, np.inf)
            for u in np.flatnonzero(np.isfinite(roots)):
                cands.append((roots[u], l, u))
            if roots.size:
                best = min(best, roots.min())
        if not best < 1.0:
            if abs(best - 1.0) <= 1e-10:
                raise KinkAtEndpointError("a pre-activation vanishes at the path end")
            return kinks
        crossing = sorted((l, u) for r, l, u in cands if r <= best + merge_tol)
        for l, u in crossing:
            # re-derive the slope with the masks updated by earlier crossings at this t
            zq = _affine_pre_activations(net, path, masks)[l][1][u]
            new_on = 1.0 if zq > 0 else 0.0
            if new_on != masks[l][u]:
                masks[l] = masks[l].copy()
                masks[l][u] = new_on
                kinks.append(KinkRecord(float(best), l, int(u), 1 if new_on else -1))
        t = best


def _masked_gradient(net: Network, masks, cls: int) -> np.ndarray:
    g = np.zeros(net.output_dim)
    g[cls] = 1.0
    for l in range(net.n_layers - 1, -1, -1):
        if net.activated(l):
            g = g * masks[l]
        g = g @ net.weights[l]
    return g


def _unit_jump(net: Network, masks, cls: int, layer: int, unit: int) -> np.ndarray:
    """Change in the input gradient when unit ``(layer, unit)`` switches on.

    Equals ``(d score / d a_unit) * grad_x z_unit`` with every other unit
    held at ``masks``.
    """
    up = np.zeros(net.output_dim)
    up[cls] = 1.0
    for l in range(net.n_layers - 1, layer, -1):
        if net.activated(l):
            up = up * masks[l]
        up = up @ net.weights[l]
    down = net.weights[layer][unit].copy()
    for l in range(layer - 1, -1, -1):
        if net.activated(l):
            down = down * masks[l]
        down = down @ net.weights[l]
    return up[unit] * down


@dataclass
class KinkSumResult:
    measured: np.ndarray
    formula: np.ndarray
    bound: float
    kinks: list

    @property
    def change_sq(self) -> float:
        return float(np.dot(self.measured, self.measured))


def kink_sum_check(net: Network, path: PathSpec, cls: int | None = None) -> KinkSumResult:
    """Compare ``h(start) - h(end)`` computed directly and from per-kink jumps.

    ``h`` is the input gradient of score ``cls`` (default: the class
    predicted at ``start``). ``bound`` is the number of kinks times the
    product of squared layer norms (last layer restricted to row ``cls``).
    """
    kinks = find_kinks(net, path)
    if cls is None:
        _, acts, _ = _forward_rows(net, path.start[None])
        cls = int(np.argmax(acts[-1][0]))
    measured = input_gradient(net, path.start, cls) - input_gradient(net, path.end, cls)

    masks = [None] * net.n_layers
    p = path.start
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = w @ p + b
        if net.activated(l):
            masks[l] = (z > 0).astype(np.float64)
            p = masks[l] * z
        else:
            p = z
    change = np.zeros(net.input_dim)
    for k in kinks:
        jump = _unit_jump(net, masks, cls, k.layer, k.unit)
        change += k.sign * jump
        masks[k.layer] = masks[k.layer].copy()
        masks[k.layer][k.unit] = 1.0 if k.sign > 0 else 0.0
    per_kink = float(np.prod([n**2 for n in layer_norms(net, cls)]))
    return KinkSumResult(measured, -change, len(kinks) * per_kink, kinks)


def beta_interchange(net: Network, beta: float) -> Network:
    """Softplus network with parameter ``beta`` computing the same function.

    First-layer weights and all hidden biases scale by ``b1/b2``, last-layer
    weights by ``b2/b1``; everything else is unchanged.
    """
    if not net.activation.smooth:
        raise ValueError("beta_interchange needs a Softplus network")
    if net.n_layers < 2:
        raise ValueError("beta_interchange needs at least two layers")
    if net.output_activation:
        raise ValueError("beta_interchange assumes an affine output layer")
    if not beta > 0:
        raise ValueError("beta must be positive")
    r = net.activation.beta / beta
    n = net.n_layers
    ws = [w * r if l == 0 else w / r if l == n - 1 else w for l, w in enumerate(net.weights)]
    bs = [b * r if l < n - 1 else b for l, b in enumerate(net.biases)]
    return net.replace(weights=tuple(ws), biases=tuple(bs), activation=Activation.softplus(beta))
