"""Fully-connected classifiers and their input derivatives.

A :class:`Network` maps ``x`` in R^N to C class scores through affine layers
with a shared activation after every layer except the last (unless
``output_activation`` is set). The functions here accept a single input
``x`` of shape ``(N,)`` or a batch of shape ``(B, N)`` and return results of
the matching rank.

Second derivatives are computed two independent ways: a Pearlmutter-style
pass (:func:`hessian_vector_product`) that never forms the Hessian, and a
forward second-order propagation (:func:`exact_hessian`) that builds it
column block by column block. The latter exists to check the former.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

__all__ = [
    "Activation",
    "Network",
    "ForwardTrace",
    "NonFiniteError",
    "forward",
    "predict",
    "input_gradient",
    "parameter_gradient",
    "hessian_vector_product",
    "exact_hessian",
]


class NonFiniteError(ArithmeticError):
    """Raised when a forward pass produces inf or nan (diverged weights)."""


@dataclass(frozen=True)
class Activation:
    kind: str
    beta: float | None = None

    def __post_init__(self):
        if self.kind == "softplus":
            if self.beta is None or not self.beta > 0:
                raise ValueError("softplus needs beta > 0")
            object.__setattr__(self, "beta", float(self.beta))
        elif self.kind == "relu":
            if self.beta is not None:
                raise ValueError("relu takes no beta")
        else:
            raise ValueError(f"unknown activation {self.kind!r}")

    @classmethod
    def relu(cls) -> "Activation":
        return cls("relu")

    @classmethod
    def softplus(cls, beta: float) -> "Activation":
        return cls("softplus", beta)

    @property
    def smooth(self) -> bool:
        return self.kind == "softplus"

    def __call__(self, z):
        if self.kind == "relu":
            return np.maximum(z, 0.0)
        # logaddexp(0, t) = ln(1 + e^t) without overflow for large t
        return np.logaddexp(0.0, self.beta * z) / self.beta

    def d1(self, z):
        if self.kind == "relu":
            return (z > 0).astype(np.float64)
        return expit(self.beta * z)

    def d2(self, z):
        if self.kind == "relu":
            return np.zeros_like(z, dtype=np.float64)
        s = expit(self.beta * z)
        return self.beta * s * (1.0 - s)

    def d3(self, z):
        if self.kind == "relu":
            return np.zeros_like(z, dtype=np.float64)
        s = expit(self.beta * z)
        return self.beta**2 * s * (1.0 - s) * (1.0 - 2.0 * s)

    def __str__(self):
        return "relu" if self.kind == "relu" else f"softplus(beta={self.beta:g})"


@dataclass(frozen=True, eq=False)
class Network:
    """Layer stack ``W[l] @ a + b[l]``; ``W[l]`` has shape ``(n_out, n_in)``."""

    weights: tuple
    biases: tuple
    activation: Activation
    input_domain: tuple = (0.0, 1.0)
    output_activation: bool = False

    def __post_init__(self):
        ws = tuple(np.array(w, dtype=np.float64) for w in self.weights)
        bs = tuple(np.array(b, dtype=np.float64).reshape(-1) for b in self.biases)
        if not ws or len(ws) != len(bs):
            raise ValueError("need at least one layer and one bias per layer")
        for l, (w, b) in enumerate(zip(ws, bs)):
            if w.ndim != 2 or w.shape[0] != b.shape[0]:
                raise ValueError(f"layer {l}: weight {w.shape} / bias {b.shape} mismatch")
            if l > 0 and w.shape[1] != ws[l - 1].shape[0]:
                raise ValueError(f"layer {l} expects {w.shape[1]} inputs, previous layer gives {ws[l - 1].shape[0]}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {l} has non-finite parameters")
            w.flags.writeable = False
            b.flags.writeable = False
        lo, hi = (float(v) for v in self.input_domain)
        if not lo < hi:
            raise ValueError("input domain needs x_min < x_max")
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)
        object.__setattr__(self, "input_domain", (lo, hi))

    @classmethod
    def random(cls, sizes, activation: Activation, rng: np.random.Generator,
               scale: float | None = None, **kwargs) -> "Network":
        """Draw a network with layer widths ``sizes = [N, h1, ..., C]``.

        Weights and biases are uniform on ``[-s, s]`` with ``s = scale`` or,
        by default, ``1/sqrt(fan_in)``.
        """
        ws, bs = [], []
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            s = scale if scale is not None else 1.0 / np.sqrt(n_in)
            ws.append(rng.uniform(-s, s, size=(n_out, n_in)))
            bs.append(rng.uniform(-s, s, size=n_out))
        return cls(tuple(ws), tuple(bs), activation, **kwargs)

    def replace(self, **changes) -> "Network":
        fields = dict(weights=self.weights, biases=self.biases, activation=self.activation,
                      input_domain=self.input_domain, output_activation=self.output_activation)
        fields.update(changes)
        return Network(**fields)

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def sizes(self) -> list[int]:
        return [self.input_dim] + [w.shape[0] for w in self.weights]

    def activated(self, l: int) -> bool:
        return l < self.n_layers - 1 or self.output_activation

    @property
    def affine(self) -> bool:
        """True when no layer applies the activation (a single linear layer)."""
        return not any(self.activated(l) for l in range(self.n_layers))


@dataclass
class ForwardTrace:
    pre_activations: list
    activations: list
    logits: np.ndarray
    predicted: np.ndarray | int = field(default=0)


def _rows(net: Network, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != net.input_dim:
        raise ValueError(f"input shape {x.shape} does not match input_dim {net.input_dim}")
    return X, single


def _classes(classes, batch: int, n_out: int) -> np.ndarray:
    k = np.broadcast_to(np.asarray(classes, dtype=np.int64), (batch,))
    if np.any(k < 0) or np.any(k >= n_out):
        raise ValueError(f"class index out of range [0, {n_out})")
    return k


def _act(net: Network, l: int, z: np.ndarray):
    """Value and first derivative of the post-layer map (identity when not activated)."""
    if not net.activated(l):
        return z, np.ones_like(z)
    return net.activation(z), net.activation.d1(z)


def _forward_rows(net: Network, X: np.ndarray):
    zs, acts, s1s = [], [], []
    a = X
    # overflow shows up as inf/nan and is reported below
    with np.errstate(over="ignore", invalid="ignore"):
        for l, (w, b) in enumerate(zip(net.weights, net.biases)):
            z = a @ w.T + b
            a, s1 = _act(net, l, z)
            zs.append(z)
            acts.append(a)
            s1s.append(s1)
    if not np.all(np.isfinite(a)):
        raise NonFiniteError("forward pass produced non-finite values")
    return zs, acts, s1s


def forward(net: Network, x) -> ForwardTrace:
    """Run the network, keeping every intermediate.

    ``predicted`` is the argmax of the final scores; ties go to the lowest
    class index.
    """
    X, single = _rows(net, x)
    zs, acts, _ = _forward_rows(net, X)
    k = np.argmax(acts[-1], axis=1)
    if single:
        return ForwardTrace([z[0] for z in zs], [a[0] for a in acts], acts[-1][0], int(k[0]))
    return ForwardTrace(zs, acts, acts[-1], k)


def predict(net: Network, x):
    """Predicted class for one input (int) or a batch (int array)."""
    return forward(net, x).predicted


def _input_gradient_rows(net: Network, X, k, s1s):
    g = np.zeros((X.shape[0], net.output_dim))
    g[np.arange(X.shape[0]), k] = 1.0
    for l in range(net.n_layers - 1, -1, -1):
        g = (g * s1s[l]) @ net.weights[l]
    return g


def input_gradient(net: Network, x, cls) -> np.ndarray:
    """Gradient of score ``cls`` with respect to the input."""
    X, single = _rows(net, x)
    k = _classes(cls, X.shape[0], net.output_dim)
    _, _, s1s = _forward_rows(net, X)
    g = _input_gradient_rows(net, X, k, s1s)
    return g[0] if single else g


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy and its gradient with respect to the logits."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    rows = np.arange(logits.shape[0])
    loss = -logp[rows, labels].mean()
    dlogits = np.exp(logp)
    dlogits[rows, labels] -= 1.0
    return float(loss), dlogits / logits.shape[0]


def parameter_gradient(net: Network, X, labels):
    """Mean softmax cross-entropy over a batch and its parameter gradients.

    Returns ``(loss, grad_weights, grad_biases, logits)`` with one gradient
    array per layer.
    """
    X, _ = _rows(net, X)
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    labels = _classes(labels, X.shape[0], net.output_dim)
    zs, acts, s1s = _forward_rows(net, X)
    loss, delta = softmax_cross_entropy(acts[-1], labels)
    gw, gb = [None] * net.n_layers, [None] * net.n_layers
    for l in range(net.n_layers - 1, -1, -1):
        delta = delta * s1s[l]
        a_in = X if l == 0 else acts[l - 1]
        gw[l] = delta.T @ a_in
        gb[l] = delta.sum(axis=0)
        if l > 0:
            delta = delta @ net.weights[l]
    return loss, gw, gb, acts[-1]


def _require_smooth(net: Network, what: str):
    if not (net.activation.smooth or net.affine):
        raise ValueError(f"{what} needs a twice-differentiable activation; ReLU networks "
                         "have an ill-defined second derivative at their kinks")


def hvp_pass(net: Network, X: np.ndarray, k: np.ndarray, V: np.ndarray) -> dict:
    """Forward and reverse sweeps of the Hessian-vector product, with all intermediates.

    Tangents along ``V`` are pushed through the forward pass (``zdot``) and
    then through the reverse pass that computes the input gradient
    (``gdot``). ``gdot[0]`` is ``H @ v`` for each row. The cache is reused by
    the curvature penalty's parameter gradient.
    """
    L = net.n_layers
    zs, acts, s1s, s2s, zdots, adots = [], [], [], [], [], []
    a, adot = X, V
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w.T + b
        zdot = adot @ w.T
        if net.activated(l):
            a, s1, s2 = net.activation(z), net.activation.d1(z), net.activation.d2(z)
        else:
            a, s1, s2 = z, np.ones_like(z), np.zeros_like(z)
        adot = s1 * zdot
        zs.append(z)
        acts.append(a)
        s1s.append(s1)
        s2s.append(s2)
        zdots.append(zdot)
        adots.append(adot)
    if not np.all(np.isfinite(a)):
        raise NonFiniteError("forward pass produced non-finite values")

    B = X.shape[0]
    ga = [None] * (L + 1)
    gd = [None] * (L + 1)
    ga[L] = np.zeros((B, net.output_dim))
    ga[L][np.arange(B), k] = 1.0
    gd[L] = np.zeros((B, net.output_dim))
    deltas, ddeltas = [None] * L, [None] * L
    for l in range(L - 1, -1, -1):
        deltas[l] = ga[l + 1] * s1s[l]
        ddeltas[l] = gd[l + 1] * s1s[l] + ga[l + 1] * s2s[l] * zdots[l]
        ga[l] = deltas[l] @ net.weights[l]
        gd[l] = ddeltas[l] @ net.weights[l]
    return dict(X=X, V=V, z=zs, a=acts, s1=s1s, s2=s2s, zdot=zdots, adot=adots,
                ga=ga, gd=gd, delta=deltas, ddelta=ddeltas)


def hessian_vector_product(net: Network, x, cls, v) -> np.ndarray:
    """``H(g_cls)(x) @ v`` without forming the input Hessian."""
    _require_smooth(net, "hessian_vector_product")
    X, single = _rows(net, x)
    V = np.asarray(v, dtype=np.float64)
    V = np.broadcast_to(V, X.shape) if V.ndim == 1 else V
    if V.shape != X.shape:
        raise ValueError(f"direction shape {np.shape(v)} does not match input {X.shape}")
    k = _classes(cls, X.shape[0], net.output_dim)
    hv = hvp_pass(net, X, k, V)["gd"][0]
    return hv[0] if single else hv


def exact_hessian(net: Network, x, cls) -> np.ndarray:
    """Full ``N x N`` input Hessian of score ``cls`` at a single input.

    Propagates the Jacobian and second-derivative tensor of every layer
    forward from the input. Costs ``O(width * N^2)`` memory per layer, so it
    is meant as an oracle for small ``N``.
    """
    _require_smooth(net, "exact_hessian")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != net.input_dim:
        raise ValueError("exact_hessian takes a single input vector")
    k = int(_classes(cls, 1, net.output_dim)[0])
    n = net.input_dim
    a = x
    jac = np.eye(n)
    sec = np.zeros((n, n, n))
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = w @ a + b
        jz = w @ jac
        tz = np.tensordot(w, sec, axes=(1, 0))
        if net.activated(l):
            s1, s2 = net.activation.d1(z), net.activation.d2(z)
            a = net.activation(z)
            jac = s1[:, None] * jz
            sec = s2[:, None, None] * jz[:, :, None] * jz[:, None, :] + s1[:, None, None] * tz
        else:
            a, jac, sec = z, jz, tz
    return sec[k]
