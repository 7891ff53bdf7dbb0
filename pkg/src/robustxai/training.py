"""Momentum SGD with weight decay plus an optional Hessian-norm penalty.

The penalty term is ``zeta * mean_x ||H(x)||_F^2`` where ``H`` is the input
Hessian of the winning-class score. It is estimated with one Gaussian probe
``v`` per input, using ``E ||H v||^2 = ||H||_F^2``, and differentiated with
``v`` held fixed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .network import Activation, Network, NonFiniteError, _classes, _rows, hvp_pass, parameter_gradient
from .numerics import make_rng

log = logging.getLogger(__name__)

__all__ = [
    "TrainConfig",
    "HessianEstimate",
    "MomentumState",
    "StepLoss",
    "EpochMetrics",
    "TrainResult",
    "TrainingDiverged",
    "estimate_hessian_sq_norm",
    "curvature_penalty",
    "apply_update",
    "sgd_step",
    "train",
]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 0.0
    curvature_weight: float = 0.0
    epochs: int = 50
    batch_size: int = 32
    seed: int = 0
    lr_decay: float = 0.98

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.weight_decay < 0 or self.curvature_weight < 0:
            raise ValueError("weight_decay and curvature_weight must be non-negative")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if not 0 < self.lr_decay <= 1:
            raise ValueError("lr_decay must be in (0, 1]")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass
class HessianEstimate:
    value: float
    samples: int
    per_sample: np.ndarray


@dataclass
class MomentumState:
    weights: list
    biases: list

    @classmethod
    def zeros(cls, net: Network) -> "MomentumState":
        return cls([np.zeros_like(w) for w in net.weights], [np.zeros_like(b) for b in net.biases])


@dataclass
class StepLoss:
    data_loss: float
    hessian_sq: float
    curvature_term: float

    @property
    def total(self) -> float:
        return self.data_loss + self.curvature_term


@dataclass
class EpochMetrics:
    epoch: int
    loss: float
    curvature_term: float
    accuracy: float
    hessian_sq: float | None = None


class TrainingDiverged(NonFiniteError):
    def __init__(self, epoch: int, step: int, metrics=None):
        super().__init__(f"training diverged at epoch {epoch}, step {step}")
        self.epoch = epoch
        self.step = step
        self.metrics = list(metrics or [])


@dataclass
class TrainResult:
    network: Network
    metrics: list = field(default_factory=list)


def estimate_hessian_sq_norm(net: Network, x, cls, samples: int, rng: np.random.Generator) -> HessianEstimate:
    """Monte-Carlo estimate of ``||H||_F^2`` at a single input from ``samples`` probes."""
    if not (net.activation.smooth or net.affine):
        raise ValueError("Hessian estimation needs a Softplus network")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    X, _ = _rows(net, x)
    if X.shape[0] != 1:
        raise ValueError("estimate_hessian_sq_norm takes a single input")
    X = np.repeat(X, samples, axis=0)
    V = rng.standard_normal(X.shape)
    k = _classes(cls, samples, net.output_dim)
    hv = hvp_pass(net, X, k, V)["gd"][0]
    per = np.sum(hv * hv, axis=1)
    return HessianEstimate(float(per.mean()), samples, per)


def curvature_penalty(net: Network, X, classes, V):
    """``||H v||^2`` per row and the parameter gradient of its batch mean.

    Returns ``(values, grad_weights, grad_biases)``. The gradient treats the
    probes ``V`` as constants; it is the reverse sweep through
    :func:`~robustxai.network.hvp_pass`.
    """
    if not net.activation.smooth:
        raise ValueError("the curvature penalty needs a Softplus network")
    X, _ = _rows(net, X)
    V = np.asarray(V, dtype=np.float64).reshape(X.shape)
    k = _classes(classes, X.shape[0], net.output_dim)
    c = hvp_pass(net, X, k, V)
    L, B = net.n_layers, X.shape[0]
    hv = c["gd"][0]
    values = np.sum(hv * hv, axis=1)

    gw = [np.zeros_like(w) for w in net.weights]
    gb = [np.zeros_like(b) for b in net.biases]
    s1_bar, s2_bar, zdot_bar = [None] * L, [None] * L, [None] * L

    # reverse of the gradient sweep: ga[l] = delta[l] @ W, gd[l] = ddelta[l] @ W
    ga_bar = np.zeros_like(X)
    gd_bar = 2.0 * hv / B
    for l in range(L):
        w = net.weights[l]
        delta_bar = ga_bar @ w.T
        ddelta_bar = gd_bar @ w.T
        gw[l] += c["delta"][l].T @ ga_bar + c["ddelta"][l].T @ gd_bar
        ga_next, gd_next = c["ga"][l + 1], c["gd"][l + 1]
        # delta = ga_next * s1 ; ddelta = gd_next * s1 + ga_next * s2 * zdot
        s1_bar[l] = delta_bar * ga_next + ddelta_bar * gd_next
        s2_bar[l] = ddelta_bar * ga_next * c["zdot"][l]
        zdot_bar[l] = ddelta_bar * ga_next * c["s2"][l]
        ga_bar = delta_bar * c["s1"][l] + ddelta_bar * c["s2"][l] * c["zdot"][l]
        gd_bar = ddelta_bar * c["s1"][l]

    # reverse of the tangent forward sweep
    a_bar = np.zeros((B, net.output_dim))
    adot_bar = np.zeros((B, net.output_dim))
    for l in range(L - 1, -1, -1):
        z = c["z"][l]
        s1_bar[l] = s1_bar[l] + adot_bar * c["zdot"][l]
        zdot_bar[l] = zdot_bar[l] + adot_bar * c["s1"][l]
        if net.activated(l):
            d3 = net.activation.d3(z)
        else:
            d3 = np.zeros_like(z)
        z_bar = a_bar * c["s1"][l] + s1_bar[l] * c["s2"][l] + s2_bar[l] * d3
        a_in = X if l == 0 else c["a"][l - 1]
        adot_in = V if l == 0 else c["adot"][l - 1]
        gw[l] += z_bar.T @ a_in + zdot_bar[l].T @ adot_in
        gb[l] += z_bar.sum(axis=0)
        if l > 0:
            a_bar = z_bar @ net.weights[l]
            adot_bar = zdot_bar[l] @ net.weights[l]
    return values, gw, gb


def apply_update(net: Network, grad_w, grad_b, cfg: TrainConfig, state: MomentumState, lr: float):
    """Momentum SGD with decoupled-into-velocity weight decay.

    ``u <- momentum * u + (grad + weight_decay * w)``; ``w <- w - lr * u``.
    With ``momentum = 0`` this is exactly ``w <- w - lr * (grad + weight_decay * w)``.
    """
    new_w, new_b, vel_w, vel_b = [], [], [], []
    for w, b, gw, gb, uw, ub in zip(net.weights, net.biases, grad_w, grad_b, state.weights, state.biases):
        uw = cfg.momentum * uw + (gw + cfg.weight_decay * w)
        ub = cfg.momentum * ub + (gb + cfg.weight_decay * b)
        vel_w.append(uw)
        vel_b.append(ub)
        new_w.append(w - lr * uw)
        new_b.append(b - lr * ub)
    return net.replace(weights=tuple(new_w), biases=tuple(new_b)), MomentumState(vel_w, vel_b)


def sgd_step(net: Network, X, y, cfg: TrainConfig, state: MomentumState, rng: np.random.Generator,
             lr: float | None = None):
    """One optimisation step on a mini-batch.

    Returns ``(network, state, StepLoss, logits)``; ``logits`` are from the
    pre-update forward pass. Raises :class:`NonFiniteError` instead of
    applying a step with a non-finite loss or gradient.
    """
    lr = cfg.learning_rate if lr is None else lr
    loss, gw, gb, logits = parameter_gradient(net, X, y)
    hess_sq = 0.0
    if cfg.curvature_weight > 0:
        if not net.activation.smooth:
            raise ValueError("curvature_weight > 0 requires a Softplus network")
        k = np.argmax(logits, axis=1)
        V = rng.standard_normal(np.shape(X))
        values, pw, pb = curvature_penalty(net, X, k, V)
        hess_sq = float(values.mean())
        gw = [g + cfg.curvature_weight * p for g, p in zip(gw, pw)]
        gb = [g + cfg.curvature_weight * p for g, p in zip(gb, pb)]
    step = StepLoss(loss, hess_sq, cfg.curvature_weight * hess_sq)
    finite = np.isfinite(step.total) and all(np.all(np.isfinite(g)) for g in gw + gb)
    if not finite:
        raise NonFiniteError("non-finite loss or gradient")
    net, state = apply_update(net, gw, gb, cfg, state, lr)
    return net, state, step, logits


def train(X, y, cfg: TrainConfig, sizes, activation: Activation, input_domain=(0.0, 1.0),
          init: Network | None = None) -> TrainResult:
    """Train a classifier with layer widths ``sizes`` (input first, classes last).

    Shuffling, initialisation and curvature probes use independent streams
    derived from ``cfg.seed``, so the result is a pure function of the
    arguments.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[0] != y.shape[0]:
        raise ValueError("need a non-empty 2-d feature array with one label per row")
    if sizes[0] != X.shape[1]:
        raise ValueError(f"architecture expects {sizes[0]} inputs, data has {X.shape[1]}")
    if y.min() < 0 or y.max() >= sizes[-1]:
        raise ValueError("labels out of range for the output layer")
    if cfg.curvature_weight > 0 and not activation.smooth:
        raise ValueError("curvature_weight > 0 requires a Softplus activation")

    net = init if init is not None else Network.random(sizes, activation, make_rng(cfg.seed, 0),
                                                       input_domain=input_domain)
    shuffle_rng = make_rng(cfg.seed, 1)
    probe_rng = make_rng(cfg.seed, 2)
    state = MomentumState.zeros(net)
    metrics = []
    n = X.shape[0]
    for epoch in range(cfg.epochs):
        lr = cfg.learning_rate * cfg.lr_decay**epoch
        order = shuffle_rng.permutation(n)
        loss_sum = curv_sum = hess_sum = 0.0
        correct = 0
        for step, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            try:
                net, state, sl, logits = sgd_step(net, X[idx], y[idx], cfg, state, probe_rng, lr)
            except NonFiniteError:
                raise TrainingDiverged(epoch, step, metrics) from None
            m = len(idx)
            loss_sum += sl.data_loss * m
            curv_sum += sl.curvature_term * m
            hess_sum += sl.hessian_sq * m
            correct += int(np.sum(np.argmax(logits, axis=1) == y[idx]))
        metrics.append(EpochMetrics(epoch, loss_sum / n, curv_sum / n, correct / n,
                                    hess_sum / n if cfg.curvature_weight > 0 else None))
        log.debug("epoch %d loss %.4f acc %.3f", epoch, loss_sum / n, correct / n)
    return TrainResult(net, metrics)
