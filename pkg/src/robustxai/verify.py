"""Built-in oracle suites.

Each suite checks a fast implementation against an independent, slower
route such as finite differences or the full Hessian, and returns a :class:`SuiteResult` with the statistics it
measured. :func:`run_all` is what ``robustxai verify`` calls.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bounds import KinkAtEndpointError, PathSpec, beta_interchange, kink_sum_check, theorem1_bound
from .network import Activation, Network, exact_hessian, forward, hessian_vector_product, input_gradient, \
    parameter_gradient
from .numerics import frobenius_norm, make_rng
from .training import curvature_penalty, estimate_hessian_sq_norm

__all__ = [
    "SuiteResult",
    "SUITES",
    "random_softplus_net",
    "estimator_fidelity",
    "suite_estimator",
    "suite_beta_interchange",
    "suite_kink_sum",
    "suite_bound_soundness",
    "suite_finite_difference",
    "run_all",
    "toy_kink_network",
    "TOY_PATH",
]

BETAS = (0.5, 1.0, 5.0, 10.0)


@dataclass
class SuiteResult:
    name: str
    passed: bool
    stats: dict = field(default_factory=dict)

    def line(self) -> str:
        parts = " ".join(f"{k}={_short(v)}" for k, v in self.stats.items())
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {parts}"


def _short(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.3g}"
    return str(v)


def random_softplus_net(rng, max_depth=4, max_width=16, scale=1.0, beta=None) -> Network:
    """Softplus net with random depth, widths and ``beta``; weights U[-scale, scale]."""
    depth = int(rng.integers(1, max_depth + 1))
    sizes = [int(s) for s in rng.integers(1, max_width + 1, size=depth + 1)]
    beta = float(rng.choice(BETAS)) if beta is None else beta
    return Network.random(sizes, Activation.softplus(beta), rng, scale=scale)


def toy_kink_network() -> Network:
    """Two ReLU units ``w1 = (1, 1)/sqrt2``, ``w2 = (1, -1)/sqrt2`` summed by the output.

    The input gradient is ``w1``, ``w2``, ``w1 + w2`` or zero depending on
    which unit is active.
    """
    r = 1.0 / np.sqrt(2.0)
    w = np.array([[r, r], [r, -r]])
    return Network((w, np.array([[1.0, 1.0]])), (np.zeros(2), np.zeros(1)), Activation.relu(),
                   input_domain=(-3.0, 3.0))


# Vertical segment x1 = 1: only unit 2 is active at the start, only unit 1
# at the end, and both in between, so the gradient goes w2 -> w1 + w2 -> w1.
TOY_PATH = PathSpec(np.array([1.0, -2.0]), np.array([1.0, 2.0]))


def estimator_fidelity(n_nets=50, batch=128, samples=1, seed=0, sizes=(8, 16, 8, 1), beta=10.0):
    """Relative error of the batch-mean probe estimate of ``||H||_F^2`` on random nets.

    Returns one relative error per network. Inputs are uniform on [0, 1].
    """
    errs = []
    for i in range(n_nets):
        rng = make_rng(seed, 10, i)
        net = Network.random(list(sizes), Activation.softplus(beta), rng, scale=1.0)
        X = rng.random((batch, sizes[0]))
        exact = np.mean([frobenius_norm(exact_hessian(net, x, 0)) ** 2 for x in X])
        est = np.mean([estimate_hessian_sq_norm(net, x, 0, samples, rng).value for x in X])
        errs.append(abs(est - exact) / exact)
    return np.array(errs)


def suite_estimator(seed=0, draws=100_000, fidelity_nets=10) -> SuiteResult:
    """Unbiasedness of the single-probe estimator, plus its batch-mean error.

    The gate is the bias check: the mean of ``draws`` single-probe estimates
    on a small net must lie within 3 standard errors of the exact value.
    The batch-mean relative error on 8-16-8-1 nets is reported alongside.
    """
    rng = make_rng(seed, 1)
    net = Network.random([6, 10, 1], Activation.softplus(2.0), rng, scale=1.0)
    x = rng.random(6)
    exact = frobenius_norm(exact_hessian(net, x, 0)) ** 2
    est = estimate_hessian_sq_norm(net, x, 0, draws, rng)
    se = est.per_sample.std(ddof=1) / np.sqrt(draws)
    z = (est.value - exact) / se
    fid1 = estimator_fidelity(fidelity_nets, seed=seed, samples=1)
    fid10 = estimator_fidelity(fidelity_nets, seed=seed, samples=10)
    return SuiteResult("estimator", bool(abs(z) <= 3.0), {
        "exact": exact, "mean": est.value, "z": z,
        "batch_rel_err_1": float(fid1.mean()), "batch_rel_err_10": float(fid10.mean()),
    })


def suite_beta_interchange(seed=0, n_nets=20, n_inputs=1000) -> SuiteResult:
    worst_out = worst_trip = 0.0
    for i in range(n_nets):
        rng = make_rng(seed, 2, i)
        sizes = [int(s) for s in rng.integers(1, 17, size=4)]
        net = Network.random(sizes, Activation.softplus(1.0), rng, scale=1.0)
        other = beta_interchange(net, 10.0)
        X = rng.uniform(-2, 2, size=(n_inputs, sizes[0]))
        a = forward(net, X).logits
        b = forward(other, X).logits
        worst_out = max(worst_out, float(np.max(np.abs(a - b) / np.maximum(np.abs(a), 1e-300))))
        back = beta_interchange(other, 1.0)
        for w0, w1 in zip(net.weights + net.biases, back.weights + back.biases):
            worst_trip = max(worst_trip, float(np.max(np.abs(w0 - w1))))
    return SuiteResult("beta-interchange", worst_out <= 1e-9 and worst_trip <= 1e-12,
                       {"max_rel_output_dev": worst_out, "max_roundtrip_dev": worst_trip})


def suite_kink_sum(seed=0, n_nets=100) -> SuiteResult:
    toy = kink_sum_check(toy_kink_network(), TOY_PATH, cls=0)
    toy_err = float(np.max(np.abs(toy.measured - np.array([0.0, -np.sqrt(2.0)]))))
    worst = 0.0
    violations = kinks = 0
    done = 0
    i = 0
    while done < n_nets:
        rng = make_rng(seed, 3, i)
        i += 1
        net = Network.random([2, 8, 8, 1], Activation.relu(), rng, scale=1.0)
        x = rng.uniform(-1, 1, 2)
        path = PathSpec(x, x + rng.normal(0, 0.5, 2))
        try:
            res = kink_sum_check(net, path)
        except KinkAtEndpointError:
            continue
        done += 1
        kinks += len(res.kinks)
        worst = max(worst, float(np.max(np.abs(res.formula - res.measured))))
        violations += res.change_sq > res.bound
    ok = toy_err <= 1e-12 and len(toy.kinks) == 2 and worst <= 1e-9 and violations == 0
    return SuiteResult("kink-sum", ok, {"toy_kinks": len(toy.kinks), "toy_err": toy_err,
                                        "max_formula_dev": worst, "violations": violations,
                                        "total_kinks": kinks})


def suite_bound_soundness(seed=0, n_nets=1000, n_inputs=10) -> SuiteResult:
    violations = 0
    min_slack = np.inf
    for i in range(n_nets):
        rng = make_rng(seed, 4, i)
        net = random_softplus_net(rng)
        cls = int(rng.integers(net.output_dim))
        bound = theorem1_bound(net, cls).bound
        for x in rng.uniform(-2, 2, size=(n_inputs, net.input_dim)):
            h = frobenius_norm(exact_hessian(net, x, cls))
            min_slack = min(min_slack, bound - h)
            violations += h > bound
    return SuiteResult("bound-soundness", violations == 0,
                       {"nets": n_nets, "violations": violations, "min_slack": min_slack})


def _central(f, theta, h=1e-5):
    g = np.zeros_like(theta)
    for j in range(theta.size):
        e = np.zeros_like(theta)
        e.flat[j] = h
        g.flat[j] = (f(theta + e) - f(theta - e)) / (2 * h)
    return g


def suite_finite_difference(seed=0, n_cases=100) -> SuiteResult:
    """Input gradients, parameter gradients, HVPs and the penalty gradient.

    Tolerances: input and parameter gradients 1e-6 absolute against central
    differences (step 1e-5); HVP 1e-8 against the full Hessian; Hessian
    symmetry 1e-9; penalty gradient 1e-5 relative.
    """
    dev = dict(input_grad=0.0, param_grad=0.0, hvp=0.0, symmetry=0.0, penalty_rel=0.0)
    for i in range(n_cases):
        rng = make_rng(seed, 5, i)
        net = random_softplus_net(rng, max_width=8)
        x = rng.uniform(-1, 1, net.input_dim)
        cls = int(rng.integers(net.output_dim))

        fd = _central(lambda u: forward(net, u).logits[cls], x)
        dev["input_grad"] = max(dev["input_grad"], float(np.max(np.abs(fd - input_gradient(net, x, cls)))))

        H = exact_hessian(net, x, cls)
        v = rng.standard_normal(net.input_dim)
        dev["hvp"] = max(dev["hvp"], float(np.max(np.abs(H @ v - hessian_vector_product(net, x, cls, v)))))
        dev["symmetry"] = max(dev["symmetry"], float(np.max(np.abs(H - H.T))))

        X = rng.uniform(-1, 1, (3, net.input_dim))
        y = rng.integers(net.output_dim, size=3)
        _, gw, gb, _ = parameter_gradient(net, X, y)
        l = int(rng.integers(net.n_layers))
        for which, grads in (("weights", gw), ("biases", gb)):
            base = getattr(net, which)

            def loss(theta, which=which, base=base):
                params = list(base)
                params[l] = theta
                return parameter_gradient(net.replace(**{which: tuple(params)}), X, y)[0]

            fd = _central(loss, np.array(base[l]))
            dev["param_grad"] = max(dev["param_grad"], float(np.max(np.abs(fd - grads[l]))))

        V = rng.standard_normal(X.shape)
        k = rng.integers(net.output_dim, size=3)
        _, pw, _ = curvature_penalty(net, X, k, V)

        def penalty(theta):
            ws = list(net.weights)
            ws[l] = theta
            return curvature_penalty(net.replace(weights=tuple(ws)), X, k, V)[0].mean()

        fd = _central(penalty, np.array(net.weights[l]), h=1e-6)
        scale = max(float(np.max(np.abs(fd))), 1e-8)
        dev["penalty_rel"] = max(dev["penalty_rel"], float(np.max(np.abs(fd - pw[l]))) / scale)
    ok = (dev["input_grad"] <= 1e-6 and dev["param_grad"] <= 1e-6 and dev["hvp"] <= 1e-8
          and dev["symmetry"] <= 1e-9 and dev["penalty_rel"] <= 1e-5)
    return SuiteResult("finite-difference", ok, {"cases": n_cases, **dev})


SUITES = {
    "estimator": suite_estimator,
    "beta-interchange": suite_beta_interchange,
    "kink-sum": suite_kink_sum,
    "bound-soundness": suite_bound_soundness,
    "finite-difference": suite_finite_difference,
}


def run_all(seed=0, quick=False) -> list[SuiteResult]:
    """Run every suite. ``quick`` shrinks the sample counts for smoke tests."""
    if quick:
        return [
            suite_estimator(seed, draws=20_000, fidelity_nets=2),
            suite_beta_interchange(seed, n_nets=4, n_inputs=100),
            suite_kink_sum(seed, n_nets=20),
            suite_bound_soundness(seed, n_nets=50, n_inputs=3),
            suite_finite_difference(seed, n_cases=10),
        ]
    return [fn(seed) for fn in SUITES.values()]
