import numpy as np
import pytest

from robustxai.explain import (ExplanationMap, LrpConfig, Method, explain, explain_batch, gradient_map,
                               gradient_times_input_map, guided_backprop_map, integrated_gradients_map, lrp_map,
                               normalize_map, normalize_rows)
from robustxai.network import Activation, Network, forward, input_gradient, predict
from robustxai.numerics import make_rng
from robustxai.verify import random_softplus_net

from conftest import linear_net


def _net_with_classes(rng, sizes=(6, 8, 8, 3), beta=5.0):
    return Network.random(list(sizes), Activation.softplus(beta), rng, scale=1.0)


def test_gradient_map_examples(small_softplus, rng):
    w = np.array([0.5, -1.0, 2.0])
    m = gradient_map(linear_net(w), np.array([0.1, 0.2, 0.3]))
    assert np.array_equal(m.values, w) and m.cls == 0 and not m.normalized
    x = rng.uniform(0, 1, 5)
    m = gradient_map(small_softplus, x)
    assert m.cls == predict(small_softplus, x)
    assert np.array_equal(m.values, input_gradient(small_softplus, x, m.cls))


def test_gradient_times_input_examples(small_softplus, rng):
    assert np.array_equal(gradient_times_input_map(small_softplus, np.zeros(5)).values, np.zeros(5))
    net = linear_net([1.0, -2.0])
    assert np.array_equal(gradient_times_input_map(net, [3.0, 1.0]).values, [3.0, -2.0])
    x = rng.uniform(0, 1, 3)
    lin = linear_net([0.3, -0.7, 1.1])
    assert gradient_times_input_map(lin, x).values.sum() == pytest.approx(forward(lin, x).logits[0], rel=1e-14)
    x = rng.uniform(0, 1, 5)
    g = gradient_map(small_softplus, x).values
    assert np.array_equal(gradient_times_input_map(small_softplus, x).values, x * g)


def test_integrated_gradients_examples():
    w = np.array([0.4, -1.5, 2.0])
    x = np.array([0.3, 0.9, 0.5])
    for steps in (1, 7, 64):
        assert np.allclose(integrated_gradients_map(linear_net(w), x, baseline=np.zeros(3), steps=steps).values,
                           x * w, rtol=1e-14, atol=0)
    net = random_softplus_net(make_rng(0))
    x = make_rng(1).uniform(0, 1, net.input_dim)
    assert np.array_equal(integrated_gradients_map(net, x, baseline=x).values, np.zeros(net.input_dim))


def test_integrated_gradients_default_baseline_is_domain_minimum():
    rng = make_rng(2)
    net = Network.random([4, 6, 2], Activation.softplus(3.0), rng, input_domain=(-1.0, 1.0))
    x = rng.uniform(-1, 1, 4)
    a = integrated_gradients_map(net, x).values
    b = integrated_gradients_map(net, x, baseline=np.full(4, -1.0)).values
    assert np.array_equal(a, b)


def test_integrated_gradients_completeness_and_convergence():
    worst = worst_change = 0.0
    for i in range(20):
        rng = make_rng(40, i)
        net = _net_with_classes(rng)
        x = rng.uniform(0, 1, 6)
        m = integrated_gradients_map(net, x, steps=256)
        gap = forward(net, x).logits[m.cls] - forward(net, np.zeros(6)).logits[m.cls]
        worst = max(worst, abs(m.values.sum() - gap))
        coarse = integrated_gradients_map(net, x, steps=128).values.sum()
        worst_change = max(worst_change, abs(coarse - m.values.sum()))
    assert worst <= 1e-3
    assert worst_change <= 1e-4


def test_integrated_gradients_rejects_zero_steps(small_softplus):
    with pytest.raises(ValueError):
        integrated_gradients_map(small_softplus, np.zeros(5), steps=0)


def test_guided_backprop_equals_gradient_when_signals_are_positive():
    rng = make_rng(3)
    ws = (rng.uniform(0, 1, (5, 4)), rng.uniform(0, 1, (3, 5)))
    net = Network(ws, (np.zeros(5), np.zeros(3)), Activation.relu())
    x = rng.uniform(0, 1, 4)
    assert np.allclose(guided_backprop_map(net, x).values, gradient_map(net, x).values, rtol=1e-15)


def test_guided_backprop_blocks_negative_unit():
    # single active ReLU unit feeding the only score with a negative weight
    net = Network((np.array([[1.0, 2.0]]), np.array([[-3.0]])), (np.zeros(1), np.zeros(1)), Activation.relu())
    x = np.array([0.5, 0.5])
    assert np.array_equal(gradient_map(net, x).values, [-3.0, -6.0])
    assert np.array_equal(guided_backprop_map(net, x).values, [0.0, 0.0])


@pytest.mark.parametrize("act", [Activation.relu(), Activation.softplus(2.0)])
def test_guided_backprop_sign_flip_never_increases(act):
    rng = make_rng(4)
    for _ in range(20):
        w1 = rng.uniform(-1, 1, (1, 3))
        w2 = abs(rng.uniform(0.1, 1.0))
        x = rng.uniform(0, 1, 3)
        pos = Network((w1, np.array([[w2]])), (np.array([0.5]), np.zeros(1)), act)
        neg = pos.replace(weights=(w1, np.array([[-w2]])))
        mp = guided_backprop_map(pos, x, cls=0).values
        mn = guided_backprop_map(neg, x, cls=0).values
        assert np.all(np.abs(mn) <= np.abs(mp) + 1e-15)
        assert np.array_equal(mn, np.zeros(3))


def test_lrp_hidden_layer_example():
    # x1 = (1, 1) into W = [[1, 2]]: z+ splits a unit relevance 1/3 : 2/3
    net = Network((np.eye(2), np.array([[1.0, 2.0]])), (np.zeros(2), np.zeros(1)), Activation.relu())
    from robustxai.explain import _lrp_rows
    a = forward(net, np.array([1.0, 1.0])).activations[0]
    assert np.array_equal(a, [1.0, 1.0])
    # relevance reaching the hidden layer equals the z+ shares
    wp = np.maximum(net.weights[1], 0)
    shares = a * wp[0] / (a @ wp[0])
    assert np.allclose(shares, [1 / 3, 2 / 3], rtol=1e-15)
    maps, _ = _lrp_rows(net, np.array([[1.0, 1.0]]), np.array([0]), LrpConfig(epsilon=0.0))
    assert maps.sum() == pytest.approx(1.0, rel=1e-12)


def _lrp_layer_sums(net, x, eps):
    """Relevance totals per layer, output first, re-derived with the public rules."""
    acts = forward(net, x).activations
    k = predict(net, x)
    R = np.zeros(net.output_dim)
    R[k] = 1.0
    sums = [R.sum()]
    for l in range(net.n_layers - 1, 0, -1):
        wp = np.maximum(net.weights[l], 0)
        z = acts[l - 1] * wp
        d = z.sum(axis=1)
        d = d + eps * np.where(d >= 0, 1, -1)
        R = (z * (R / d)[:, None]).sum(axis=0)
        sums.append(R.sum())
    sums.append(lrp_map(net, x, LrpConfig(epsilon=eps)).values.sum())
    return sums


@pytest.mark.parametrize("eps", [0.0, 1e-9])
def test_lrp_conservation(eps):
    worst = 0.0
    checked = 0
    for i in range(200):
        rng = make_rng(50, i)
        net = Network.random([6, 8, 8, 3], Activation.relu(), rng, scale=1.0)
        x = rng.uniform(0, 1, 6)
        # conservation is only claimed when no denominator vanishes
        if lrp_map(net, x, LrpConfig(epsilon=0.0)).zero_denominators:
            continue
        sums = _lrp_layer_sums(net, x, eps)
        assert sums[0] == 1.0
        worst = max(worst, max(abs(s - 1.0) for s in sums))
        checked += 1
    assert checked >= 30
    assert worst <= (1e-9 if eps == 0 else 1e-6)


def test_lrp_zero_denominators_are_counted():
    # both hidden units reach the score only through negative weights, so z+ has nothing to share
    net = Network((np.eye(2), np.array([[-1.0, -1.0]])), (np.zeros(2), np.zeros(1)), Activation.relu())
    m = lrp_map(net, np.array([0.5, 0.5]), LrpConfig(epsilon=0.0))
    assert m.zero_denominators == 1
    assert np.array_equal(m.values, np.zeros(2))


def test_lrp_needs_two_layers():
    with pytest.raises(ValueError):
        lrp_map(linear_net([1.0, 2.0]), np.zeros(2))


def test_lrp_bounds_validation():
    net = Network.random([3, 4, 2], Activation.relu(), make_rng(0))
    with pytest.raises(ValueError):
        LrpConfig(lower=1.0, upper=0.0).bounds(net)
    lo, hi = LrpConfig().bounds(net)
    assert np.array_equal(lo, np.zeros(3)) and np.array_equal(hi, np.ones(3))


def test_normalize_examples():
    m = normalize_map(ExplanationMap(np.array([1.0, -1.0, 2.0]), Method.GRADIENT, 0))
    assert np.array_equal(m.values, [0.25, 0.25, 0.5]) and m.normalized and m.l1_mass == 4.0
    pix, _ = normalize_rows(np.array([[1.0, -2.0, 3.0, 0.0, 0.0, 0.0]]), channels=3)
    assert np.array_equal(pix, [[1.0, 0.0]])
    raw_pix = np.abs(np.array([1.0, -2.0, 3.0])).sum()
    assert raw_pix == 6.0
    again = normalize_map(m)
    assert np.array_equal(again.values, m.values)


def test_normalize_zero_map_is_flagged():
    m = normalize_map(ExplanationMap(np.zeros(4), Method.LRP, 0))
    assert not m.normalized and np.array_equal(m.values, np.zeros(4))
    with pytest.raises(ValueError):
        normalize_rows(np.ones((1, 5)), channels=2)


@pytest.mark.parametrize("method", list(Method))
def test_every_method_gives_unit_mass(method):
    rng = make_rng(60)
    net = _net_with_classes(rng)
    for x in rng.uniform(0, 1, (100, 6)):
        m = normalize_map(explain(net, x, method))
        if m.normalized:
            assert abs(np.abs(m.values).sum() - 1.0) <= 1e-9
        else:
            assert np.all(m.values == 0)
        assert np.all(np.isfinite(m.values))


def test_batch_matches_single_and_class_is_stable(small_softplus, rng):
    X = rng.uniform(0, 1, (6, 5))
    for method in Method:
        maps, k, _ = explain_batch(small_softplus, X, method)
        assert np.array_equal(k, predict(small_softplus, X))
        for i in range(6):
            single = explain(small_softplus, X[i], method)
            assert single.cls == k[i]
            assert np.allclose(single.values, maps[i], rtol=1e-13, atol=1e-15)


def test_explicit_class_overrides_prediction(small_softplus, rng):
    x = rng.uniform(0, 1, 5)
    k = (predict(small_softplus, x) + 1) % 3
    assert gradient_map(small_softplus, x, cls=k).cls == k
    assert np.array_equal(gradient_map(small_softplus, x, cls=k).values, input_gradient(small_softplus, x, k))
