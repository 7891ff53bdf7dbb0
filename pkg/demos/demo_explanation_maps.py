"""
Explanation maps on a small classifier
======================================

Train a Softplus network on synthetic blobs, then compare the five
explanation methods on one test point.
"""

# %%
# Data and model
# --------------
# Four Gaussian blobs in eight dimensions, scaled into [0, 1].
import numpy as np

from robustxai import Activation, TrainConfig, make_blobs, train
from robustxai.explain import Method, explain, normalize_map
from robustxai.network import forward

ds = make_blobs(600, 4, dim=8, seed=0, separation=6.0)
train_set, test_set = ds.split(500)
cfg = TrainConfig(learning_rate=0.05, momentum=0.9, batch_size=16, epochs=20, seed=0)
result = train(train_set.X, train_set.y, cfg, [8, 16, 16, 4], Activation.softplus(5.0))
net = result.network
acc = np.mean(forward(net, test_set.X).predicted == test_set.y)
print(f"test accuracy {acc:.3f}")

# %%
# One map per method
# ------------------
# Every method explains the predicted class. Normalised maps have unit L1
# mass, so they can be compared directly.
x = test_set.X[0]
for method in Method:
    m = normalize_map(explain(net, x, method))
    print(f"{method.value:>10s}  class {m.cls}  " + " ".join(f"{v:6.3f}" for v in m.values))

# %%
# Integrated gradients add up
# ---------------------------
# The attributions sum to the change in the class score between the
# baseline (the all-zero input here) and ``x``.
ig = explain(net, x, "intgrad", steps=256)
gap = forward(net, x).logits[ig.cls] - forward(net, np.zeros(8)).logits[ig.cls]
print(f"sum of attributions {ig.values.sum():.6f}, score gap {gap:.6f}")
