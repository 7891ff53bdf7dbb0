"""
Regularisers and explanation robustness
=======================================

Train the same architecture with different regularisers. For each run we
print the certificate next to the measured curvature, along with how well
gradient maps hold up under Gaussian noise.
"""

# %%
import numpy as np

from robustxai import Activation, TrainConfig, make_blobs, train
from robustxai.bounds import theorem1_bound
from robustxai.network import exact_hessian, predict
from robustxai.robustness import NoiseSpec, robustness_sweep

ds = make_blobs(700, 4, dim=8, seed=0, separation=8.0)
train_set, test_set = ds.split(500)
specs = [NoiseSpec("gaussian", 0.025, seed=1)]


def run(activation, weight_decay, curvature_weight=0.0):
    cfg = TrainConfig(learning_rate=0.05, momentum=0.9, batch_size=8, epochs=20, lr_decay=0.98,
                      weight_decay=weight_decay, curvature_weight=curvature_weight, seed=0)
    net = train(train_set.X, train_set.y, cfg, [8, 32, 32, 4], activation).network
    (row,) = robustness_sweep(net, test_set.X, test_set.y, ["gradient"], specs).rows
    k = predict(net, test_set.X[:50])
    curv = np.mean([np.linalg.norm(exact_hessian(net, x, c)) for x, c in zip(test_set.X[:50], k)]) \
        if activation.smooth else float("nan")
    bound = theorem1_bound(net, 0).bound if activation.smooth else float("nan")
    print(f"{str(activation):>18s} wd={weight_decay:<7g} zeta={curvature_weight:<7g} "
          f"pcc {row.pcc_mean:.4f}  acc {row.perturbed_accuracy:.3f}  |H| {curv:8.4f}  bound {bound:10.1f}")


# %%
# Weight decay shrinks the weights, and with them the certificate.
for wd in (0.0, 5e-4, 5e-3):
    run(Activation.softplus(10.0), wd)

# %%
# Beta sets how sharply each unit bends. Training can make up for a small
# beta with larger weights, so the measured curvature need not follow beta
# one for one.
for beta in (0.5, 1.0, 5.0, 10.0):
    run(Activation.softplus(beta), 5e-4)

# %%
# The curvature penalty targets the Hessian directly.
for zeta in (1e-4, 1e-3):
    run(Activation.softplus(10.0), 5e-4, zeta)
