"""
Noise models and map similarity
===============================

Perturb an image-shaped input with each noise model and score how much
the gradient explanation moves.
"""

# %%
import numpy as np

from robustxai import Activation, Network, make_rng
from robustxai.explain import explain, normalize_map
from robustxai.robustness import NoiseSpec, mse, pcc, perturb, ssim

rng = make_rng(0)
net = Network.random([64, 32, 3], Activation.softplus(10.0), rng, scale=0.3)
x = rng.uniform(0, 1, 64)
ref = explain(net, x, "gradient")
base = normalize_map(ref).values

# %%
# The perturbed map explains the class predicted on the clean input.
# Gaussian and Laplace noise scale with the input range; salt-and-pepper
# flips a fixed share of pixels to the domain ends.
for kind in ("gaussian", "laplace", "saltpepper"):
    for level in (0.005, 0.025, 0.1):
        xp = perturb(x, NoiseSpec(kind, level), (0.0, 1.0), make_rng(1))
        m = normalize_map(explain(net, xp, "gradient", cls=ref.cls)).values
        L = max(base.max(), m.max()) - min(base.min(), m.min())
        print(f"{kind:>10s} {level:5.3f}  pcc {pcc(base, m):.4f}  "
              f"ssim {ssim(base.reshape(8, 8), m.reshape(8, 8), L):.4f}  mse {mse(base, m):.2e}")
