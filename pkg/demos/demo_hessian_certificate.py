"""
Curvature of a Softplus network
===============================

The Hessian of a class score with respect to the input controls how fast
gradient explanations can change. Here we compute it three ways and
compare it with the weight-norm certificate.
"""

# %%
# Exact Hessian and Hessian-vector products
# -----------------------------------------
import numpy as np

from robustxai import Activation, Network, make_rng
from robustxai.bounds import beta_interchange, theorem1_bound
from robustxai.network import exact_hessian, forward, hessian_vector_product
from robustxai.training import estimate_hessian_sq_norm

rng = make_rng(3)
net = Network.random([6, 12, 12, 3], Activation.softplus(5.0), rng, scale=0.5)
x = rng.uniform(0, 1, 6)
H = exact_hessian(net, x, 0)
v = rng.standard_normal(6)
print("max |H v - hvp| =", np.max(np.abs(H @ v - hessian_vector_product(net, x, 0, v))))

# %%
# Random-probe estimate of the squared Frobenius norm
# ---------------------------------------------------
# ``E ||H v||^2 = ||H||_F^2`` for standard normal ``v``. A handful of
# probes is noisy; many probes settle on the exact value.
exact = np.sum(H**2)
for n in (1, 10, 1000):
    est = estimate_hessian_sq_norm(net, x, 0, n, rng)
    print(f"{n:5d} probes: {est.value:.5f}   exact {exact:.5f}")

# %%
# The certificate
# ---------------
# The bound only uses layer norms and the activation's derivative bounds,
# so it holds at every input.
cert = theorem1_bound(net, 0)
worst = max(np.linalg.norm(exact_hessian(net, u, 0)) for u in rng.uniform(-2, 2, (200, 6)))
print(f"bound {cert.bound:.3f}, largest measured ||H||_F {worst:.3f}")

# %%
# Trading beta for weight scale
# -----------------------------
# Rescaling the weights gives the same function with a different beta,
# and the certificate comes out the same for both.
sharp = beta_interchange(net, 20.0)
X = rng.uniform(0, 1, (5, 6))
print("max output difference:", np.max(np.abs(forward(net, X).logits - forward(sharp, X).logits)))
print("bounds:", theorem1_bound(net, 0).bound, theorem1_bound(sharp, 0).bound)
