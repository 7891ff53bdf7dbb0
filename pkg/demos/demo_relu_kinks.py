"""
Gradient jumps along a path through a ReLU network
==================================================

A ReLU network is piecewise linear, so its input gradient is piecewise
constant. Walking along a straight segment, the gradient changes only
where some unit switches on or off.
"""

# %%
# A two-unit toy
# --------------
import numpy as np

from robustxai import Activation, Network, make_rng
from robustxai.bounds import PathSpec, kink_sum_check
from robustxai.network import input_gradient
from robustxai.verify import TOY_PATH, toy_kink_network

toy = toy_kink_network()
res = kink_sum_check(toy, TOY_PATH, cls=0)
for k in res.kinks:
    print(f"t = {k.t:.3f}: layer {k.layer} unit {k.unit} switches {'on' if k.sign > 0 else 'off'}")
print("gradient change, measured:", res.measured)
print("gradient change, from kinks:", res.formula)

# %%
# Between kinks the gradient does not move
# ----------------------------------------
for t in (0.1, 0.2, 0.4, 0.6, 0.9):
    print(t, input_gradient(toy, TOY_PATH.start + t * (TOY_PATH.end - TOY_PATH.start), 0))

# %%
# A random network
# ----------------
# The sum over kinks reproduces the end-to-end change, and its squared
# norm stays under the kink bound.
rng = make_rng(5)
net = Network.random([2, 8, 8, 1], Activation.relu(), rng)
path = PathSpec(np.array([-0.5, 0.3]), np.array([0.6, -0.4]))
res = kink_sum_check(net, path)
print(f"{len(res.kinks)} kinks, |change|^2 = {res.change_sq:.4f}, bound = {res.bound:.4f}")
print("formula deviation:", np.max(np.abs(res.formula - res.measured)))
