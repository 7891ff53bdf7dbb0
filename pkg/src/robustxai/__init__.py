"""Train small classifiers for robust explanations and check the claims numerically.

Submodules:

``numerics``    seeded random streams and small linear-algebra helpers
``network``     fully-connected nets, gradients, Hessian-vector products
``training``    momentum SGD with an optional Hessian-norm penalty
``explain``     Gradient, Gradient x Input, Integrated Gradients, GBP, LRP
``robustness``  noise models, PCC / SSIM / MSE and the robustness sweep
``bounds``      Hessian bound, ReLU kink analysis, Softplus beta rescaling
``data``, ``modelio``  dataset and model files, configs
``verify``      oracle suites behind ``robustxai verify``
"""

from .bounds import (BoundCertificate, KinkRecord, PathSpec, activation_bounds, beta_interchange, certify,
                     explanation_change_bound, find_kinks, kink_sum_check, theorem1_bound)
from .data import Dataset, load_cifar_bin, load_csv, make_blobs, save_csv
from .explain import (ExplanationMap, LrpConfig, Method, explain, gradient_map, gradient_times_input_map,
                      guided_backprop_map, integrated_gradients_map, lrp_map, normalize_map)
from .modelio import load_config, load_model, parse_config, save_model
from .network import (Activation, ForwardTrace, Network, exact_hessian, forward, hessian_vector_product,
                      input_gradient, parameter_gradient, predict)
from .numerics import frobenius_norm, make_rng, matvec, sample_laplace, sample_standard_normal
from .robustness import (NoiseSpec, RobustnessReport, SweepConfig, UndefinedMetricError, accuracy, mse, pcc,
                         perturb, robustness_sweep, ssim)
from .training import TrainConfig, estimate_hessian_sq_norm, sgd_step, train

__version__ = "0.1.0"
