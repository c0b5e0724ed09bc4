"""Kernel Stein discrepancy goodness-of-fit tests, including tests robust to KSD-ball perturbations."""

__version__ = "0.1.0"

from .kernels import (IMQ, IMQWeight, SquaredExponential, SumIMQ, TiltedKernel, UnitWeight,
                      imq, median_heuristic, tilted_imq)
from .models import (KEF, RBM, Gaussian, GaussianMixture, PowerExponential, rbm_gibbs_sample)
from .stein import (SteinGram, TauEstimate, ksd_quadrature_1d, ksd_u_stat, ksd_v_stat,
                    stein_gram, stein_kernel_eval, tau_inf)
from .bootstrap import BootstrapConfig, QuantileEstimate, boot_quantile
from .radius import DensityBand, Explicit, Huber, ScaledTTail, resolve_theta
from .gof import (TestOutcome, robust_ksd_dev_test, robust_ksd_test, robust_ksd_test_ustat,
                  standard_ksd_test)
from .models import FittedKEF, fit_kef_min_ksd
from .estimators import KSDTest, MinimumKSDKEF, RobustKSDTest
