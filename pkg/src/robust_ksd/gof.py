"""Goodness-of-fit tests: standard KSD, robust KSD and the deviation-bound variant.

All tests reject on a strict inequality ``statistic > threshold``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from datetime import datetime, timezone

from . import __version__
from .bootstrap import BootstrapConfig, boot_quantile, mc_quantile, bootstrap_samples
from .exceptions import TooFewPoints
from .stein import ksd_u_stat, ksd_v_stat, stein_gram
from ._validation import as_dataset, check_alpha

STANDARD = "Standard"
ROBUST_BOOTSTRAP = "RobustBootstrap"
ROBUST_DEV = "RobustDev"


@dataclass(frozen=True)
class TestOutcome:
    """Result of one hypothesis test.

    ``threshold_defined`` is False only for the U-statistic never-reject rule,
    where the bootstrap quantile is negative and its square root undefined.
    """

    __test__ = False  # not a pytest class

    statistic: float
    threshold: float
    reject: bool
    theta: float
    alpha: float
    B: int
    seed: int
    estimator: str
    test_kind: str
    threshold_defined: bool = True

    def __post_init__(self):
        object.__setattr__(self, "statistic", float(self.statistic))
        object.__setattr__(self, "threshold", float(self.threshold))
        object.__setattr__(self, "reject", bool(self.reject))

    def to_record(self, timestamp=False):
        rec = asdict(self)
        if not self.threshold_defined:
            rec["threshold"] = None
        rec["library_version"] = __version__
        if timestamp:
            rec["timestamp"] = datetime.now(timezone.utc).isoformat()
        return rec


def delta_stat(D, theta):
    """max(0, D - theta)."""
    if D < 0 or theta < 0:
        raise ValueError("D and theta must be nonnegative")
    return max(0.0, float(D) - float(theta))


def dev_threshold(tau, n, alpha):
    """sqrt(tau / n) + sqrt(-2 tau log(alpha) / n)."""
    tau = float(getattr(tau, "value", tau))
    return math.sqrt(tau / n) + math.sqrt(-2.0 * tau * math.log(alpha) / n)


def _prepare(data, model, kernel, gram, min_rows=2):
    if gram is None:
        X = as_dataset(data, min_rows=1, name="data")
        if X.shape[0] < min_rows:
            raise TooFewPoints(f"need at least {min_rows} observations, got {X.shape[0]}")
        gram = stein_gram(model, kernel, X)
    elif gram.n < min_rows:
        raise TooFewPoints(f"need at least {min_rows} observations")
    return gram


def standard_ksd_test(data, model, kernel, alpha=0.05, boot=None, gram=None):
    """Reject H0: Q = P when D^2 exceeds the bootstrap quantile q^2_{B, 1-alpha}."""
    alpha = check_alpha(alpha)
    boot = boot or BootstrapConfig()
    gram = _prepare(data, model, kernel, gram)
    d2 = ksd_v_stat(gram)
    q = boot_quantile(gram, d2, boot, alpha)
    return TestOutcome(d2, q.q_squared, d2 > q.q_squared, 0.0, alpha, boot.B, boot.seed,
                       "v", STANDARD)


def robust_ksd_test(data, model, kernel, theta, alpha=0.05, boot=None, gram=None):
    """Reject the KSD-ball null D(Q, P) <= theta when max(0, D - theta) exceeds q_{B, 1-alpha}.

    The comparison uses the non-squared statistic and quantile.
    """
    alpha = check_alpha(alpha)
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    boot = boot or BootstrapConfig()
    gram = _prepare(data, model, kernel, gram)
    d2 = ksd_v_stat(gram)
    stat = delta_stat(math.sqrt(d2), theta)
    q = boot_quantile(gram, d2, boot, alpha)
    return TestOutcome(stat, q.q, stat > q.q, float(theta), alpha, boot.B, boot.seed,
                       "v", ROBUST_BOOTSTRAP)


def robust_ksd_dev_test(data, model, kernel, theta, alpha, tau, gram=None):
    """Robust test with the closed-form deviation threshold; no bootstrap, valid at every n."""
    alpha = check_alpha(alpha)
    gram = _prepare(data, model, kernel, gram, min_rows=1)
    stat = delta_stat(math.sqrt(ksd_v_stat(gram)), theta)
    gamma = dev_threshold(tau, gram.n, alpha)
    return TestOutcome(stat, gamma, stat > gamma, float(theta), alpha, 0, None, "v", ROBUST_DEV)


def robust_ksd_test_ustat(data, model, kernel, theta, alpha=0.05, boot=None, gram=None):
    """Experimental U-statistic robust test.

    Bootstrap replicates drop the diagonal. When the quantile is negative the
    test never rejects and the threshold is reported as undefined.
    """
    alpha = check_alpha(alpha)
    boot = boot or BootstrapConfig()
    gram = _prepare(data, model, kernel, gram)
    d2u = ksd_u_stat(gram)
    stat = delta_stat(math.sqrt(max(0.0, d2u)), theta)
    q2 = mc_quantile(d2u, bootstrap_samples(gram, boot, estimator="u"), alpha)
    if q2 < 0:
        return TestOutcome(stat, q2, False, float(theta), alpha, boot.B, boot.seed, "u",
                           ROBUST_BOOTSTRAP, threshold_defined=False)
    q = math.sqrt(q2)
    return TestOutcome(stat, q, stat > q, float(theta), alpha, boot.B, boot.seed, "u",
                       ROBUST_BOOTSTRAP)
