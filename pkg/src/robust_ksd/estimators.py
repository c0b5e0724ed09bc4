"""scikit-learn style wrappers around the tests and the KEF fit.

Constructor arguments are stored untouched (so ``get_params``/``set_params``
and ``clone`` work); all work happens in ``fit``, which sets trailing
underscore attributes.
"""
from __future__ import annotations

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .bootstrap import DEFAULT_B, WEIGHTED, BootstrapConfig
from .gof import robust_ksd_dev_test, robust_ksd_test, robust_ksd_test_ustat, standard_ksd_test
from .kernels import TiltedKernel
from .models import KEF, fit_kef_min_ksd
from .presets import build_kernel, parse_kv
from .radius import parse_radius_spec, resolve_theta
from .stein import ksd_v_stat, stein_gram


def _resolve_kernel(kernel, X):
    """A TiltedKernel instance is used as is; a preset string gets its bandwidth from ``X``."""
    if isinstance(kernel, TiltedKernel):
        return kernel
    spec = parse_kv(kernel) if isinstance(kernel, str) else dict(kernel)
    return build_kernel(spec, X)[0]


class _KSDBase(BaseEstimator):
    def _validate(self, X):
        return check_array(X, ensure_min_samples=2, dtype=float)

    def _gram(self, X):
        self.kernel_ = _resolve_kernel(self.kernel, X)
        self.n_features_in_ = X.shape[1]
        return stein_gram(self.model, self.kernel_, X)

    def _store(self, outcome):
        self.outcome_ = outcome
        self.statistic_ = outcome.statistic
        self.threshold_ = outcome.threshold
        self.reject_ = outcome.reject
        return self

    def predict(self, X=None):
        """Test decision (True = reject); refits first when ``X`` is given."""
        if X is not None:
            self.fit(X)
        check_is_fitted(self, "outcome_")
        return self.reject_


class KSDTest(_KSDBase):
    """Standard KSD test of H0: Q = P with a bootstrap threshold."""

    def __init__(self, model, kernel="imq", alpha=0.05, B=DEFAULT_B, bootstrap=WEIGHTED, seed=0):
        self.model = model
        self.kernel = kernel
        self.alpha = alpha
        self.B = B
        self.bootstrap = bootstrap
        self.seed = seed

    def fit(self, X, y=None):
        X = self._validate(X)
        gram = self._gram(X)
        boot = BootstrapConfig(self.bootstrap, self.B, self.seed)
        return self._store(standard_ksd_test(None, self.model, self.kernel_, self.alpha, boot, gram))


class RobustKSDTest(_KSDBase):
    """Robust KSD test of the KSD-ball null D(Q, P) <= theta.

    ``radius`` is a spec string (``huber:0.05``, ``band:0.1``, ``t:5``,
    ``explicit:0.3``) or a spec object; theta is resolved from ``tau`` when
    given, otherwise from the largest Stein-kernel diagonal on the data.
    ``threshold="dev"`` uses the closed-form deviation bound instead of the
    bootstrap.
    """

    def __init__(self, model, kernel="tilted-imq", radius="huber:0.05", alpha=0.05, B=DEFAULT_B,
                 bootstrap=WEIGHTED, seed=0, estimator="v", threshold="bootstrap", tau=None):
        self.model = model
        self.kernel = kernel
        self.radius = radius
        self.alpha = alpha
        self.B = B
        self.bootstrap = bootstrap
        self.seed = seed
        self.estimator = estimator
        self.threshold = threshold
        self.tau = tau

    def fit(self, X, y=None):
        if self.estimator not in ("v", "u"):
            raise ValueError("estimator must be 'v' or 'u'")
        if self.threshold not in ("bootstrap", "dev"):
            raise ValueError("threshold must be 'bootstrap' or 'dev'")
        X = self._validate(X)
        spec = parse_radius_spec(self.radius) if isinstance(self.radius, str) else self.radius
        gram = self._gram(X)
        self.tau_ = float(self.tau) if self.tau is not None else gram.diag_max
        self.theta_ = resolve_theta(spec, self.tau_, self.model)
        if self.threshold == "dev":
            out = robust_ksd_dev_test(None, self.model, self.kernel_, self.theta_, self.alpha,
                                      self.tau_, gram)
        else:
            boot = BootstrapConfig(self.bootstrap, self.B, self.seed)
            test = robust_ksd_test_ustat if self.estimator == "u" else robust_ksd_test
            out = test(None, self.model, self.kernel_, self.theta_, self.alpha, boot, gram)
        return self._store(out)


class MinimumKSDKEF(BaseEstimator):
    """Minimum-KSD estimator of a 1-D kernel exponential family."""

    def __init__(self, L=25, kernel="sum-imq", ridge=None, standardize=True):
        self.L = L
        self.kernel = kernel
        self.ridge = ridge
        self.standardize = standardize

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_samples=1, dtype=float)
        if X.shape[1] != 1:
            raise ValueError("MinimumKSDKEF expects a single feature")
        kernel = self.kernel
        if not isinstance(kernel, TiltedKernel):
            # the kernel acts on standardized data, so the median is taken there
            Z = (X - X.mean()) / X.std() if self.standardize else X
            kernel = _resolve_kernel(kernel, Z)
        self.kernel_ = kernel
        self.result_ = fit_kef_min_ksd(X, kernel, self.L, self.ridge, self.standardize)
        self.eta_ = self.result_.eta_hat
        self.model_ = self.result_.model
        self.objective_ = self.result_.objective_value
        self.n_features_in_ = 1
        return self

    def score(self, X, y=None):
        """Negative squared KSD (V-statistic) of the fitted model on ``X``; larger is better."""
        check_is_fitted(self, "model_")
        X = check_array(X, ensure_min_samples=1, dtype=float)
        z = (X - self.result_.loc) / self.result_.scale
        return -ksd_v_stat(stein_gram(KEF(self.eta_), self.kernel_, z))

