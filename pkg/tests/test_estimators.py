import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from robust_ksd import KSDTest, MinimumKSDKEF, RobustKSDTest
from robust_ksd.bootstrap import BootstrapConfig
from robust_ksd.gof import robust_ksd_test, standard_ksd_test
from robust_ksd.kernels import median_heuristic, tilted_imq
from robust_ksd.models import KEF, Gaussian
from robust_ksd.stein import stein_gram

STD = Gaussian.standard(1)


def test_ksd_test_matches_functional_api(rng):
    X = rng.normal(0.3, 1, size=(100, 1))
    est = KSDTest(STD, kernel=tilted_imq(1.0), B=100, seed=4).fit(X)
    ref = standard_ksd_test(X, STD, tilted_imq(1.0), 0.05, BootstrapConfig(B=100, seed=4))
    assert est.outcome_ == ref and est.predict() == ref.reject


def test_robust_test_defaults(rng):
    X = rng.normal(size=(150, 1))
    est = RobustKSDTest(STD, B=100).fit(X)
    kernel = tilted_imq(median_heuristic(X) ** 2)
    gram = stein_gram(STD, kernel, X)
    assert est.tau_ == gram.diag_max and est.theta_ == pytest.approx(0.05 * gram.diag_max**0.5)
    ref = robust_ksd_test(None, STD, kernel, est.theta_, 0.05, BootstrapConfig(B=100), gram)
    assert est.outcome_ == ref


def test_robust_test_variants(rng):
    X = rng.normal(size=(80, 1))
    dev = RobustKSDTest(STD, radius="band:0.1", threshold="dev", tau=2.0).fit(X)
    assert dev.outcome_.test_kind == "RobustDev" and dev.tau_ == 2.0
    u = RobustKSDTest(STD, estimator="u", B=50).fit(X)
    assert u.outcome_.estimator == "u"
    with pytest.raises(ValueError):
        RobustKSDTest(STD, estimator="w").fit(X)
    with pytest.raises(ValueError):
        RobustKSDTest(STD, threshold="exact").fit(X)


def test_sklearn_protocol(rng):
    est = RobustKSDTest(STD, radius="huber:0.1", B=30)
    params = est.get_params()
    assert params["radius"] == "huber:0.1" and params["B"] == 30
    c = clone(est).set_params(alpha=0.1)
    assert c.alpha == 0.1 and est.alpha == 0.05
    with pytest.raises(NotFittedError):
        est.predict()
    assert isinstance(est.predict(rng.normal(size=(40, 1))), bool)
    with pytest.raises(ValueError):
        est.fit(rng.normal(size=(1, 1)))


def test_minimum_ksd_kef(rng):
    X = rng.normal(size=(300, 1))
    est = MinimumKSDKEF(L=3, kernel="tilted-imq").fit(X)
    assert est.eta_.shape == (3,) and isinstance(est.model_, KEF)
    assert est.objective_ >= 0
    assert est.score(X) == pytest.approx(-est.objective_, rel=1e-6, abs=1e-12)
    default = MinimumKSDKEF(L=5).fit(X)
    assert default.result_.ridge > 0
    with pytest.raises(ValueError):
        MinimumKSDKEF().fit(rng.normal(size=(10, 2)))
