import itertools
import json

import numpy as np
import pytest
from scipy import integrate

from robust_ksd.exceptions import IllConditioned, SingularPoint, Unsupported
from robust_ksd.kernels import tilted_imq
from robust_ksd.models import (KEF, RBM, Gaussian, GaussianMixture, PowerExponential, fit_kef_min_ksd,
                               kef_basis, kef_quadratic, log_density_unnorm, rbm_gibbs_sample, sample,
                               score)
from robust_ksd.stein import ksd_v_stat, stein_gram


def enumerated_log_marginal(model, x):
    """log sum_h exp(x'Bh + b'x + c'h - |x|^2/2) by brute force over h in {-1,1}^d'."""
    terms = [x @ model.B @ np.array(h) + model.b @ x + model.c @ np.array(h) - 0.5 * x @ x
             for h in itertools.product((-1.0, 1.0), repeat=model.d_hidden)]
    return np.logaddexp.reduce(terms)


def central_diff(f, x, h):
    g = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def test_gaussian_score():
    np.testing.assert_array_equal(score(Gaussian.standard(2), [1.0, 2.0]), [-1.0, -2.0])
    np.testing.assert_allclose(score(Gaussian([1.0, 0.0], [2.0, 0.5]), [0.0, 1.0]), [0.5, -2.0])


def test_gaussian_log_density_anchor():
    assert log_density_unnorm(Gaussian.standard(3), np.zeros(3)) == 0.0


def test_rbm_score_zero_parameters():
    m = RBM(np.random.default_rng(1).normal(size=(3, 2)), np.zeros(3), np.zeros(2))
    np.testing.assert_array_equal(score(m, np.zeros(3)), np.zeros(3))


def test_rbm_score_matches_enumeration_finite_differences(rng):
    m = RBM(0.5 * rng.normal(size=(2, 2)), 0.3 * rng.normal(size=2), 0.3 * rng.normal(size=2))
    for x in rng.normal(size=(10, 2)):
        fd = central_diff(lambda y: enumerated_log_marginal(m, y), x, 1e-5)
        np.testing.assert_allclose(score(m, x), fd, rtol=1e-5, atol=1e-8)


@pytest.mark.parametrize("d_hidden", [1, 4, 10])
def test_rbm_log_density_matches_enumeration(d_hidden, rng):
    m = RBM.random(3, d_hidden, seed=d_hidden)
    X = rng.normal(size=(50, 3))
    ref = np.array([enumerated_log_marginal(m, x) for x in X])
    np.testing.assert_allclose(m.log_density_unnorm(X), ref, rtol=1e-8)


def test_rbm_log_density_example():
    m = RBM([[1.0]], [0.0], [0.0])
    assert log_density_unnorm(m, [0.0]) == pytest.approx(np.log(2.0), rel=1e-14)


def test_rbm_log_density_large_hidden_layer(rng):
    m = RBM.random(5, 40, seed=3)
    assert np.all(np.isfinite(m.log_density_unnorm(rng.normal(size=(5, 5)))))


def test_rbm_json_round_trip():
    m = RBM.random(3, 2, seed=4)
    doc = json.loads(m.to_json())
    assert set(doc) == {"B", "b", "c"} and len(doc["B"]) == 3 and len(doc["B"][0]) == 2
    assert RBM.from_json(m.to_json()) == m


MODELS = [
    Gaussian([0.5, -1.0], [1.5, 0.7]),
    GaussianMixture([0.2, 0.5, 0.3], [[0.0, 0.0], [2.0, 1.0], [-1.0, 3.0]]),
    RBM.random(2, 3, seed=5),
    PowerExponential(3.0, 2),
    PowerExponential(1.5, 2),
    KEF([0.3, -0.2, 0.5]),
    KEF([0.3, -0.2, 0.5], loc=1.0, scale=2.0),
]


@pytest.mark.parametrize("model", MODELS, ids=lambda m: type(m).__name__)
def test_score_matches_log_density_gradient(model, rng):
    d = model.dim
    X = rng.normal(size=(100, d)) + 0.1
    for x in X:
        fd = central_diff(lambda y: log_density_unnorm(model, y), x, 1e-5)
        np.testing.assert_allclose(score(model, x), fd, rtol=1e-4, atol=1e-6)


def test_power_exponential():
    assert log_density_unnorm(PowerExponential(2.0, 2), [0.6, 0.8]) == pytest.approx(-1.0)
    np.testing.assert_allclose(score(PowerExponential(3.0, 1), [2.0]), [-12.0])
    np.testing.assert_array_equal(score(PowerExponential(2.0, 1), [0.0]), [0.0])
    with pytest.raises(SingularPoint):
        score(PowerExponential(1.5, 2), [0.0, 0.0])


def test_kef_basis_examples():
    assert kef_basis(1, 0.0) == (0.0, 1.0)
    assert kef_basis(2, 0.0) == (0.0, 0.0)
    val, der = kef_basis(3, 1.0)
    assert val == pytest.approx(np.exp(-0.5) / np.sqrt(6), rel=1e-14)
    assert val == pytest.approx(0.2476151, abs=1e-7)
    h = 1e-6
    fd = (kef_basis(3, 1.0 + h)[0] - kef_basis(3, 1.0 - h)[0]) / (2 * h)
    assert der == pytest.approx(fd, rel=1e-8)
    with pytest.raises(ValueError):
        kef_basis(0, 1.0)


def test_kef_json_round_trip():
    m = KEF([0.1, 0.2], loc=0.5, scale=2.0)
    assert json.loads(m.to_json())["eta"] == [0.1, 0.2]
    assert KEF.from_json(m.to_json()) == m


def test_sampling_determinism_and_mean():
    X = sample(Gaussian.standard(2), 10_000, seed=11)
    assert np.all(np.abs(X.mean(0)) <= 4 / np.sqrt(10_000))
    np.testing.assert_array_equal(X, sample(Gaussian.standard(2), 10_000, seed=11))


def test_mixture_degenerate_simplex():
    m = GaussianMixture([1.0, 0.0, 0.0], [[0.0], [50.0], [-50.0]])
    X = sample(m, 2000, seed=1)
    assert np.abs(X).max() < 10


@pytest.mark.parametrize("model", [RBM.random(2, 2, 0), KEF([0.1]), PowerExponential(2.0, 1)])
def test_sampling_unsupported(model):
    with pytest.raises(Unsupported):
        sample(model, 10, seed=0)


def test_gibbs_zero_coupling_is_iid_normal():
    m = RBM(np.zeros((2, 3)), [1.0, -2.0], [0.5, 0.1, 0.0])
    X = rbm_gibbs_sample(m, 5000, burn_in=10, thinning=1, seed=2)
    assert np.all(np.abs(X.mean(0) - m.b) <= 4 / np.sqrt(5000))


def test_gibbs_bookkeeping():
    m = RBM.random(3, 2, seed=0)
    X = rbm_gibbs_sample(m, 1, burn_in=0, thinning=1, seed=0)
    assert X.shape == (1, 3)
    # one block update from the same start reproduces the recorded state
    rng = np.random.default_rng(0)
    x = rng.standard_normal(3)
    a = x @ m.B + m.c
    h = np.where(rng.random(2) < 0.5 * (1 + np.tanh(a)), 1.0, -1.0)
    np.testing.assert_array_equal(X[0], m.B @ h + m.b + rng.standard_normal(3))
    np.testing.assert_array_equal(X, rbm_gibbs_sample(m, 1, burn_in=0, thinning=1, seed=0))
    assert rbm_gibbs_sample(m, 0, 5, 1, seed=0).shape == (0, 3)


def _exact_marginal_1d(m):
    def dens(x):
        return sum(np.exp(x * m.B[0, 0] * h + m.b[0] * x + m.c[0] * h - 0.5 * x * x) for h in (-1, 1))
    Z = integrate.quad(dens, -30, 30, limit=200)[0]
    return lambda x: dens(x) / Z


def test_gibbs_matches_exact_marginal_mean():
    m = RBM([[1.2]], [0.3], [-0.4])
    p = _exact_marginal_1d(m)
    mean = integrate.quad(lambda x: x * p(x), -30, 30, limit=200)[0]
    var = integrate.quad(lambda x: (x - mean) ** 2 * p(x), -30, 30, limit=200)[0]
    X = rbm_gibbs_sample(m, 5000, burn_in=500, thinning=10, seed=3)[:, 0]
    assert abs(X.mean() - mean) <= 3 * np.sqrt(var / X.size)


def test_gibbs_kolmogorov_distance_to_exact_marginal():
    m = RBM([[1.2]], [0.3], [-0.4])
    p = _exact_marginal_1d(m)
    X = np.sort(rbm_gibbs_sample(m, 100_000, burn_in=1000, thinning=5, seed=4)[:, 0])
    grid = np.linspace(-8, 8, 4001)
    dens = p(grid)
    cdf = integrate.cumulative_trapezoid(dens, grid, initial=0.0)
    emp = np.searchsorted(X, grid, side="right") / X.size
    assert np.abs(emp - cdf).max() <= 0.02


# --- minimum-KSD KEF fit -----------------------------------------------------

def test_kef_quadratic_matches_direct_gram(rng):
    k = tilted_imq(0.8)
    z = rng.normal(size=200)
    A, v, const = kef_quadratic(z, k, 4)
    for eta in rng.normal(size=(5, 4)):
        direct = ksd_v_stat(stein_gram(KEF(eta), k, z))
        assert eta @ A @ eta - 2 * v @ eta + const == pytest.approx(direct, rel=1e-10)


def test_kef_fit_null_data_near_zero():
    X = np.random.default_rng(0).standard_normal(2000)
    fit = fit_kef_min_ksd(X, tilted_imq(1.0), 3, ridge=1e-6)
    assert np.abs(fit.eta_hat).max() <= 0.1


def test_kef_fit_one_dimensional_grid_search():
    X = np.random.default_rng(1).normal(0.4, 1.3, size=300)
    k = tilted_imq(1.0)
    fit = fit_kef_min_ksd(X, k, 1, ridge=0.0)
    assert fit.eta_hat[0] == pytest.approx(fit.v[0] / fit.A[0, 0], rel=1e-12)
    grid = np.arange(-5.0, 5.0 + 5e-4, 1e-3)
    obj = fit.A[0, 0] * grid**2 - 2 * fit.v[0] * grid + fit.const
    assert abs(grid[np.argmin(obj)] - fit.eta_hat[0]) <= 2e-3
    # grid oracle through the Gram itself on a coarse ladder around the optimum
    z = (X - fit.loc) / fit.scale
    coarse = fit.eta_hat[0] + np.array([-0.5, -0.1, 0.0, 0.1, 0.5])
    vals = [ksd_v_stat(stein_gram(KEF([e]), k, z)) for e in coarse]
    assert int(np.argmin(vals)) == 2


def test_kef_fit_gradient_condition(rng):
    X = rng.normal(size=400) ** 2
    fit = fit_kef_min_ksd(X, tilted_imq(1.0), 5, ridge=1e-4)
    grad = 2 * (fit.A + fit.ridge * np.eye(5)) @ fit.eta_hat - 2 * fit.v
    assert np.abs(grad).max() <= 1e-8 * (1 + np.linalg.norm(fit.eta_hat))
    assert fit.objective_value >= 0
    assert fit.objective_value == pytest.approx(fit.objective(fit.eta_hat), abs=1e-15)


def test_kef_fit_large_ridge_shrinks_to_zero(rng):
    X = rng.normal(size=200) * 2 + 1
    assert np.abs(fit_kef_min_ksd(X, tilted_imq(1.0), 4, ridge=1e8).eta_hat).max() < 1e-6


def test_kef_fit_standardization_recorded(rng):
    X = rng.normal(5.0, 3.0, size=300)
    fit = fit_kef_min_ksd(X, tilted_imq(1.0), 2)
    assert fit.loc == pytest.approx(X.mean()) and fit.scale == pytest.approx(X.std())
    assert fit.model.loc == fit.loc and fit.reference == "standard normal"


def test_kef_fit_ill_conditioned(rng):
    X = rng.normal(size=50)
    with pytest.raises(IllConditioned):
        fit_kef_min_ksd(X, tilted_imq(1.0), 25, ridge=0.0)
