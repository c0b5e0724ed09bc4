import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robust_ksd.exceptions import DegenerateSample
from robust_ksd.kernels import (IMQ, IMQWeight, SquaredExponential, SumIMQ, TiltedKernel, UnitWeight,
                                eval_h, eval_w, grad_h, grad_w, laplacian_h, median_heuristic)

BASES = [IMQ(1.0, 0.5), IMQ(0.3, 1.5), SquaredExponential(1.0), SquaredExponential(2.5),
         SumIMQ((0.6, 1.0, 1.2), 0.5, True), SumIMQ((0.5, 4.0), 0.5)]
WEIGHTS = [IMQWeight(0.0, 1.0, 0.5), IMQWeight((0.5, -1.0, 0.2), 2.0, 1.0)]


def fd_grad(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def fd_laplacian(f, x, h=1e-4):
    x = np.asarray(x, dtype=float)
    total = 0.0
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        total += (f(x + e) - 2 * f(x) + f(x - e)) / h**2
    return total


def test_imq_values():
    assert eval_h(IMQ(1.0, 0.5), [0.0]) == 1.0
    assert eval_h(IMQ(1.0, 0.5), [np.sqrt(3.0)]) == pytest.approx(0.5, abs=1e-15)
    assert eval_h(SquaredExponential(1.0), [0.0, 0.0]) == 1.0


def test_gradient_examples():
    assert np.all(grad_h(IMQ(1.0, 0.5), [0.0, 0.0]) == 0.0)
    assert grad_h(IMQ(1.0, 0.5), [1.0])[0] == pytest.approx(-2 ** -1.5, rel=1e-12)
    assert grad_h(SquaredExponential(1.0), [1.0])[0] == pytest.approx(-np.exp(-0.5), rel=1e-12)
    h = IMQ(1.0, 0.5)
    assert grad_h(h, [1.0])[0] == pytest.approx(fd_grad(h, [1.0])[0], rel=1e-6)


def test_laplacian_examples():
    assert laplacian_h(IMQ(1.0, 0.5), [0.0]) == pytest.approx(-1.0)
    assert laplacian_h(IMQ(1.0, 0.5), [0.0]) == pytest.approx(fd_laplacian(IMQ(1.0, 0.5), [0.0]), rel=1e-4)
    for d in (1, 3):
        assert laplacian_h(SquaredExponential(2.0), np.zeros(d)) == pytest.approx(-d / 2.0)


def test_singleton_sum_equals_imq(rng):
    for u in rng.normal(size=(20, 2)):
        assert eval_h(SumIMQ((1.0,), 0.5), u) == eval_h(IMQ(1.0, 0.5), u)
        assert laplacian_h(SumIMQ((1.0,), 0.5), u) == laplacian_h(IMQ(1.0, 0.5), u)


def test_half_bandwidth_convention():
    h = SumIMQ((0.6,), 0.5, half_bandwidth=True)
    assert eval_h(h, [1.0]) == pytest.approx((1 + 1 / 1.2) ** -0.5)


def test_weight_examples():
    w = IMQWeight(0.0, 1.0, 0.5)
    assert eval_w(w, [0.0]) == 1.0 and grad_w(w, [0.0])[0] == 0.0
    assert eval_w(UnitWeight(), [3.0, 1.0]) == 1.0 and np.all(grad_w(UnitWeight(), [3.0, 1.0]) == 0)
    assert eval_w(w, [1.0]) == pytest.approx(2 ** -0.5)
    assert grad_w(w, [1.0])[0] == pytest.approx(-2 ** -1.5)
    assert grad_w(w, [1.0])[0] == pytest.approx(fd_grad(w, [1.0])[0], rel=1e-6)


@pytest.mark.parametrize("h", BASES, ids=repr)
def test_gradient_and_laplacian_match_finite_differences(h, rng):
    for u in rng.normal(size=(100, 3)):
        g = grad_h(h, u)
        np.testing.assert_allclose(g, fd_grad(h, u), rtol=1e-5, atol=1e-9)
        assert laplacian_h(h, u) == pytest.approx(fd_laplacian(h, u), rel=1e-3, abs=1e-6)


@pytest.mark.parametrize("w", WEIGHTS, ids=repr)
def test_weight_gradient_matches_finite_differences(w, rng):
    for x in rng.normal(scale=2.0, size=(100, 3)):
        np.testing.assert_allclose(grad_w(w, x), fd_grad(w, x), rtol=1e-5, atol=1e-10)


def test_weight_bounded():
    w = IMQWeight(0.0, 1.0, 0.5)
    xs = np.linspace(-50, 50, 10_001)[:, None]
    vals = w.values(xs)
    assert vals.max() == 1.0
    assert np.abs(w.grads(xs)).max() <= w.grad_norm_bound() + 1e-15
    dense = np.linspace(0, 3, 300_001)[:, None]
    assert np.abs(w.grads(dense)).max() == pytest.approx(w.grad_norm_bound(), rel=1e-8)


@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=2),
       st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=2))
@settings(max_examples=100, deadline=None)
def test_tilted_kernel_symmetric(x, y):
    k = TiltedKernel(IMQ(0.7), IMQWeight((0.1, 0.2), 1.5))
    assert k(x, y) == k(y, x)
    assert k(x, x) > 0


@pytest.mark.parametrize("h", BASES[:4], ids=repr)
@pytest.mark.parametrize("w", [UnitWeight(), WEIGHTS[0]], ids=repr)
def test_gram_positive_semidefinite(h, w, rng):
    X = rng.normal(size=(20, 3))
    K = TiltedKernel(h, w).gram(X)
    np.testing.assert_array_equal(K, K.T)
    ev = np.linalg.eigvalsh(K)
    assert ev.min() >= -1e-8 * ev.max()


def test_invalid_specs():
    with pytest.raises(ValueError):
        IMQ(0.0)
    with pytest.raises(ValueError):
        IMQ(1.0, -0.5)
    with pytest.raises(ValueError):
        SumIMQ(())
    with pytest.raises(ValueError):
        IMQWeight(0.0, -1.0)


def test_median_heuristic_examples():
    assert median_heuristic([0.0, 1.0, 3.0]) == 2.0
    assert median_heuristic([0.0, 1.0]) == 1.0
    assert median_heuristic([[0.0, 0.0], [3.0, 4.0], [0.0, 0.0]]) == 5.0


def test_median_heuristic_lower_median_matches_sort(rng):
    X = rng.normal(size=(9, 2))  # 36 pairs: even count
    d = sorted(np.linalg.norm(X[i] - X[j]) for i in range(9) for j in range(i + 1, 9))
    assert median_heuristic(X) == pytest.approx(d[len(d) // 2 - 1], rel=1e-14)


def test_median_heuristic_degenerate():
    with pytest.raises(DegenerateSample):
        median_heuristic([[1.0, 2.0]] * 4)
    assert median_heuristic([0.0, 0.0, 0.0, 2.0]) == 2.0
