"""Stationary base kernels, weighting functions and their tilted composition.

Every base kernel here is radial, ``h(u) = f(||u||^2)``, so gradients and
Laplacians follow from the first two derivatives of the profile ``f``:

    grad h(u)      = 2 f'(s) u
    laplacian h(u) = 2 d f'(s) + 4 s f''(s),      s = ||u||^2

All derivatives are analytic. The tilted kernel is
``k(x, x') = w(x) h(x - x') w(x')``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist

from .exceptions import DegenerateSample
from ._validation import as_dataset


def _sqdist(X, Y):
    """Pairwise squared Euclidean distances, clipped at zero."""
    if X.shape[1] == 1:
        return (X[:, 0][:, None] - Y[:, 0][None, :]) ** 2
    sq = (X * X).sum(1)[:, None] + (Y * Y).sum(1)[None, :] - 2.0 * X @ Y.T
    return np.maximum(sq, 0.0)


class BaseKernel:
    """A radial kernel h(u) = f(||u||^2) with analytic derivatives."""

    def profile(self, s):
        """Return ``(f(s), f'(s), f''(s))`` for squared norms ``s``."""
        raise NotImplementedError

    # single-displacement API
    def __call__(self, u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        return float(self.profile(np.dot(u, u))[0])

    def grad(self, u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        _, f1, _ = self.profile(np.dot(u, u))
        return 2.0 * f1 * u

    def laplacian(self, u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        s = np.dot(u, u)
        _, f1, f2 = self.profile(s)
        return float(2.0 * u.size * f1 + 4.0 * s * f2)


@dataclass(frozen=True)
class IMQ(BaseKernel):
    """Inverse multi-quadric ``scale * (1 + ||u||^2 / bandwidth2) ** -exponent``."""

    bandwidth2: float = 1.0
    exponent: float = 0.5
    scale: float = 1.0

    def __post_init__(self):
        if not self.bandwidth2 > 0:
            raise ValueError(f"bandwidth2 must be positive, got {self.bandwidth2}")
        if not self.exponent > 0:
            raise ValueError(f"exponent must be positive, got {self.exponent}")
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")

    def profile(self, s):
        l2, b = self.bandwidth2, self.exponent
        g = np.asarray(s, dtype=float) / l2
        g += 1.0
        inv = np.reciprocal(g)
        f = np.sqrt(inv) if b == 0.5 else np.power(g, -b)
        if self.scale != 1.0:
            f *= self.scale
        f1 = f * inv
        f2 = f1 * inv
        f1 *= -b / l2
        f2 *= b * (b + 1.0) / (l2 * l2)
        return f, f1, f2


@dataclass(frozen=True)
class SquaredExponential(BaseKernel):
    """``scale * exp(-||u||^2 / (2 bandwidth2))``."""

    bandwidth2: float = 1.0
    scale: float = 1.0

    def __post_init__(self):
        if not self.bandwidth2 > 0:
            raise ValueError(f"bandwidth2 must be positive, got {self.bandwidth2}")
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")

    def profile(self, s):
        l2 = self.bandwidth2
        f = self.scale * np.exp(-s / (2.0 * l2))
        return f, -f / (2.0 * l2), f / (4.0 * l2 * l2)


@dataclass(frozen=True)
class SumIMQ(BaseKernel):
    """Sum of IMQ terms over several bandwidths.

    With ``half_bandwidth=True`` each term is ``(1 + ||u||^2 / (2 l2)) ** -b``,
    the convention used for the kernel exponential family experiment.
    """

    bandwidths2: tuple = (1.0,)
    exponent: float = 0.5
    half_bandwidth: bool = False
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "bandwidths2", tuple(float(v) for v in self.bandwidths2))
        if not self.bandwidths2 or min(self.bandwidths2) <= 0:
            raise ValueError("bandwidths2 must be a non-empty list of positive reals")
        if not self.exponent > 0:
            raise ValueError(f"exponent must be positive, got {self.exponent}")

    def _terms(self):
        factor = 2.0 if self.half_bandwidth else 1.0
        return [IMQ(factor * l2, self.exponent, self.scale) for l2 in self.bandwidths2]

    def profile(self, s):
        f = f1 = f2 = 0.0
        for term in self._terms():
            a, b, c = term.profile(s)
            f, f1, f2 = f + a, f1 + b, f2 + c
        return f, f1, f2


class Weight:
    """Weighting function w with gradient, evaluated row-wise on (n, d) arrays."""

    def values(self, X):
        raise NotImplementedError

    def grads(self, X):
        raise NotImplementedError

    def __call__(self, x):
        return float(self.values(np.atleast_2d(np.asarray(x, dtype=float)))[0])

    def grad(self, x):
        return self.grads(np.atleast_2d(np.asarray(x, dtype=float)))[0]


@dataclass(frozen=True)
class UnitWeight(Weight):
    """w == 1; the tilted kernel reduces to its stationary base."""

    def values(self, X):
        return np.ones(X.shape[0])

    def grads(self, X):
        return np.zeros_like(X, dtype=float)


@dataclass(frozen=True)
class IMQWeight(Weight):
    """``w(x) = (1 + ||x - center||^2 / scale) ** -exponent``; ``center`` broadcasts."""

    center: object = 0.0
    scale: float = 1.0
    exponent: float = 0.5

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float)
        object.__setattr__(self, "center", float(c) if c.ndim == 0 else tuple(c.tolist()))
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        if not self.exponent > 0:
            raise ValueError(f"exponent must be positive, got {self.exponent}")

    def _base(self, X):
        diff = X - np.asarray(self.center, dtype=float)
        g = 1.0 + (diff * diff).sum(axis=1) / self.scale
        return diff, g

    def values(self, X):
        _, g = self._base(X)
        return g ** (-self.exponent)

    def grads(self, X):
        diff, g = self._base(X)
        coef = -2.0 * self.exponent / self.scale * g ** (-self.exponent - 1.0)
        return coef[:, None] * diff

    def grad_norm_bound(self):
        """Maximum of ||grad w|| over R^d (attained at ||x - center||^2 = scale / (2b + 1))."""
        b, c = self.exponent, self.scale
        r = np.sqrt(c / (2.0 * b + 1.0))
        return 2.0 * b / c * r * (1.0 + 1.0 / (2.0 * b + 1.0)) ** (-b - 1.0)


@dataclass(frozen=True)
class TiltedKernel:
    """k(x, x') = w(x) h(x - x') w(x')."""

    base: BaseKernel = field(default_factory=IMQ)
    weight: Weight = field(default_factory=UnitWeight)

    def gram(self, X, Y=None):
        X = as_dataset(X)
        Y = X if Y is None else as_dataset(Y)
        f, _, _ = self.base.profile(_sqdist(X, Y))
        return f * (self.weight.values(X)[:, None] * self.weight.values(Y)[None, :])

    def __call__(self, x, y):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        return self.base(x - y) * (self.weight(x) * self.weight(y))

    @property
    def is_tilted(self):
        return not isinstance(self.weight, UnitWeight)

    def with_bandwidth2(self, bandwidth2):
        """Copy with the base bandwidth replaced (IMQ / SquaredExponential only)."""
        from dataclasses import replace

        return replace(self, base=replace(self.base, bandwidth2=float(bandwidth2)))


# Functional surface mirroring the kernel operations.
def eval_h(spec, u):
    return spec(u)


def grad_h(spec, u):
    return spec.grad(u)


def laplacian_h(spec, u):
    return spec.laplacian(u)


def eval_w(spec, x):
    return spec(x)


def grad_w(spec, x):
    return spec.grad(x)


def median_heuristic(data):
    """Lower median of all pairwise Euclidean distances.

    For an even number of pairs the lower of the two middle values is
    returned, so the result is always an observed distance.
    """
    X = as_dataset(data, min_rows=2, name="data")
    dists = pdist(X)
    k = (dists.size - 1) // 2
    med = float(np.partition(dists, k)[k])
    if not np.any(dists > 0):
        raise DegenerateSample("all pairwise distances are zero")
    if med == 0.0:
        # more than half the pairs coincide; fall back to the smallest positive distance
        med = float(dists[dists > 0].min())
    return med


def imq(bandwidth2=1.0, exponent=0.5):
    """Untilted IMQ kernel."""
    return TiltedKernel(IMQ(bandwidth2, exponent), UnitWeight())


def tilted_imq(bandwidth2=1.0, exponent=0.5, weight_exponent=0.5, center=0.0, scale=1.0):
    """IMQ base tilted by an IMQ weight; defaults match the experiments (a=0, c=1, b=1/2)."""
    return TiltedKernel(IMQ(bandwidth2, exponent), IMQWeight(center, scale, weight_exponent))
