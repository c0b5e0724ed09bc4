"""Data-generating mechanisms for contaminated and perturbed samples.

Three contamination mechanisms are kept apart on purpose:

* Huber mixing: each row is independently replaced with probability eps.
* ``perturb_fraction``: exactly round(frac * n) rows are replaced.
* ``append_outliers``: outliers are added, growing the sample.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import BadNu, BadSimplex
from .models import GaussianMixture, _check_simplex
from ._validation import as_dataset, as_vector


@dataclass(frozen=True)
class NoContamination:
    def draw(self, n, d, rng):
        raise ValueError("NoContamination cannot produce outliers")


@dataclass(frozen=True)
class DiracOutlier:
    z: tuple

    def __post_init__(self):
        object.__setattr__(self, "z", tuple(as_vector(self.z, "z").tolist()))

    def draw(self, n, d, rng):
        return np.tile(np.broadcast_to(np.asarray(self.z), (d,)), (n, 1))


@dataclass(frozen=True)
class GaussianNoise:
    mean: tuple
    var: float

    def __post_init__(self):
        object.__setattr__(self, "mean", tuple(as_vector(self.mean, "mean").tolist()))
        if not self.var > 0:
            raise ValueError("var must be positive")

    def draw(self, n, d, rng):
        mean = np.broadcast_to(np.asarray(self.mean), (d,))
        return mean + math.sqrt(self.var) * rng.standard_normal((n, d))


def scaled_t_draws(nu, size, rng):
    """t_nu * sqrt((nu - 2) / nu) via normal / sqrt(chi2_nu / nu), chi2 from the gamma sampler."""
    if not nu > 2:
        raise BadNu(f"nu must exceed 2, got {nu}")
    z = rng.standard_normal(size)
    chi2 = 2.0 * rng.standard_gamma(0.5 * nu, size)
    return z / np.sqrt(chi2 / nu) * math.sqrt((nu - 2.0) / nu)


@dataclass(frozen=True)
class ScaledT:
    nu: float

    def __post_init__(self):
        if not self.nu > 2:
            raise BadNu(f"nu must exceed 2, got {self.nu}")

    def draw(self, n, d, rng):
        if d != 1:
            raise ValueError("scaled-t contamination is one-dimensional")
        return scaled_t_draws(self.nu, (n, 1), rng)


@dataclass(frozen=True)
class HuberMixture:
    """(1 - eps) * base + eps * contamination, mixed row by row."""

    base: object
    contamination: object
    eps: float

    def __post_init__(self):
        if not 0.0 <= self.eps <= 1.0:
            raise ValueError("eps must lie in [0, 1]")


@dataclass(frozen=True)
class FractionReplacement:
    """Base sample with exactly round(frac * n) rows replaced by contamination."""

    base: object
    contamination: object
    frac: float

    def __post_init__(self):
        if not 0.0 <= self.frac <= 1.0:
            raise ValueError("frac must lie in [0, 1]")


@dataclass(frozen=True)
class ScaledTData:
    nu: float

    def __post_init__(self):
        if not self.nu > 2:
            raise BadNu(f"nu must exceed 2, got {self.nu}")


@dataclass(frozen=True)
class MeanShift:
    mu0: float
    direction: tuple = (1.0,)

    def __post_init__(self):
        v = as_vector(self.direction, "direction")
        object.__setattr__(self, "direction", tuple((v / np.linalg.norm(v)).tolist()))


@dataclass(frozen=True)
class MixtureRatioPerturb:
    base: GaussianMixture
    new_weights: tuple

    def __post_init__(self):
        w = _check_simplex(self.new_weights)
        if w.size != len(self.base.weights):
            raise BadSimplex("new_weights must match the number of mixture components")
        object.__setattr__(self, "new_weights", tuple(w.tolist()))


def _derived_rng(seed, stream):
    return np.random.default_rng(np.random.SeedSequence([int(seed or 0) & 0xFFFFFFFFFFFFFFFF, stream]))


def _base_draw(base, n, seed):
    if callable(base) and not hasattr(base, "sample"):
        return as_dataset(base(n, seed))
    return as_dataset(base.sample(n, seed))


def sample_alternative(spec, n, seed=None):
    """Draw n rows from the distribution described by ``spec``; deterministic given seed."""
    if isinstance(spec, HuberMixture):
        X = _base_draw(spec.base, n, seed).copy()
        mask = _derived_rng(seed, 1).random(n) < spec.eps
        k = int(mask.sum())
        if k:
            X[mask] = spec.contamination.draw(k, X.shape[1], _derived_rng(seed, 2))
        return X
    if isinstance(spec, FractionReplacement):
        X = _base_draw(spec.base, n, seed)
        return perturb_fraction(X, spec.frac, spec.contamination, _derived_rng(seed, 1))
    rng = np.random.default_rng(seed)
    if isinstance(spec, ScaledTData):
        return scaled_t_draws(spec.nu, (n, 1), rng)
    if isinstance(spec, MeanShift):
        direction = np.asarray(spec.direction)
        return spec.mu0 * direction + rng.standard_normal((n, direction.size))
    if isinstance(spec, MixtureRatioPerturb):
        return spec.base.with_weights(spec.new_weights).sample(n, seed)
    raise TypeError(f"unknown alternative {spec!r}")


def random_simplex(k, seed=None):
    """Normalized Uniform(0, 1) draws."""
    u = np.random.default_rng(seed).uniform(size=k)
    return tuple((u / u.sum()).tolist())


def perturb_fraction(data, frac, contamination, seed=None):
    """Replace exactly round(frac * n) uniformly chosen rows by contamination draws."""
    if not 0.0 <= frac <= 1.0:
        raise ValueError("frac must lie in [0, 1]")
    X = as_dataset(data).copy()
    n, d = X.shape
    k = int(math.floor(frac * n + 0.5))
    if k == 0:
        return X
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    rows = rng.choice(n, size=k, replace=False)
    X[rows] = contamination.draw(k, d, rng)
    return X


def append_outliers(data, n_ol, contamination, seed=None):
    """Concatenate n_ol contamination draws below the data."""
    if n_ol < 0:
        raise ValueError("n_ol must be nonnegative")
    X = as_dataset(data)
    if n_ol == 0:
        return X.copy()
    return np.vstack([X, contamination.draw(n_ol, X.shape[1], np.random.default_rng(seed))])
