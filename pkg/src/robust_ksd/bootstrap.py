"""Weighted (Efron) and wild bootstrap of the KSD statistic.

Replicate ``b`` of a run seeded with ``seed`` draws its weights from a
counter-based Philox stream keyed by ``(seed, b)``, so replicates can be
evaluated in any order or in parallel with identical results.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import BadWeights, TooFewPoints
from .stein import SteinGram, _gram_values
from ._validation import check_alpha

WEIGHTED = "weighted"
WILD = "wild"
DEFAULT_B = 500


@dataclass(frozen=True)
class BootstrapConfig:
    scheme: str = WEIGHTED
    B: int = DEFAULT_B
    seed: int = 0

    def __post_init__(self):
        if self.scheme not in (WEIGHTED, WILD):
            raise ValueError(f"unknown bootstrap scheme {self.scheme!r}")
        if int(self.B) < 1:
            raise ValueError("B must be >= 1")


@dataclass(frozen=True)
class QuantileEstimate:
    q_squared: float
    q: float
    samples_used: int

    @classmethod
    def from_squared(cls, q_squared, B):
        return cls(float(q_squared), math.sqrt(max(0.0, q_squared)), int(B))


def replicate_rng(seed, b):
    """Generator for bootstrap replicate ``b`` of a run seeded with ``seed``."""
    key = np.array([int(seed) & 0xFFFFFFFFFFFFFFFF, int(b)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def draw_weights(scheme, n, rng):
    """Multinomial(n; 1/n, ..., 1/n) counts, or Rademacher signs for the wild scheme."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if scheme == WEIGHTED:
        return np.bincount(rng.integers(0, n, size=n), minlength=n)
    if scheme == WILD:
        return np.where(rng.random(n) < 0.5, -1, 1)
    raise ValueError(f"unknown bootstrap scheme {scheme!r}")


def boot_stat_weighted(gram, W):
    """n^-2 sum_ij (W_i - 1)(W_j - 1) u_ij."""
    U = _gram_values(gram)
    W = np.asarray(W)
    n = U.shape[0]
    if W.shape != (n,) or np.any(W < 0) or int(W.sum()) != n:
        raise BadWeights(f"weights must be {n} nonnegative integers summing to {n}")
    v = W - 1.0
    return float(v @ U @ v) / (n * n)


def boot_stat_wild(gram, signs):
    U = _gram_values(gram)
    e = np.asarray(signs, dtype=float)
    n = U.shape[0]
    return float(e @ U @ e) / (n * n)


def centered_weights(config, n):
    """(B, n) matrix whose rows are W^b - 1 (weighted) or sign vectors (wild)."""
    M = np.empty((config.B, n))
    for b in range(config.B):
        w = draw_weights(config.scheme, n, replicate_rng(config.seed, b))
        M[b] = w - 1.0 if config.scheme == WEIGHTED else w
    return M


def bootstrap_samples(gram, config, estimator="v"):
    """All B bootstrap replicates of the V- (or U-) statistic."""
    U = _gram_values(gram)
    n = U.shape[0]
    M = centered_weights(config, n)
    quad = np.einsum("bi,bi->b", M @ U, M)
    if estimator == "v":
        return quad / (n * n)
    if estimator == "u":
        if n < 2:
            raise TooFewPoints("the U-statistic needs at least two points")
        diag = (M * M) @ np.diag(U)
        return (quad - diag) / (n * (n - 1))
    raise ValueError(f"unknown estimator {estimator!r}")


def mc_quantile(observed, samples, alpha):
    """Smallest value u of {observed} + samples with (B+1)^-1 #{<= u} >= 1 - alpha."""
    alpha = check_alpha(alpha)
    pool = np.sort(np.append(np.asarray(samples, dtype=float), float(observed)))
    k = math.ceil((1.0 - alpha) * pool.size - 1e-9)
    k = min(max(k, 1), pool.size)
    return float(pool[k - 1])


def boot_quantile(gram, observed_v_stat, config, alpha, estimator="v"):
    """Monte-Carlo bootstrap quantile q^2_{B, 1-alpha}; replicate streams derive from ``config.seed``."""
    samples = bootstrap_samples(gram, config, estimator)
    return QuantileEstimate.from_squared(mc_quantile(observed_v_stat, samples, alpha), config.B)
