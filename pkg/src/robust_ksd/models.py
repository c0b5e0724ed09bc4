"""Unnormalized score models.

Every model exposes ``score(X)`` (row-wise gradient of the log density) and,
where tractable, ``log_density_unnorm(X)``. Only the score is needed by the
Stein kernel, so normalizing constants never appear.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .exceptions import BadSimplex, IllConditioned, SingularPoint, Unsupported
from ._validation import as_dataset, as_vector


class ScoreModel:
    dim = None

    def score(self, X):
        raise NotImplementedError

    def log_density_unnorm(self, X):
        raise NotImplementedError(f"{type(self).__name__} has no unnormalized density")

    def sample(self, n, seed=None):
        raise Unsupported(f"direct sampling is not available for {type(self).__name__}")


@dataclass(frozen=True)
class Gaussian(ScoreModel):
    """Axis-aligned Gaussian N(mean, diag(variances))."""

    mean: tuple = (0.0,)
    variances: tuple = (1.0,)

    def __post_init__(self):
        mean = as_vector(self.mean, "mean")
        var = as_vector(self.variances, "variances")
        if var.size == 1 and mean.size > 1:
            var = np.full(mean.size, var[0])
        if var.shape != mean.shape:
            raise ValueError("mean and variances must have equal length")
        if np.any(var <= 0):
            raise ValueError("variances must be positive")
        object.__setattr__(self, "mean", tuple(mean.tolist()))
        object.__setattr__(self, "variances", tuple(var.tolist()))

    @classmethod
    def standard(cls, d=1):
        return cls(tuple([0.0] * d), tuple([1.0] * d))

    @property
    def dim(self):
        return len(self.mean)

    def score(self, X):
        X = as_dataset(X)
        return (np.asarray(self.mean) - X) / np.asarray(self.variances)

    def log_density_unnorm(self, X):
        X = as_dataset(X)
        return -0.5 * (((X - np.asarray(self.mean)) ** 2) / np.asarray(self.variances)).sum(1)

    def sample(self, n, seed=None):
        rng = np.random.default_rng(seed)
        z = rng.standard_normal((n, self.dim))
        return np.asarray(self.mean) + z * np.sqrt(np.asarray(self.variances))


def _check_simplex(weights):
    w = as_vector(weights, "weights")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
        raise BadSimplex(f"weights must be nonnegative and sum to 1, got sum {w.sum()!r}")
    return w


@dataclass(frozen=True)
class GaussianMixture(ScoreModel):
    """Mixture of unit-covariance Gaussians with the given (already scaled) means."""

    weights: tuple
    means: tuple

    def __post_init__(self):
        w = _check_simplex(self.weights)
        mu = np.atleast_2d(np.asarray(self.means, dtype=float))
        if mu.shape[0] != w.size:
            raise ValueError("need one mean per mixture weight")
        object.__setattr__(self, "weights", tuple(w.tolist()))
        object.__setattr__(self, "means", tuple(map(tuple, mu.tolist())))

    @classmethod
    def random(cls, n_components=5, d=2, gamma=1.0, seed=None):
        """Weights proportional to Uniform(0,1) draws, means gamma * Uniform(-2,2)^d."""
        rng = np.random.default_rng(seed)
        u = rng.uniform(size=n_components)
        mu = rng.uniform(-2.0, 2.0, size=(n_components, d))
        return cls(tuple((u / u.sum()).tolist()), tuple(map(tuple, (gamma * mu).tolist())))

    @property
    def dim(self):
        return len(self.means[0])

    def _log_terms(self, X):
        mu = np.asarray(self.means)
        with np.errstate(divide="ignore"):
            logw = np.log(np.asarray(self.weights))
        sq = ((X[:, None, :] - mu[None, :, :]) ** 2).sum(-1)
        return logw[None, :] - 0.5 * sq

    def score(self, X):
        X = as_dataset(X)
        lt = self._log_terms(X)
        resp = np.exp(lt - logsumexp(lt, axis=1, keepdims=True))
        return resp @ np.asarray(self.means) - X

    def log_density_unnorm(self, X):
        return logsumexp(self._log_terms(as_dataset(X)), axis=1)

    def sample(self, n, seed=None):
        rng = np.random.default_rng(seed)
        comp = rng.choice(len(self.weights), size=n, p=np.asarray(self.weights))
        return np.asarray(self.means)[comp] + rng.standard_normal((n, self.dim))

    def with_weights(self, weights):
        return GaussianMixture(tuple(_check_simplex(weights).tolist()), self.means)


@dataclass(frozen=True, eq=False)
class RBM(ScoreModel):
    """Gaussian-Bernoulli RBM with hidden units h in {-1, +1}^d'.

    Joint density exp(x'Bh + b'x + c'h - ||x||^2 / 2); this scaling makes the
    score ``b - x + B tanh(B'x + c)``, the log density and the Gibbs
    conditionals mutually exact.
    """

    B: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        b = as_vector(self.b, "b")
        c = as_vector(self.c, "c")
        if B.shape != (b.size, c.size):
            raise ValueError(f"B must have shape ({b.size}, {c.size}), got {B.shape}")
        for name, val in (("B", B), ("b", b), ("c", c)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    def __eq__(self, other):
        return (isinstance(other, RBM) and np.array_equal(self.B, other.B)
                and np.array_equal(self.b, other.b) and np.array_equal(self.c, other.c))

    __hash__ = None

    @classmethod
    def random(cls, d, d_hidden, seed=None):
        """All parameters drawn i.i.d. from N(0, 1)."""
        rng = np.random.default_rng(seed)
        return cls(rng.standard_normal((d, d_hidden)), rng.standard_normal(d),
                   rng.standard_normal(d_hidden))

    @property
    def dim(self):
        return self.b.size

    @property
    def d_hidden(self):
        return self.c.size

    def score(self, X):
        X = as_dataset(X)
        return self.b - X + np.tanh(X @ self.B + self.c) @ self.B.T

    def log_density_unnorm(self, X):
        # the latent sum factorizes: sum_h exp(h'a) = prod_j 2 cosh(a_j)
        X = as_dataset(X)
        a = X @ self.B + self.c
        log2cosh = np.logaddexp(a, -a)
        return X @ self.b - 0.5 * (X * X).sum(1) + log2cosh.sum(1)

    def to_json(self):
        return json.dumps({"B": self.B.tolist(), "b": self.b.tolist(), "c": self.c.tolist()})

    @classmethod
    def from_json(cls, text):
        obj = json.loads(text) if isinstance(text, str) else text
        return cls(np.asarray(obj["B"], dtype=float), obj["b"], obj["c"])


def rbm_gibbs_sample(model, n, burn_in=2000, thinning=10, seed=None, x0=None):
    """Block Gibbs sampling from an RBM.

    One step draws h | x then x | h. After ``burn_in`` steps the state is
    recorded every ``thinning`` steps until ``n`` states are collected.
    """
    if n < 0 or burn_in < 0 or thinning < 1:
        raise ValueError("need n >= 0, burn_in >= 0 and thinning >= 1")
    rng = np.random.default_rng(seed)
    B, b, c = model.B, model.b, model.c
    x = rng.standard_normal(model.dim) if x0 is None else as_vector(x0).copy()
    out = np.empty((n, model.dim))
    total = burn_in + n * thinning
    kept = 0
    for step in range(1, total + 1):
        a = x @ B + c
        p_plus = 0.5 * (1.0 + np.tanh(a))  # sigmoid(2a)
        h = np.where(rng.random(model.d_hidden) < p_plus, 1.0, -1.0)
        x = B @ h + b + rng.standard_normal(model.dim)
        if step > burn_in and (step - burn_in) % thinning == 0:
            out[kept] = x
            kept += 1
    return out


@dataclass(frozen=True)
class PowerExponential(ScoreModel):
    """Density proportional to exp(-||x||^r), r >= 1."""

    r: float = 2.0
    d: int = 1

    def __post_init__(self):
        if self.r < 1:
            raise ValueError(f"r must be >= 1, got {self.r}")

    @property
    def dim(self):
        return self.d

    def score(self, X):
        X = as_dataset(X)
        norm = np.sqrt((X * X).sum(1))
        if self.r < 2 and np.any(norm == 0):
            raise SingularPoint(f"score of PowerExponential(r={self.r}) is singular at 0")
        with np.errstate(divide="ignore", invalid="ignore"):
            factor = np.where(norm > 0, norm ** (self.r - 2.0), 0.0 if self.r > 2 else 1.0)
        return -self.r * X * factor[:, None]

    def log_density_unnorm(self, X):
        X = as_dataset(X)
        return -np.sqrt((X * X).sum(1)) ** self.r


def kef_basis(l, x):
    """Value and derivative of phi_l(x) = x^l / sqrt(l!) * exp(-x^2 / 2)."""
    if l < 1:
        raise ValueError("basis index starts at 1")
    x = np.asarray(x, dtype=float)
    norm = 1.0 / math.sqrt(math.factorial(l))
    e = np.exp(-0.5 * x * x)
    val = norm * x ** l * e
    der = norm * (l * x ** (l - 1) - x ** (l + 1)) * e
    if val.ndim == 0:
        return float(val), float(der)
    return val, der


def kef_basis_derivs(x, L):
    """Matrix of phi_l'(x_i), shape (n, L)."""
    x = np.asarray(x, dtype=float).ravel()
    return np.column_stack([kef_basis(l, x)[1] for l in range(1, L + 1)]) if L else np.zeros((x.size, 0))


@dataclass(frozen=True, eq=False)
class KEF(ScoreModel):
    """1-D kernel exponential family p(x) ~ N(0,1)(x) exp(-sum_l eta_l phi_l(x)).

    ``loc`` and ``scale`` record a data standardization; inputs are mapped to
    ``(x - loc) / scale`` before evaluation and the score is chained back.
    """

    eta: np.ndarray
    loc: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        eta = as_vector(self.eta, "eta")
        eta.setflags(write=False)
        object.__setattr__(self, "eta", eta)

    def __eq__(self, other):
        return (isinstance(other, KEF) and np.array_equal(self.eta, other.eta)
                and self.loc == other.loc and self.scale == other.scale)

    __hash__ = None

    dim = 1

    @property
    def L(self):
        return self.eta.size

    def _z(self, X):
        X = as_dataset(X)
        if X.shape[1] != 1:
            raise ValueError("KEF is one-dimensional")
        return (X[:, 0] - self.loc) / self.scale

    def score(self, X):
        z = self._z(X)
        s = -z - kef_basis_derivs(z, self.L) @ self.eta
        return (s / self.scale)[:, None]

    def log_density_unnorm(self, X):
        z = self._z(X)
        f = sum(e * kef_basis(l, z)[0] for l, e in enumerate(self.eta, start=1)) if self.L else 0.0
        return -0.5 * z * z - f

    def to_json(self):
        return json.dumps({"eta": self.eta.tolist(), "loc": self.loc, "scale": self.scale})

    @classmethod
    def from_json(cls, text):
        obj = json.loads(text) if isinstance(text, str) else text
        return cls(obj["eta"], obj.get("loc", 0.0), obj.get("scale", 1.0))


def score(model, x):
    """Score at a single point."""
    return model.score(np.atleast_2d(np.asarray(x, dtype=float)))[0]


def log_density_unnorm(model, x):
    return float(model.log_density_unnorm(np.atleast_2d(np.asarray(x, dtype=float)))[0])


def sample(model, n, seed=None):
    return model.sample(n, seed)


@dataclass(frozen=True)
class FittedKEF:
    """Minimum-KSD KEF fit; ``A``, ``v`` and ``const`` define D^2(eta) = eta'A eta - 2 v'eta + const."""

    eta_hat: np.ndarray
    ridge: float
    objective_value: float
    loc: float
    scale: float
    A: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)
    const: float = field(repr=False)
    reference: str = "standard normal"

    @property
    def model(self):
        return KEF(self.eta_hat, self.loc, self.scale)

    def objective(self, eta):
        eta = as_vector(eta, "eta")
        return float(eta @ self.A @ eta - 2.0 * self.v @ eta + self.const)


MAX_CONDITION = 1e12


def kef_quadratic(z, kernel, L):
    """(A, v, const) of the V-statistic D^2(eta) for KEF(eta) on points ``z``.

    The score s_eta = -z + G eta with G = -phi' is affine in eta, so every
    Stein-kernel term is at most quadratic in eta.
    """
    z = as_dataset(z)
    if z.shape[1] != 1:
        raise ValueError("KEF fitting is one-dimensional")
    n = z.shape[0]
    x = z[:, 0]
    G = -kef_basis_derivs(x, L)
    w = kernel.weight.values(z)
    P0 = w * (-x) + kernel.weight.grads(z)[:, 0]
    diff = x[:, None] - x[None, :]
    s = diff * diff
    f, f1, f2 = kernel.base.profile(s)
    wG = w[:, None] * G
    A = wG.T @ f @ wG / n**2
    C = f1 * diff * (w[:, None] * w[None, :])
    v = -(wG.T @ (f @ P0) + 2.0 * G.T @ C.sum(0)) / n**2
    lap = 2.0 * f1 + 4.0 * s * f2
    u0 = f * np.outer(P0, P0) + 2.0 * f1 * (w[:, None] * P0[None, :] - w[None, :] * P0[:, None]) * diff
    u0 -= np.outer(w, w) * lap
    return 0.5 * (A + A.T), v, float(u0.sum()) / n**2


def fit_kef_min_ksd(data, kernel, L, ridge=None, standardize=True):
    """Minimum-KSD estimate of the KEF coefficients.

    Solves (A + ridge I) eta = v. The default ridge is 1e-8 trace(A) / L;
    ``ridge=0`` gives the exact minimizer.
    """
    X = as_dataset(data, min_rows=1, name="data")
    if X.shape[1] != 1:
        raise ValueError("KEF fitting is one-dimensional")
    if L < 1:
        raise ValueError("L must be >= 1")
    loc, scale = 0.0, 1.0
    if standardize:
        loc, scale = float(X.mean()), float(X.std())
        if not scale > 0:
            raise ValueError("cannot standardize constant data")
    z = (X - loc) / scale
    A, v, const = kef_quadratic(z, kernel, L)
    if ridge is None:
        ridge = 1e-8 * float(np.trace(A)) / L
    if ridge < 0:
        raise ValueError("ridge must be nonnegative")
    M = A + ridge * np.eye(L)
    cond = np.linalg.cond(M)
    if not cond <= MAX_CONDITION:
        raise IllConditioned(f"condition number {cond:.3e} exceeds {MAX_CONDITION:.0e}; raise the ridge")
    eta = np.linalg.solve(M, v)
    obj = max(float(eta @ A @ eta - 2.0 * v @ eta + const), 0.0)
    return FittedKEF(eta, float(ridge), obj, loc, scale, A, v, const)
