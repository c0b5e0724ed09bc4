"""Uncertainty-radius selection for KSD-ball nulls.

theta is always a multiple of sqrt(tau_inf):

* Huber contamination up to eps0:     theta = eps0 * sqrt(tau)
* density band with L1 mass delta0:   theta = delta0 * sqrt(tau)
* moment-matched t tails (nu >= nu0): theta = delta0(nu0) * sqrt(tau), where
  delta0(nu) is the L1 distance between the scaled t density and N(0, 1),
  computed from the two positive crossing points of the densities.

The special functions are self-contained: a Lentz continued fraction for the
regularized incomplete beta and ``math.lgamma``/``math.erfc``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError, ModelMismatch, RootCountError
from .models import Gaussian

_CF_MAX_ITER = 300
_CF_TOL = 1e-14
_TINY = 1e-300


@dataclass(frozen=True)
class Explicit:
    theta: float

    def __post_init__(self):
        if self.theta < 0:
            raise ValueError("theta must be nonnegative")


@dataclass(frozen=True)
class Huber:
    eps0: float

    def __post_init__(self):
        if not 0.0 <= self.eps0 <= 1.0:
            raise ValueError("eps0 must lie in [0, 1]")


@dataclass(frozen=True)
class DensityBand:
    delta0: float

    def __post_init__(self):
        if self.delta0 < 0:
            raise ValueError("delta0 must be nonnegative")


@dataclass(frozen=True)
class ScaledTTail:
    nu0: float

    def __post_init__(self):
        if not self.nu0 > 2:
            raise DomainError("nu0 must exceed 2")


def parse_radius_spec(text):
    """Parse ``explicit:X``, ``huber:EPS``, ``band:DELTA`` or ``t:NU``."""
    kind, _, value = str(text).partition(":")
    kinds = {"explicit": Explicit, "huber": Huber, "band": DensityBand,
             "density-band": DensityBand, "t": ScaledTTail, "scaled-t": ScaledTTail}
    if kind not in kinds or not value:
        raise ValueError(f"bad radius spec {text!r}; expected one of explicit:, huber:, band:, t:")
    return kinds[kind](float(value))


def _is_standard_normal_1d(model):
    return isinstance(model, Gaussian) and model.mean == (0.0,) and model.variances == (1.0,)


def resolve_theta(spec, tau, model=None):
    """Radius theta for ``spec`` given a TauEstimate (or plain float) ``tau``."""
    tau_value = float(getattr(tau, "value", tau))
    if tau_value < 0:
        raise ValueError("tau must be nonnegative")
    root = math.sqrt(tau_value)
    if isinstance(spec, Explicit):
        return float(spec.theta)
    if isinstance(spec, Huber):
        return spec.eps0 * root
    if isinstance(spec, DensityBand):
        return spec.delta0 * root
    if isinstance(spec, ScaledTTail):
        if model is None or not _is_standard_normal_1d(model):
            raise ModelMismatch("the scaled-t radius applies only to the standard normal model in 1-D")
        return heavy_tail_delta0(spec.nu0) * root
    raise TypeError(f"unknown radius spec {spec!r}")


def normal_cdf(x):
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def normal_pdf(x):
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def _betacf(a, b, x):
    """Continued fraction for I_x(a, b) by the modified Lentz method."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > _TINY else _TINY)
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_TOL:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc_reg(a, b, x):
    """Regularized incomplete beta function I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise DomainError("betainc_reg needs a, b > 0")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _betacf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _betacf(b, a, 1.0 - x) / b


def student_t_cdf(t, nu):
    if not nu > 0:
        raise DomainError("degrees of freedom must be positive")
    tail = 0.5 * betainc_reg(0.5 * nu, 0.5, nu / (nu + t * t))
    return 1.0 - tail if t > 0 else tail


def _check_nu(nu):
    if not nu > 2:
        raise DomainError(f"scaled t needs nu > 2, got {nu}")


def scaled_t_cdf(x, nu):
    """CDF of t_nu * sqrt((nu - 2) / nu), the unit-variance t distribution."""
    _check_nu(nu)
    return student_t_cdf(x * math.sqrt(nu / (nu - 2.0)), nu)


def _scaled_t_log_norm(nu):
    return (math.lgamma(0.5 * (nu + 1.0)) - math.lgamma(0.5 * nu)
            - 0.5 * math.log(math.pi * (nu - 2.0)))


def scaled_t_logpdf(x, nu):
    _check_nu(nu)
    x = np.asarray(x, dtype=float)
    return _scaled_t_log_norm(nu) - 0.5 * (nu + 1.0) * np.log1p(x * x / (nu - 2.0))


def scaled_t_pdf(x, nu):
    out = np.exp(scaled_t_logpdf(x, nu))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class TIntersections:
    a1: float
    a2: float
    nu: float
    residuals: tuple


SCAN_POINTS = 10_000
SCAN_RANGE = (1e-6, 60.0)


def _log_ratio(x, nu):
    """log q_nu(x) - log phi(x); same sign as q_nu - phi and free of underflow."""
    x = np.asarray(x, dtype=float)
    return scaled_t_logpdf(x, nu) + 0.5 * x * x + 0.5 * math.log(2.0 * math.pi)


def find_intersections(nu):
    """The two positive points where the scaled t and standard normal densities cross."""
    _check_nu(nu)
    if nu > 1e6:
        raise DomainError("nu above 1e6 is numerically indistinguishable from the normal")
    grid = np.geomspace(*SCAN_RANGE, SCAN_POINTS)
    g = _log_ratio(grid, nu)
    flips = np.nonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0)[0]
    if flips.size != 2:
        raise RootCountError(f"found {flips.size} sign changes for nu={nu}, expected 2")
    roots = []
    for i in flips:
        lo, hi = float(grid[i]), float(grid[i + 1])
        glo = float(_log_ratio(lo, nu))
        while hi - lo > 1e-12:
            mid = 0.5 * (lo + hi)
            gm = float(_log_ratio(mid, nu))
            if gm == 0.0:
                lo = hi = mid
                break
            if (gm > 0) == (glo > 0):
                lo, glo = mid, gm
            else:
                hi = mid
        roots.append(0.5 * (lo + hi))
    a1, a2 = roots
    res = tuple(abs(scaled_t_pdf(a, nu) - normal_pdf(a)) for a in roots)
    return TIntersections(a1, a2, float(nu), res)


def heavy_tail_delta0(nu):
    """L1 distance between the unit-variance t_nu density and N(0, 1)."""
    ints = find_intersections(nu)
    a1, a2 = ints.a1, ints.a2
    return 4.0 * (scaled_t_cdf(a1, nu) - normal_cdf(a1) + normal_cdf(a2) - scaled_t_cdf(a2, nu))
