"""Stein kernel, Gram assembly, KSD estimators and the supremum of the Stein kernel.

For a tilted kernel k(x, y) = w(x) h(x - y) w(y) and score s, write
P(x) = w(x) s(x) + grad w(x). Expanding the Langevin Stein kernel by the
product rule gives

    u(x, y) = h(x - y) <P(x), P(y)>
              + w(x) <grad h(x - y), P(y)> - w(y) <grad h(x - y), P(x)>
              - w(x) w(y) laplacian h(x - y)

and on the diagonal u(x, x) = ||P(x)||^2 h(0) - w(x)^2 laplacian h(0).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import (BadGrid, EmptyData, GramEvaluationError, NegativeVStat,
                         RobustKSDError, TooFewPoints)
from .kernels import IMQWeight, _sqdist
from ._validation import as_dataset

_BLOCK = 1024


def _score_rows(model, X):
    try:
        return model.score(X)
    except RobustKSDError as exc:
        for i in range(X.shape[0]):
            try:
                model.score(X[i:i + 1])
            except RobustKSDError:
                raise GramEvaluationError(i, i, exc) from exc
        raise


def _features(model, kernel, X):
    S = _score_rows(model, X)
    w = kernel.weight.values(X)
    P = w[:, None] * S + kernel.weight.grads(X)
    return w, P


def _cross_from_features(kernel, X, wx, Px, Y, wy, Py):
    d = X.shape[1]
    s = _sqdist(X, Y)
    f, f1, f2 = kernel.base.profile(s)
    # <P(y_j), x_i - y_j> and <P(x_i), x_i - y_j> without forming x_i - y_j
    py_u = X @ Py.T - (Py * Y).sum(1)[None, :]
    px_u = (Px * X).sum(1)[:, None] - Px @ Y.T
    # laplacian of h: 2 d f' + 4 s f''
    s *= f2
    s *= 4.0
    s += (2.0 * d) * f1
    s *= wx[:, None]
    s *= wy[None, :]
    py_u *= wx[:, None]
    px_u *= wy[None, :]
    py_u -= px_u
    py_u *= f1
    py_u *= 2.0
    out = Px @ Py.T
    out *= f
    out += py_u
    out -= s
    return out


def stein_cross(model, kernel, X, Y):
    """Matrix of u_p(x_i, y_j), shape (n, m)."""
    X, Y = as_dataset(X), as_dataset(Y)
    wx, Px = _features(model, kernel, X)
    wy, Py = _features(model, kernel, Y)
    out = np.empty((X.shape[0], Y.shape[0]))
    for start in range(0, X.shape[0], _BLOCK):
        sl = slice(start, start + _BLOCK)
        out[sl] = _cross_from_features(kernel, X[sl], wx[sl], Px[sl], Y, wy, Py)
    return out


def stein_diag(model, kernel, X):
    """u_p(x_i, x_i) via the diagonal shortcut."""
    X = as_dataset(X)
    w, P = _features(model, kernel, X)
    f0, f1, _ = kernel.base.profile(0.0)
    lap0 = 2.0 * X.shape[1] * f1
    return (P * P).sum(1) * f0 - w * w * lap0


def stein_kernel_eval(model, kernel, x, y):
    """u_p(x, y) for a single pair; symmetric in its arguments bit for bit."""
    Z = np.vstack([np.atleast_1d(np.asarray(x, dtype=float)),
                   np.atleast_1d(np.asarray(y, dtype=float))])
    U = stein_cross(model, kernel, Z, Z)
    return float(0.5 * (U[0, 1] + U[1, 0]))


@dataclass
class SteinGram:
    """Symmetric matrix of Stein kernel values on a sample."""

    values: np.ndarray
    diag_max: float = field(init=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[0] != self.values.shape[1]:
            raise ValueError("Stein Gram must be a square matrix")
        self.diag_max = float(np.max(np.diag(self.values))) if self.n else float("nan")

    @property
    def n(self):
        return self.values.shape[0]

    def to_csv(self, path):
        np.savetxt(path, self.values, delimiter=",", fmt="%.17g")


def stein_gram(model, kernel, data):
    """Stein Gram on the sample; only blocks on or above the diagonal are evaluated."""
    X = as_dataset(data, min_rows=1, name="data")
    w, P = _features(model, kernel, X)
    n = X.shape[0]
    U = np.empty((n, n))
    for a in range(0, n, _BLOCK):
        ra = slice(a, a + _BLOCK)
        blk = _cross_from_features(kernel, X[ra], w[ra], P[ra], X[a:], w[a:], P[a:])
        U[ra, a:] = blk
        U[a:, ra] = blk.T
    U += U.T
    U *= 0.5
    return SteinGram(U)


def ksd_v_stat_streaming(model, kernel, data):
    """V-statistic accumulated block by block, for samples too large to hold a Gram."""
    X = as_dataset(data, min_rows=1, name="data")
    w, P = _features(model, kernel, X)
    n = X.shape[0]
    total = 0.0
    for a in range(0, n, _BLOCK):
        ra = slice(a, a + _BLOCK)
        blk = _cross_from_features(kernel, X[ra], w[ra], P[ra], X[a:], w[a:], P[a:])
        m = min(_BLOCK, n - a)
        # the square block on the diagonal is counted once, the rest twice by symmetry
        total += 2.0 * float(blk.sum()) - float(blk[:, :m].sum())
    val = total / (n * n)
    if val < -1e-8:
        raise NegativeVStat(f"V-statistic is {val:.3e}; the Stein Gram is not PSD")
    return max(val, 0.0)


def _gram_values(gram):
    return gram.values if isinstance(gram, SteinGram) else np.asarray(gram, dtype=float)


def ksd_v_stat(gram):
    """Squared KSD V-statistic n^-2 sum_ij u_ij (never negative)."""
    U = _gram_values(gram)
    n = U.shape[0]
    val = float(U.sum()) / (n * n)
    if val < -1e-8:
        raise NegativeVStat(f"V-statistic is {val:.3e}; the Stein Gram is not PSD")
    return max(val, 0.0)


def ksd_u_stat(gram):
    """Squared KSD U-statistic over distinct pairs; may be negative."""
    U = _gram_values(gram)
    n = U.shape[0]
    if n < 2:
        raise TooFewPoints("the U-statistic needs at least two points")
    return float(U.sum() - np.trace(U)) / (n * (n - 1))


@dataclass(frozen=True)
class TauEstimate:
    """Estimate of sup_x u_p(x, x)."""

    value: float
    method: str
    argmax: tuple
    bound: float = None
    protocol: dict = None


GRID_POINTS = 2048
GRID_STARTS = 5
GOLDEN_ITERS = 200
GOLDEN_TOL = 1e-10
GOLDEN_SWEEPS = 3
_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0


def _chord(point, axis, center, radius):
    """Parameter range t with ||point + t e_axis - center|| <= radius."""
    diff = point - center
    rest = float(diff @ diff - diff[axis] ** 2)
    half = np.sqrt(max(radius * radius - rest, 0.0))
    return -diff[axis] - half, -diff[axis] + half


def _golden_max(fun, lo, hi):
    a, b = lo, hi
    c, d = b - _INVPHI * (b - a), a + _INVPHI * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(GOLDEN_ITERS):
        if b - a <= GOLDEN_TOL:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = fun(d)
    return (c, fc) if fc >= fd else (d, fd)


def tau_inf(model, kernel, data, method="datamax", locality_bound=None):
    """Estimate tau_inf = sup_x u_p(x, x).

    ``"datamax"`` returns the largest diagonal value on the data. ``"grid"``
    searches the ball ||x - a|| <= locality_bound (a = weight center, else 0):
    a 2048-point scan along each axis through the coordinatewise data median,
    plus the data points inside the ball, then cyclic golden-section refinement
    of the best 5 candidates. Every returned value is attained at a point, so
    the grid result is a lower bound on the local supremum.
    """
    X = as_dataset(data)
    if method == "datamax":
        if X.shape[0] == 0:
            raise EmptyData("DataMax needs at least one observation")
        diag = stein_diag(model, kernel, X)
        i = int(np.argmax(diag))
        return TauEstimate(float(diag[i]), "DataMax", tuple(X[i].tolist()))
    if method != "grid":
        raise ValueError(f"unknown tau method {method!r}")
    if locality_bound is None or not locality_bound > 0:
        raise ValueError("GridLocal needs a positive locality_bound")
    d = X.shape[1] if X.shape[0] else getattr(model, "dim", 1) or 1
    if isinstance(kernel.weight, IMQWeight):
        center = np.broadcast_to(np.asarray(kernel.weight.center, dtype=float), (d,)).copy()
    else:
        center = np.zeros(d)
    radius = float(locality_bound)

    anchor = np.median(X, axis=0) if X.shape[0] else center.copy()
    off = anchor - center
    if np.linalg.norm(off) > radius:
        anchor = center + off * (radius / np.linalg.norm(off))

    cands = []
    for j in range(d):
        lo, hi = _chord(anchor, j, center, radius)
        pts = np.repeat(anchor[None, :], GRID_POINTS, axis=0)
        pts[:, j] += np.linspace(lo, hi, GRID_POINTS)
        cands.append(pts)
    if X.shape[0]:
        inside = np.linalg.norm(X - center, axis=1) <= radius
        cands.append(X[inside])
    cands = np.vstack(cands)
    vals = stein_diag(model, kernel, cands)
    spacing = 2.0 * radius / (GRID_POINTS - 1)

    order = np.argsort(-vals, kind="stable")
    starts = []
    for idx in order:
        if not any(np.array_equal(cands[idx], s) for s in starts):
            starts.append(cands[idx])
        if len(starts) == GRID_STARTS:
            break

    def diag_at(p):
        return float(stein_diag(model, kernel, p[None, :])[0])

    best_x, best_v = cands[order[0]].copy(), float(vals[order[0]])
    for start in starts:
        x = start.copy()
        v = diag_at(x)
        for _ in range(GOLDEN_SWEEPS):
            improved = False
            for j in range(d):
                lo, hi = _chord(x, j, center, radius)
                lo, hi = max(lo, -2 * spacing), min(hi, 2 * spacing)
                if hi - lo <= 0:
                    continue

                def along(t, x=x, j=j):
                    p = x.copy()
                    p[j] += t
                    return diag_at(p)

                t, vt = _golden_max(along, lo, hi)
                if vt > v:
                    x[j] += t
                    v, improved = diag_at(x), True
            if not improved:
                break
        if v > best_v:
            best_x, best_v = x, v
    best_v = diag_at(best_x)
    protocol = {"grid_points": GRID_POINTS, "starts": GRID_STARTS,
                "golden_iterations": GOLDEN_ITERS, "golden_tol": GOLDEN_TOL,
                "sweeps": GOLDEN_SWEEPS}
    return TauEstimate(best_v, "GridLocal", tuple(best_x.tolist()), radius, protocol)


def simpson_weights(points, lo, hi):
    if points < 3 or points % 2 == 0:
        raise BadGrid(f"composite Simpson needs an odd number of points >= 3, got {points}")
    if not hi > lo:
        raise BadGrid("grid upper limit must exceed the lower limit")
    h = (hi - lo) / (points - 1)
    wts = np.ones(points)
    wts[1:-1:2] = 4.0
    wts[2:-1:2] = 2.0
    return np.linspace(lo, hi, points), wts * h / 3.0


def ksd_quadrature_mixture_1d(model, kernel, components):
    """Population squared KSD of a 1-D mixture by tensor-product Simpson.

    ``components`` is a sequence of ``(weight, density, (lo, hi, points))``;
    each component gets its own grid so narrow spikes can be resolved.
    """
    nodes, wts = [], []
    for weight, density, (lo, hi, points) in components:
        x, sw = simpson_weights(points, lo, hi)
        nodes.append(x)
        wts.append(weight * sw * np.asarray(density(x), dtype=float))
    total = 0.0
    for a in range(len(nodes)):
        for b in range(a, len(nodes)):
            U = stein_cross(model, kernel, nodes[a][:, None], nodes[b][:, None])
            term = float(wts[a] @ U @ wts[b])
            total += term if a == b else 2.0 * term
    return max(total, 0.0)


def ksd_quadrature_1d(model, q_density, kernel, grid=(-12.0, 12.0, 4001)):
    """Population squared KSD D^2(Q, P) for a 1-D density ``q_density``."""
    return ksd_quadrature_mixture_1d(model, kernel, [(1.0, q_density, grid)])
