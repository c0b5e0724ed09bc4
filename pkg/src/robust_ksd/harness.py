"""Experiment harness: sweep one config variable, repeat tests, aggregate rejection rates.

Every (grid cell, repetition) pair draws its randomness from

    seed = int.from_bytes(blake2b(pack("<qqq", base_seed, grid_index, rep), digest_size=8), "little")

where ``grid_index`` is the position of the value in the *sorted* grid and
``rep`` runs from 1 to R. Any single cell can therefore be replayed on its
own, and the schedule (serial or parallel) never changes the numbers.
"""
from __future__ import annotations

import copy
import csv
import hashlib
import json
import math
import os
import struct
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .bootstrap import BootstrapConfig, WEIGHTED, WILD
from .contam import sample_alternative
from .exceptions import RobustKSDError, SchemaError
from .gof import robust_ksd_dev_test, robust_ksd_test, robust_ksd_test_ustat, standard_ksd_test
from .presets import (build_alternative, build_kernel, build_model, check_alternative_spec,
                      check_kernel_spec)
from .radius import parse_radius_spec, resolve_theta
from .stein import stein_gram

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

TEST_KINDS = ("standard", "robust", "dev")
CSV_COLUMNS = ("value", "rate", "ci_low", "ci_high", "theta", "tau", "lambda", "n", "R")
CI_LABEL = "# ci: normal approximation rate +- 1.96*sqrt(rate*(1-rate)/R) clamped to [0,1]"
MAX_FAILURE_FRACTION = 0.05

_REQUIRED = ("alpha", "B", "n", "repetitions", "base_seed", "test_kind",
             "model", "kernel", "alternative", "sweep")
_OPTIONAL = ("estimator", "bootstrap", "radius", "output", "threads")
_SWEEP_KEYS = ("variable", "values")
_RADIUS_KEYS = ("spec", "tau")
_OUTPUT_KEYS = ("csv", "json")


@dataclass
class ExperimentConfig:
    model: dict
    kernel: dict
    alternative: dict
    sweep: dict
    alpha: float
    B: int
    n: int
    repetitions: int
    base_seed: int
    test_kind: str
    estimator: str = "v"
    bootstrap: str = WEIGHTED
    radius: dict = field(default_factory=lambda: {"spec": "explicit:0"})
    output: dict = field(default_factory=dict)
    threads: int = 1

    def __post_init__(self):
        self.validate()

    @property
    def grid(self):
        return sorted(self.sweep["values"])

    def validate(self):
        if not 0.0 < float(self.alpha) < 1.0:
            raise SchemaError("alpha", "alpha must lie in (0, 1)")
        for key in ("B", "n", "repetitions", "threads"):
            value = getattr(self, key)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise SchemaError(key, f"{key} must be a positive integer")
        if self.test_kind not in TEST_KINDS:
            raise SchemaError("test_kind", f"test_kind must be one of {TEST_KINDS}")
        if self.estimator not in ("v", "u"):
            raise SchemaError("estimator", "estimator must be 'v' or 'u'")
        if self.estimator == "u" and self.test_kind != "robust":
            raise SchemaError("estimator", "the U-statistic is only available for the robust test")
        if self.bootstrap not in (WEIGHTED, WILD):
            raise SchemaError("bootstrap", f"bootstrap must be {WEIGHTED!r} or {WILD!r}")
        for name, allowed in (("sweep", _SWEEP_KEYS), ("radius", _RADIUS_KEYS), ("output", _OUTPUT_KEYS)):
            for key in getattr(self, name):
                if key not in allowed:
                    raise SchemaError(f"{name}.{key}", f"unknown key {name}.{key!r}")
        for key in _SWEEP_KEYS:
            if key not in self.sweep:
                raise SchemaError(f"sweep.{key}", f"missing required key sweep.{key!r}")
        if not self.sweep["values"]:
            raise SchemaError("sweep.values", "the sweep grid must be nonempty")
        try:
            parse_radius_spec(self.radius.get("spec", "explicit:0"))
        except ValueError as exc:
            raise SchemaError("radius.spec", str(exc)) from exc
        check_kernel_spec(self.kernel)
        check_alternative_spec(self.alternative)
        build_model(self.model)
        _set_path(self.to_dict(), self.sweep["variable"], self.sweep["values"][0])

    def to_dict(self):
        return copy.deepcopy(asdict(self))

    @classmethod
    def from_dict(cls, raw):
        raw = dict(raw)
        for key in raw:
            if key not in _REQUIRED and key not in _OPTIONAL:
                raise SchemaError(key, f"unknown key {key!r}")
        for key in _REQUIRED:
            if key not in raw:
                raise SchemaError(key, f"missing required key {key!r}")
        return cls(**copy.deepcopy(raw))


def _set_path(cfg, path, value):
    parts = str(path).split(".")
    target = cfg
    for p in parts[:-1]:
        if not isinstance(target.get(p), dict):
            raise SchemaError(f"sweep.variable", f"sweep variable {path!r} does not name a config entry")
        target = target[p]
    if parts[-1] in ("test_kind", "estimator", "sweep"):
        raise SchemaError("sweep.variable", f"cannot sweep {path!r}")
    target[parts[-1]] = value
    return cfg


def load_config(path):
    """Read a TOML config, or a JSON document (plain config or a results sidecar)."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror}") from exc
    if str(path).endswith(".json"):
        obj = json.loads(raw.decode("utf-8"))
        obj = obj.get("config", obj)
    else:
        obj = tomllib.loads(raw.decode("utf-8"))
    return ExperimentConfig.from_dict(obj)


def cell_seed(base_seed, grid_index, rep):
    """64-bit seed for one repetition of one grid cell."""
    packed = struct.pack("<qqq", int(base_seed), int(grid_index), int(rep))
    return int.from_bytes(hashlib.blake2b(packed, digest_size=8).digest(), "little")


@dataclass
class RejectionCurve:
    variable: str
    values: list
    rate: list
    ci_low: list
    ci_high: list
    theta: list
    tau: list
    lam: list
    n: list
    R: list
    failures: list
    errors: list
    config: ExperimentConfig = None


def wald_interval(rate, R):
    half = 1.96 * math.sqrt(rate * (1.0 - rate) / R)
    return max(0.0, rate - half), min(1.0, rate + half)


_FAILURES = (RobustKSDError, ValueError, ArithmeticError, np.linalg.LinAlgError)


def run_repetition(config, value, grid_index, rep):
    """One test on freshly drawn data; returns a dict of results or ``{"error": message}``."""
    cfg = _set_path(config.to_dict(), config.sweep["variable"], value)
    seed = cell_seed(config.base_seed, grid_index, rep)
    try:
        n = int(cfg["n"])
        model = build_model(cfg["model"])
        alt = build_alternative(cfg["alternative"], model, n, rep_seed=[seed, 3])
        X = sample_alternative(alt, n, seed)
        kernel, lam = build_kernel(cfg["kernel"], X)
        gram = stein_gram(model, kernel, X)
        radius = cfg.get("radius", {})
        tau = float(radius["tau"]) if "tau" in radius else gram.diag_max
        theta = resolve_theta(parse_radius_spec(radius.get("spec", "explicit:0")), tau, model)
        boot = BootstrapConfig(cfg["bootstrap"], int(cfg["B"]), seed)
        alpha = float(cfg["alpha"])
        if cfg["test_kind"] == "standard":
            out = standard_ksd_test(None, model, kernel, alpha, boot, gram)
            theta = 0.0
        elif cfg["test_kind"] == "dev":
            out = robust_ksd_dev_test(None, model, kernel, theta, alpha, tau, gram)
        elif cfg["estimator"] == "u":
            out = robust_ksd_test_ustat(None, model, kernel, theta, alpha, boot, gram)
        else:
            out = robust_ksd_test(None, model, kernel, theta, alpha, boot, gram)
    except _FAILURES as exc:
        return {"error": f"{type(exc).__name__}: {exc}"}
    return {"reject": bool(out.reject), "theta": float(theta), "tau": float(tau),
            "lam": float(lam), "n": n}


def _aggregate(results, R):
    ok = [r for r in results if "error" not in r]
    failed = [r["error"] for r in results if "error" in r]
    nan = float("nan")
    if len(failed) > MAX_FAILURE_FRACTION * R or not ok:
        return dict(rate=nan, ci_low=nan, ci_high=nan, theta=nan, tau=nan, lam=nan,
                    n=results[0].get("n", 0) if ok else 0, R=len(ok), failures=len(failed),
                    error=failed[0])
    k = len(ok)
    rate = sum(r["reject"] for r in ok) / k
    lo, hi = wald_interval(rate, k)
    mean = lambda key: float(np.mean([r[key] for r in ok]))  # noqa: E731
    return dict(rate=rate, ci_low=lo, ci_high=hi, theta=mean("theta"), tau=mean("tau"),
                lam=mean("lam"), n=ok[0]["n"], R=k, failures=len(failed),
                error=failed[0] if failed else None)


def run_experiment(config, n_jobs=None):
    """Run every cell of the sweep; deterministic given ``config`` whatever ``n_jobs`` is.

    A cell whose failures exceed 5% of its repetitions is aborted (NaN rate,
    error recorded); fewer failures are dropped and reported as counts.
    """
    grid = config.grid
    R = config.repetitions
    tasks = [(v, gi, r) for gi, v in enumerate(grid) for r in range(1, R + 1)]
    n_jobs = config.threads if n_jobs is None else n_jobs
    if n_jobs == 1:
        results = [run_repetition(config, *t) for t in tasks]
    else:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=n_jobs)(delayed(run_repetition)(config, *t) for t in tasks)
    cells = [_aggregate(results[gi * R:(gi + 1) * R], R) for gi in range(len(grid))]
    col = lambda key: [c[key] for c in cells]  # noqa: E731
    return RejectionCurve(config.sweep["variable"], list(grid), col("rate"), col("ci_low"),
                          col("ci_high"), col("theta"), col("tau"), col("lam"), col("n"),
                          col("R"), col("failures"), col("error"), config)


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def sidecar_path(csv_path):
    root, ext = os.path.splitext(str(csv_path))
    return root + ".json" if ext == ".csv" else str(csv_path) + ".json"


def persist(curve, path, sidecar=None):
    """Write the curve as CSV (17 significant digits) plus a JSON sidecar echoing the config."""
    sidecar = sidecar or sidecar_path(path)
    rows = zip(curve.values, curve.rate, curve.ci_low, curve.ci_high, curve.theta, curve.tau,
               curve.lam, curve.n, curve.R)
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(CI_LABEL + "\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for row in rows:
                writer.writerow([_fmt(x) for x in row])
        doc = {
            "config": curve.config.to_dict() if curve.config else None,
            "library_version": __version__,
            "sweep_variable": curve.variable,
            "ci_method": "normal approximation, clamped to [0, 1]",
            "seed_mixing": "blake2b-64 of little-endian int64 (base_seed, sorted grid index, repetition 1..R)",
            "kef_reference_density": "standard normal",
            "cells": [{"value": v, "completed": r, "failed": f, "error": e}
                      for v, r, f, e in zip(curve.values, curve.R, curve.failures, curve.errors)],
        }
        with open(sidecar, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, sort_keys=True, indent=2)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write results to {exc.filename or path}: {exc.strerror}") from exc
    return path, sidecar


def read_curve_csv(path):
    """Columns of a persisted curve as float arrays keyed by header name."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    cols = {h: [] for h in header}
    for row in reader:
        for h, x in zip(header, row):
            cols[h].append(float(x))
    return {h: np.asarray(v) for h, v in cols.items()}
