"""Builders turning plain key-value specs into models, kernels and alternatives.

Shared by the experiment harness (TOML sections) and the command line
(``name:key=value,...`` strings), so both accept the same vocabulary.
"""
from __future__ import annotations

import json
import os
import re

import numpy as np

from .contam import (DiracOutlier, FractionReplacement, GaussianNoise, HuberMixture, MeanShift, MixtureRatioPerturb,
                     ScaledT, ScaledTData, random_simplex)
from .exceptions import SchemaError
from .kernels import IMQ, IMQWeight, SquaredExponential, SumIMQ, TiltedKernel, UnitWeight, median_heuristic
from .models import KEF, RBM, Gaussian, GaussianMixture, PowerExponential, rbm_gibbs_sample

MODEL_PRESETS = ("gaussian", "mixture", "rbm", "kef", "power-exp")
KERNEL_PRESETS = ("imq", "tilted-imq", "sum-imq", "se")

_MODEL_KEYS = {
    "gaussian": {"preset", "d", "mean", "variances"},
    "mixture": {"preset", "d", "n_components", "gamma", "seed", "weights", "means"},
    "rbm": {"preset", "d", "d_hidden", "seed", "B", "b", "c"},
    "kef": {"preset", "eta", "L", "loc", "scale"},
    "power-exp": {"preset", "d", "r"},
}
_KERNEL_KEYS = {"preset", "bandwidth", "exponent", "bandwidths2", "half_bandwidth",
                "weight_exponent", "center", "weight_scale"}


def parse_kv(text):
    """``"name:k=v,k=v"`` -> dict with ``preset`` plus parsed values."""
    name, _, rest = str(text).partition(":")
    out = {"preset": name.strip()}
    # commas inside [...] belong to list values
    for item in filter(None, (p.strip() for p in re.split(r",(?![^\[]*\])", rest))):
        key, eq, value = item.partition("=")
        if not eq:
            raise ValueError(f"expected key=value, got {item!r}")
        out[key.strip()] = _parse_scalar(value.strip())
    return out


def _parse_scalar(value):
    if value.lower() in ("true", "false"):
        return value.lower() == "true"
    try:
        return json.loads(value)
    except ValueError:
        return value


def _check_keys(spec, allowed, section):
    for key in spec:
        if key not in allowed:
            raise SchemaError(f"{section}.{key}", f"unknown key {section}.{key!r}")


def build_model(spec, d=None):
    """Model from a spec dict; ``d`` fills in the dimension when the spec omits it."""
    spec = dict(spec)
    preset = spec.get("preset")
    if preset not in _MODEL_KEYS:
        raise SchemaError("model.preset", f"unknown model preset {preset!r}; choose from {MODEL_PRESETS}")
    _check_keys(spec, _MODEL_KEYS[preset], "model")
    dim = int(spec.get("d", d or 1))
    if preset == "gaussian":
        return Gaussian(spec.get("mean", [0.0] * dim), spec.get("variances", [1.0] * dim))
    if preset == "mixture":
        if "means" in spec:
            k = len(spec["means"])
            return GaussianMixture(spec.get("weights", [1.0 / k] * k), spec["means"])
        model = GaussianMixture.random(int(spec.get("n_components", 5)), dim,
                                       float(spec.get("gamma", 1.0)), spec.get("seed", 0))
        return model.with_weights(spec["weights"]) if "weights" in spec else model
    if preset == "rbm":
        if "B" in spec:
            return RBM(spec["B"], spec["b"], spec["c"])
        return RBM.random(dim, int(spec.get("d_hidden", 3)), spec.get("seed", 0))
    if preset == "kef":
        eta = spec.get("eta", [0.0] * int(spec.get("L", 25)))
        return KEF(eta, float(spec.get("loc", 0.0)), float(spec.get("scale", 1.0)))
    return PowerExponential(float(spec.get("r", 2.0)), dim)


def model_from_json(obj):
    """Model from a JSON document; the variant is inferred from its field names."""
    if isinstance(obj, str):
        if os.path.exists(obj):
            with open(obj, encoding="utf-8") as fh:
                obj = json.load(fh)
        else:
            obj = json.loads(obj)
    if "preset" in obj:
        return build_model(obj)
    if {"B", "b", "c"} <= set(obj):
        return RBM(obj["B"], obj["b"], obj["c"])
    if "eta" in obj:
        return KEF.from_json(obj)
    if "weights" in obj and "means" in obj:
        return GaussianMixture(obj["weights"], obj["means"])
    if "mean" in obj:
        return Gaussian(obj["mean"], obj.get("variances", [1.0] * len(obj["mean"])))
    if "r" in obj:
        return PowerExponential(float(obj["r"]), int(obj.get("d", 1)))
    raise SchemaError("model", "cannot infer the model type from the JSON fields")


def resolve_model(text, d=None):
    """CLI ``--model``: a preset string, inline JSON or a path to a JSON file."""
    text = str(text)
    if text.lstrip().startswith("{") or text.endswith(".json"):
        return model_from_json(text)
    return build_model(parse_kv(text), d)


def check_kernel_spec(spec):
    preset = spec.get("preset")
    if preset not in KERNEL_PRESETS:
        raise SchemaError("kernel.preset", f"unknown kernel preset {preset!r}; choose from {KERNEL_PRESETS}")
    _check_keys(spec, _KERNEL_KEYS, "kernel")
    bw = spec.get("bandwidth", "median")
    if bw != "median" and not (isinstance(bw, (int, float)) and bw > 0):
        raise SchemaError("kernel.bandwidth", "kernel.bandwidth must be 'median' or a positive bandwidth^2")


def build_kernel(spec, data=None):
    """Kernel from a spec dict. Returns ``(kernel, lam)`` where ``lam`` is the bandwidth lambda used.

    ``bandwidth = "median"`` (default) sets lambda to the median heuristic on
    ``data``; a number is taken as lambda^2. With fewer than two observations
    the median is undefined and lambda = 1 is used.
    """
    spec = dict(spec)
    check_kernel_spec(spec)
    preset = spec["preset"]
    b = float(spec.get("exponent", 0.5))
    weight = UnitWeight()
    if preset in ("tilted-imq", "sum-imq") or "weight_exponent" in spec:
        weight = IMQWeight(spec.get("center", 0.0), float(spec.get("weight_scale", 1.0)),
                           float(spec.get("weight_exponent", 0.5)))
    if preset == "sum-imq":
        bws = tuple(spec.get("bandwidths2", (0.6, 1.0, 1.2)))
        base = SumIMQ(bws, b, bool(spec.get("half_bandwidth", True)))
        return TiltedKernel(base, weight), float("nan")
    bw = spec.get("bandwidth", "median")
    if bw == "median":
        if data is None:
            raise ValueError("the median heuristic needs data")
        lam = median_heuristic(data) if np.asarray(data).shape[0] >= 2 else 1.0
        l2 = lam * lam
    else:
        l2 = float(bw)
        lam = float(np.sqrt(l2))
    base = SquaredExponential(l2) if preset == "se" else IMQ(l2, b)
    return TiltedKernel(base, weight), lam


_CONTAM_KEYS = {"dirac": {"z"}, "gaussian": {"mean", "var"}, "scaled-t": {"nu"}}
_ALT_KEYS = {
    "huber": {"kind", "eps", "eps_rate", "mechanism", "contamination", "z", "mean", "var", "nu",
              "burn_in", "thinning"},
    "scaled-t": {"kind", "nu"},
    "mean-shift": {"kind", "mu0"},
    "mixture-ratio": {"kind", "weights"},
}


def check_alternative_spec(spec):
    kind = spec.get("kind")
    if kind not in _ALT_KEYS:
        raise SchemaError("alternative.kind", f"unknown alternative kind {kind!r}; choose from {tuple(_ALT_KEYS)}")
    _check_keys(spec, _ALT_KEYS[kind], "alternative")
    if kind == "huber":
        c = spec.get("contamination", "dirac")
        if c not in _CONTAM_KEYS:
            raise SchemaError("alternative.contamination", f"unknown contamination {c!r}")
        if spec.get("mechanism", "mix") not in ("mix", "replace"):
            raise SchemaError("alternative.mechanism", "alternative.mechanism must be 'mix' or 'replace'")


def build_contamination(spec):
    c = spec.get("contamination", "dirac")
    if c == "dirac":
        return DiracOutlier(spec.get("z", 10.0))
    if c == "gaussian":
        return GaussianNoise(spec.get("mean", 0.0), float(spec.get("var", 1.0)))
    return ScaledT(float(spec["nu"]))


def null_sampler(model, burn_in=2000, thinning=10):
    """Callable ``(n, seed) -> data`` drawing from the model itself."""
    if isinstance(model, RBM):
        return lambda n, seed: rbm_gibbs_sample(model, n, burn_in, thinning, seed)
    return model.sample


def build_alternative(spec, model, n, rep_seed=None):
    """Alternative-distribution spec for one repetition (``n`` feeds ``eps_rate``)."""
    spec = dict(spec)
    check_alternative_spec(spec)
    kind = spec["kind"]
    if kind == "huber":
        eps = float(n) ** (-float(spec["eps_rate"])) if "eps_rate" in spec else float(spec.get("eps", 0.0))
        base = null_sampler(model, int(spec.get("burn_in", 2000)), int(spec.get("thinning", 10)))
        if spec.get("mechanism", "mix") == "replace":
            return FractionReplacement(base, build_contamination(spec), eps)
        return HuberMixture(base, build_contamination(spec), eps)
    if kind == "scaled-t":
        return ScaledTData(float(spec["nu"]))
    if kind == "mean-shift":
        return MeanShift(float(spec["mu0"]), (1.0,) * model.dim)
    weights = spec.get("weights", "random")
    if weights == "random":
        weights = random_simplex(len(model.weights), rep_seed)
    return MixtureRatioPerturb(model, weights)
