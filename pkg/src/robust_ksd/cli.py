"""Command-line interface: ``robust-ksd {test,experiment,ksd,radius,tau}``.

Exit codes: 0 success (a rejection is a result, not an error), 1 usage error,
2 runtime or data error. Every subcommand prints one JSON object with sorted
keys, so identical invocations produce identical bytes.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from importlib import resources

import numpy as np

from . import __version__
from .bootstrap import DEFAULT_B, WEIGHTED, WILD, BootstrapConfig
from .exceptions import RobustKSDError, SchemaError
from .gof import robust_ksd_dev_test, robust_ksd_test, robust_ksd_test_ustat, standard_ksd_test
from .presets import build_kernel, check_kernel_spec, parse_kv, resolve_model
from .radius import ScaledTTail, parse_radius_spec, resolve_theta
from .stein import ksd_u_stat, ksd_v_stat, stein_gram, tau_inf

SEED_ENV = "ROBUST_KSD_SEED"


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def read_data(path):
    """Headerless numeric CSV -> (n, d) array; errors name the first bad line."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            lines = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from exc
    except UnicodeDecodeError as exc:
        raise DataError(f"{path} is not valid UTF-8") from exc
    rows, width = [], None
    for lineno, fields in enumerate(lines, start=1):
        if not fields or all(not f.strip() for f in fields):
            continue
        if width is None:
            width = len(fields)
        elif len(fields) != width:
            raise DataError(f"{path}: line {lineno}: expected {width} columns, found {len(fields)}")
        try:
            row = [float(f) for f in fields]
        except ValueError:
            raise DataError(f"{path}: line {lineno}: non-numeric value") from None
        if not all(math.isfinite(v) for v in row):
            raise DataError(f"{path}: line {lineno}: NaN or Inf value")
        rows.append(row)
    if not rows:
        raise DataError(f"{path}: no rows")
    return np.asarray(rows, dtype=float)


def _emit(record):
    sys.stdout.write(json.dumps(record, sort_keys=True) + "\n")


def _seed(args):
    env = os.environ.get(SEED_ENV)
    if env is None or env == "":
        return args.seed
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None


def _check_kernel(text):
    spec = parse_kv(text)
    check_kernel_spec(spec)
    return spec


def _check_radius(text):
    try:
        parse_radius_spec(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return text


def _check_model(text):
    text = str(text)
    if not (text.lstrip().startswith("{") or text.endswith(".json")):
        resolve_model(text, 1)
    return text


def _model_and_kernel(args, X):
    model = resolve_model(args.model, X.shape[1])
    if getattr(model, "dim", X.shape[1]) != X.shape[1]:
        raise DataError(f"data have {X.shape[1]} columns but the model has dimension {model.dim}")
    kernel, lam = build_kernel(args.kernel_spec, X)
    return model, kernel, lam


def _threads(args):
    if getattr(args, "threads", None):
        from threadpoolctl import threadpool_limits

        return threadpool_limits(limits=args.threads)
    return None


def cmd_test(args):
    if not 0.0 < args.alpha < 1.0:
        raise UsageError("--alpha must lie in (0, 1)")
    if args.B < 1:
        raise UsageError("--B must be >= 1")
    spec = parse_radius_spec(args.theta_spec) if args.theta_spec else None
    if args.dev and spec is None:
        raise UsageError("--dev needs --theta-spec")
    if args.estimator == "u" and (spec is None or args.dev):
        raise UsageError("--estimator u applies to the bootstrap robust test (give --theta-spec)")
    seed = _seed(args)
    X = read_data(args.data)
    model, kernel, lam = _model_and_kernel(args, X)
    gram = stein_gram(model, kernel, X)
    if args.dump_gram:
        gram.to_csv(args.dump_gram)
    boot = BootstrapConfig(args.bootstrap, args.B, seed)
    extra = {"bandwidth": lam}
    if spec is None:
        out = standard_ksd_test(None, model, kernel, args.alpha, boot, gram)
    else:
        tau = args.tau if args.tau is not None else gram.diag_max
        theta = resolve_theta(spec, tau, model)
        extra["tau"] = tau
        if args.dev:
            out = robust_ksd_dev_test(None, model, kernel, theta, args.alpha, tau, gram)
        elif args.estimator == "u":
            out = robust_ksd_test_ustat(None, model, kernel, theta, args.alpha, boot, gram)
        else:
            out = robust_ksd_test(None, model, kernel, theta, args.alpha, boot, gram)
    rec = out.to_record()
    rec.update(extra)
    rec["n"] = int(X.shape[0])
    _emit(rec)


def cmd_ksd(args):
    X = read_data(args.data)
    model, kernel, lam = _model_and_kernel(args, X)
    gram = stein_gram(model, kernel, X)
    d2 = ksd_v_stat(gram) if args.estimator == "v" else ksd_u_stat(gram)
    _emit({"ksd_squared": d2, "ksd": math.sqrt(max(d2, 0.0)), "estimator": args.estimator,
           "n": int(X.shape[0]), "bandwidth": lam, "library_version": __version__})


def cmd_radius(args):
    spec = parse_radius_spec(args.spec)
    if args.tau is None and args.data is None:
        raise UsageError("give --tau or --data")
    if args.tau is not None and args.tau < 0:
        raise UsageError("--tau must be nonnegative")
    model = None
    if args.data is not None:
        X = read_data(args.data)
        model, kernel, _ = _model_and_kernel(args, X)
        tau = args.tau if args.tau is not None else tau_inf(model, kernel, X).value
    else:
        tau = args.tau
        if isinstance(spec, ScaledTTail):
            model = resolve_model(args.model, 1)
    theta = resolve_theta(spec, tau, model)
    _emit({"theta": theta, "tau": tau, "spec": args.spec, "library_version": __version__})


def cmd_tau(args):
    if args.method == "grid" and not (args.bound and args.bound > 0):
        raise UsageError("--method grid needs a positive --bound")
    X = read_data(args.data)
    model, kernel, _ = _model_and_kernel(args, X)
    est = tau_inf(model, kernel, X, args.method, args.bound if args.method == "grid" else None)
    _emit({"tau": est.value, "method": est.method, "argmax": list(est.argmax), "bound": est.bound,
           "protocol": est.protocol, "library_version": __version__})


def _config_path(name):
    if os.path.exists(name):
        return name
    shipped = resources.files("robust_ksd") / "configs" / (os.path.basename(name).removesuffix(".toml") + ".toml")
    if shipped.is_file():
        return str(shipped)
    raise UsageError(f"no config file {name!r} and no shipped config of that name")


def cmd_experiment(args):
    from .harness import load_config, persist, run_experiment

    path = _config_path(args.config)
    config = load_config(path)
    out = args.out or config.output.get("csv") or "results.csv"
    curve = run_experiment(config, n_jobs=args.threads or config.threads)
    csv_path, json_path = persist(curve, out, config.output.get("json") if not args.out else None)
    _emit({"csv": csv_path, "json": json_path, "cells": len(curve.values),
           "sweep_variable": curve.variable, "values": curve.values, "rate": curve.rate,
           "library_version": __version__})


def build_parser():
    p = _Parser(prog="robust-ksd", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def data_args(sp):
        sp.add_argument("--data", required=True, help="headerless numeric CSV, one observation per row")
        sp.add_argument("--model", default="gaussian", type=_check_model,
                        help="preset name[:key=value,...] (gaussian, mixture, rbm, kef, power-exp), "
                             "inline JSON or a .json file")
        sp.add_argument("--kernel", dest="kernel_spec", default="tilted-imq", type=_check_kernel,
                        help="preset[:key=value,...] (imq, tilted-imq, sum-imq, se); bandwidth=median by default")
        sp.add_argument("--threads", type=int, default=None, help="cap on BLAS threads")

    t = sub.add_parser("test", help="run a goodness-of-fit test on a data file")
    data_args(t)
    t.add_argument("--theta-spec", default=None, type=_check_radius,
                   help="explicit:X | huber:EPS | band:DELTA | t:NU; omit for the standard test")
    t.add_argument("--alpha", type=float, default=0.05)
    t.add_argument("--B", type=int, default=DEFAULT_B)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--bootstrap", choices=(WEIGHTED, WILD), default=WEIGHTED)
    t.add_argument("--estimator", choices=("v", "u"), default="v")
    t.add_argument("--dev", action="store_true", help="deviation-bound threshold instead of the bootstrap")
    t.add_argument("--tau", type=float, default=None, help="fixed tau instead of the data maximum")
    t.add_argument("--dump-gram", default=None, metavar="PATH")
    t.set_defaults(func=cmd_test)

    k = sub.add_parser("ksd", help="squared KSD estimate")
    data_args(k)
    k.add_argument("--estimator", choices=("v", "u"), default="v")
    k.set_defaults(func=cmd_ksd)

    r = sub.add_parser("radius", help="uncertainty radius theta")
    r.add_argument("--spec", required=True, type=_check_radius)
    r.add_argument("--tau", type=float, default=None)
    r.add_argument("--data", default=None)
    r.add_argument("--model", default="gaussian", type=_check_model)
    r.add_argument("--kernel", dest="kernel_spec", default="tilted-imq", type=_check_kernel)
    r.set_defaults(func=cmd_radius)

    s = sub.add_parser("tau", help="supremum of the Stein kernel diagonal")
    data_args(s)
    s.add_argument("--method", choices=("datamax", "grid"), default="datamax")
    s.add_argument("--bound", type=float, default=None)
    s.set_defaults(func=cmd_tau)

    e = sub.add_parser("experiment", help="run an experiment config")
    e.add_argument("--config", required=True, help="TOML path or a shipped config name")
    e.add_argument("--out", default=None, help="CSV output path (sidecar JSON beside it)")
    e.add_argument("--threads", type=int, default=None, help="parallel workers")
    e.set_defaults(func=cmd_experiment)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    except SchemaError as exc:
        print(f"robust-ksd: error: SchemaError: {exc}", file=sys.stderr)
        return 1
    threads = getattr(args, "threads", None)
    if threads is not None and threads < 1:
        print("robust-ksd: error: --threads must be >= 1", file=sys.stderr)
        return 1
    try:
        limiter = _threads(args) if args.command != "experiment" else None
        try:
            args.func(args)
        finally:
            if limiter is not None:
                limiter.restore_original_limits()
    except (UsageError, SchemaError) as exc:
        kind = "SchemaError: " if isinstance(exc, SchemaError) else ""
        print(f"robust-ksd: error: {kind}{exc}", file=sys.stderr)
        return 1
    except (DataError, RobustKSDError, OSError, ArithmeticError, ValueError) as exc:
        print(f"robust-ksd: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
