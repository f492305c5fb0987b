"""Command-line interface.

Every invocation writes exactly one JSON document to stdout; diagnostics go
to stderr.  Exit codes: 0 success, 2 bad usage or arguments, 3 I/O or data
errors, 4 numerical failures.
"""

import argparse
import csv
import json
import logging
import math
import os
import sys

import numpy as np

from . import __version__
from ._rng import stream
from .calibration import SCHEMA, calibrate
from .design import DataError, Dataset, diagnose, generate_gaussian_design, load_csv, read_matrix_csv, with_intercept
from .experiments import STUDIES, ScenarioConfig, run_study
from .noise import fisher_info, make_model
from .solver import FitConfig, fit_exp_lasso

log = logging.getLogger("explasso")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _clean(obj):
    """Replace non-finite floats by None so the output is strict JSON."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _emit(doc):
    doc = dict(doc)
    doc["schema"] = SCHEMA
    sys.stdout.write(json.dumps(_clean(doc), sort_keys=True) + "\n")


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _check_alpha_eta_reps(args):
    if not 0 < args.alpha <= 0.5:
        raise UsageError(f"--alpha must lie in (0, 1/2], got {args.alpha}")
    if not 0 <= args.eta < 1:
        raise UsageError(f"--eta must lie in [0, 1), got {args.eta}")
    if args.reps < 100:
        raise UsageError(f"--reps must be at least 100, got {args.reps}")
    if args.seed < 0:
        raise UsageError("--seed must be non-negative")


def _model(spec):
    try:
        return make_model(spec)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# ---------------------------------------------------------------- subcommands

def cmd_calibrate(args):
    model = _model(args.model)
    _check_alpha_eta_reps(args)
    if args.design:
        X = read_matrix_csv(args.design)
    elif args.n and args.p:
        if args.n < 2 or args.p < 1:
            raise UsageError("--n must be >= 2 and --p >= 1")
        X = generate_gaussian_design(args.n, args.p, stream(args.seed, 0))
    else:
        raise UsageError("give --design or both --n and --p")
    res = calibrate(X, model, args.alpha, args.eta, args.reps, args.seed)
    if args.dump_samples:
        with open(args.dump_samples, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["lambda_star"])
            w.writerows([repr(float(v))] for v in res.samples)
    _emit(res.to_dict())


def _penalty_mask(names, spec):
    mask = np.ones(len(names), dtype=bool)
    if not spec:
        return mask
    for tok in (t.strip() for t in spec.split(",")):
        if not tok:
            continue
        if tok in names:
            mask[names.index(tok)] = False
        elif tok.isdigit() and 1 <= int(tok) <= len(names):
            mask[int(tok) - 1] = False
        else:
            raise UsageError(f"--unpenalized: no column {tok!r}")
    return mask


def cmd_fit(args):
    model = _model(args.model)
    _check_alpha_eta_reps(args)
    if args.lam == "auto":
        lam = "calibrate"
    else:
        try:
            lam = float(args.lam)
        except ValueError:
            raise UsageError(f"--lambda must be a positive number or 'auto', got {args.lam!r}") from None
    try:
        cfg = FitConfig(lam=lam, alpha=args.alpha, eta=args.eta, calib_reps=args.reps, seed=args.seed,
                        tol_kkt=args.tol_kkt, max_outer=args.max_outer)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    ds = load_csv(args.data)
    ds = Dataset(ds.y, ds.X, penalty_mask=_penalty_mask(list(ds.names), args.unpenalized), names=ds.names)
    if args.intercept:
        ds = with_intercept(ds)
    fit = fit_exp_lasso(ds, model, cfg)
    doc = fit.to_dict()
    doc["names"] = list(ds.names)
    doc["model"] = model.spec
    if ds.intercept:
        # intercept on the original (uncentered) columns
        doc["intercept_raw"] = float(fit.beta[0] - ds.col_means @ fit.beta)
    _emit(doc)


def cmd_simulate(args):
    if args.study not in STUDIES:
        raise UsageError(f"unknown study {args.study!r}; expected one of {', '.join(STUDIES)}")
    flags = {"n": args.n, "p": args.p, "s_star": args.s_star, "beta_magnitude": args.beta,
             "sigma_star": args.sigma, "model": args.model, "design": args.design,
             "replications": args.reps, "alpha": args.alpha, "eta": args.eta, "seed": args.seed,
             "calib_reps": args.calib_reps, "n_jobs": args.jobs}
    flags = {k: v for k, v in flags.items() if v is not None}
    try:
        if args.config:
            cfg = ScenarioConfig.from_file(args.config, **flags)
        else:
            cfg = ScenarioConfig(**flags)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid scenario: {exc}") from None
    kw = {}
    if args.study == "edge":
        if cfg.s_star != 0:
            raise UsageError("the edge study needs --s-star 0")
        if args.multipliers:
            if min(args.multipliers) <= 0:
                raise UsageError("--multipliers must be positive")
            kw["lambda_grid"] = args.multipliers
    elif args.study == "select" and cfg.s_star < 1:
        raise UsageError("the select study needs --s-star >= 1")
    if args.n_grid and args.study in ("rates", "efficiency"):
        kw["n_grid"] = args.n_grid
    os.makedirs(args.out, exist_ok=True)
    report = run_study(args.study, cfg, **kw)
    csv_path = os.path.join(args.out, f"{args.study}.csv")
    json_path = os.path.join(args.out, f"{args.study}.json")
    report.to_csv(csv_path)
    report.to_json(json_path)
    doc = report.to_dict()
    doc["files"] = {"records": csv_path, "aggregates": json_path}
    _emit(doc)


def cmd_fisher(args):
    model = _model(args.model)
    info = fisher_info(model, method=args.method)
    _emit({"model": model.spec, "order": ["scale", "location"],
           "fisher": info.matrix.tolist(), "inverse": info.inverse.tolist()})


def cmd_diagnose(args):
    if args.eta is not None and not 0 < args.eta <= 1:
        raise UsageError("--eta must lie in (0, 1]")
    if args.n_random < 1:
        raise UsageError("--n-random must be at least 1")
    X = read_matrix_csv(args.design)
    ds = Dataset(np.zeros(X.shape[0]), X)
    S = [j - 1 for j in args.support] if args.support else []
    if any(j < 0 or j >= ds.p for j in S):
        raise UsageError(f"--support indices must lie in 1..{ds.p}")
    ref = read_matrix_csv(args.reference) if args.reference else None
    d = diagnose(ds, S, sigma_ref=ref, eta=args.eta, n_random=args.n_random,
                 rng=np.random.default_rng(args.seed))
    _emit(d.asdict())


# ---------------------------------------------------------------- parser

def _add_common(p, reps_default=10_000):
    p.add_argument("--model", default="gaussian", help="gaussian, subbotin:<r>, logistic, huber or gumbel")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--eta", type=float, default=0.1)
    p.add_argument("--reps", type=int, default=reps_default)
    p.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = argparse.ArgumentParser(prog="explasso", description="Scale-free sparse regression.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="Monte Carlo tuning parameter")
    _add_common(p)
    p.add_argument("--design", help="CSV design matrix (a 'y' column is ignored)")
    p.add_argument("--n", type=int)
    p.add_argument("--p", type=int)
    p.add_argument("--dump-samples", metavar="FILE", help="write the sorted samples as CSV")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("fit", help="fit the estimator to a CSV with a 'y' column")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--lambda", dest="lam", default="auto", help="positive value or 'auto'")
    p.add_argument("--intercept", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--unpenalized", help="comma-separated column names or 1-based indices")
    p.add_argument("--tol-kkt", type=float, default=1e-8)
    p.add_argument("--max-outer", type=int, default=200)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="run a replicated simulation study")
    p.add_argument("--study", required=True, help=", ".join(STUDIES))
    p.add_argument("--config", help="key = value scenario file; flags override it")
    p.add_argument("--n", type=int)
    p.add_argument("--p", type=int)
    p.add_argument("--s-star", type=int)
    p.add_argument("--beta", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--model")
    p.add_argument("--design", help="gaussian, fixed or a CSV path")
    p.add_argument("--reps", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--calib-reps", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--multipliers", type=_float_list, help="edge study: comma-separated multipliers")
    p.add_argument("--n-grid", type=_int_list, help="rates/efficiency: comma-separated sample sizes")
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fisher", help="Fisher information in (scale, location)")
    p.add_argument("--model", required=True)
    p.add_argument("--method", choices=("quadrature", "analytic"), default="quadrature")
    p.set_defaults(func=cmd_fisher)

    p = sub.add_parser("diagnose", help="design diagnostics")
    p.add_argument("--design", required=True)
    p.add_argument("--support", type=_int_list, help="comma-separated 1-based columns")
    p.add_argument("--eta", type=float, help="enable the restricted-eigenvalue proxy")
    p.add_argument("--reference", help="CSV reference covariance for the Gram deviation")
    p.add_argument("--n-random", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(stream=sys.stderr, level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"explasso: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, DataError) as exc:
        print(f"explasso: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"explasso: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"explasso: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
