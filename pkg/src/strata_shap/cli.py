"""Command-line entry point.

Exit codes: 0 success, 1 bad arguments, 2 unreadable or malformed input, 3 estimator failure.
"""

import argparse
import configparser
import json
import math
import sys

import numpy as np

from . import _accel
from .core import DatasetError, Dataset, ShapleyError
from .dp import PrivacyParams, private_layered_all
from .exact import DEFAULT_CAP, exact_all
from .experiments import (
    ExperimentConfig,
    config_record,
    rank_correlation_run,
    removal_experiment,
    touch_stats,
    write_curves_csv,
)
from .games import AdditiveGame
from .layered import SCHEMA, build_plan, layered_estimate_all
from .models import LogisticValue, ThresholdERMValue
from .monte_carlo import mc_estimate, mc_estimate_all, mc_sample_size

EXIT_OK, EXIT_ARGS, EXIT_IO, EXIT_ESTIMATOR = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ARGS, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- argument handling


def _common(p, lam_convention):
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--beta", type=float, default=0.05)
    p.add_argument("--c", type=float, default=1.0, help="marginal-gain constant (|v_i(C)| <= c/|C|)")
    p.add_argument("--epsilon", type=float, default=1.0)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument(
        "--lambda-convention",
        choices=("mean", "sklearn"),
        default=lam_convention,
        help="mean: mean loss + lambda*||w||^2; sklearn: lambda is 1/C of a summed loss",
    )
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--config", default=None, help="key = value file; explicit flags take precedence")
    p.add_argument("--out", default=None, help="write JSON here instead of stdout")


def build_parser():
    parser = _Parser(prog="strata-shap", description="Layered Shapley data valuation.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    pv = sub.add_parser("value", help="value training points from a CSV")
    pv.add_argument("data", help="CSV of feature columns followed by a 0/1 label")
    pv.add_argument("--method", choices=("exact", "mc", "layered", "layered-private"), default="layered")
    pv.add_argument("--game", choices=("logistic", "additive", "erm01"), default="logistic")
    pv.add_argument("--point", default="all", help="index or 'all'")
    pv.add_argument("--heldout", default=None, help="CSV scored by the logistic value function")
    pv.add_argument("--header", action="store_true", help="CSV files start with a header row")
    pv.add_argument("--normalize", action="store_true", help="min-max scale features using training extremes")
    pv.add_argument("--permutations", type=int, default=None, help="override the mc sample size")
    pv.add_argument("--cap", type=int, default=DEFAULT_CAP, help="largest n for exact enumeration")
    pv.add_argument("--baseline-filter", type=float, default=None, help="skip coalitions valued below this")
    _common(pv, "mean")
    pv.set_defaults(handler=cmd_value)

    pe = sub.add_parser("experiment", help="synthetic experiments")
    esub = pe.add_subparsers(dest="experiment", required=True, parser_class=_Parser)

    pp = esub.add_parser("plan", help="per-layer sample plan")
    pp.add_argument("--n", type=int, default=100)
    pp.add_argument("--group-size", type=int, default=1)
    pp.add_argument("--limit", type=int, default=None, help="print only the first LIMIT layers")
    _common(pp, "mean")

    for name, helptext in (
        ("removal-curve", "accuracy after removing ranked points"),
        ("rank-correlation", "Spearman rho of private vs non-private values"),
    ):
        px = esub.add_parser(name, help=helptext)
        px.add_argument("--n", type=int, default=100, help="training points")
        px.add_argument("--d", type=int, default=50)
        px.add_argument("--heldout-size", type=int, default=500)
        px.add_argument("--test-size", type=int, default=1000)
        px.add_argument("--label-noise", type=float, default=0.1)
        px.add_argument("--runs", type=int, default=5)
        px.add_argument("--no-filter", action="store_true", help="keep coalitions below the -ln 2 baseline")
        _common(px, "sklearn")
        if name == "removal-curve":
            px.add_argument("--method", choices=("layered", "layered-private", "mc"), default="layered")
            px.add_argument("--step", type=float, default=0.05)
            px.add_argument("--max-fraction", type=float, default=0.5)
            px.add_argument("--random-orders", type=int, default=5)
            px.add_argument("--csv", default=None, help="write curve rows here")

    pt = esub.add_parser("touch-stats", help="share of points read per query")
    pt.add_argument("--n", type=int, default=1000)
    pt.add_argument("--queries", type=int, default=1)
    pt.add_argument("--no-mc", action="store_true")
    _common(pt, "mean")

    pe.set_defaults(handler=cmd_experiment)
    return parser


def _read_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror}") from None
    if not text.lstrip().startswith("["):
        text = "[strata-shap]\n" + text
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise UsageError(f"bad config file {path}: {exc}") from None
    out = {}
    for section in cp.sections():
        for key, value in cp.items(section):
            out[key.replace("-", "_")] = value.strip().strip('"').strip("'")
    return out


def _apply_config(parser, argv):
    """Re-parse with config values as defaults so explicit flags still win."""
    args = parser.parse_args(argv)
    if getattr(args, "config", None) is None:
        return args
    config = _read_config(args.config)
    known = vars(args)
    aliases = {"lambda": "lam"}
    for key in list(config):
        dest = aliases.get(key, key)
        if dest not in known or dest in ("handler", "command", "experiment", "config"):
            raise UsageError(f"unknown config key {key!r}")
        config[dest] = config.pop(key)
    # the same coercion the flag itself would apply
    defaults = {}
    sub = _find_subparser(parser, args)
    for action in sub._actions:
        if action.dest in config:
            raw = config[action.dest]
            if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
                defaults[action.dest] = raw.lower() in ("1", "true", "yes", "on")
            else:
                try:
                    val = action.type(raw) if action.type else raw
                except ValueError:
                    raise UsageError(f"config key {action.dest!r}: bad value {raw!r}") from None
                if action.choices and val not in action.choices:
                    raise UsageError(f"config key {action.dest!r}: {val!r} not in {list(action.choices)}")
                defaults[action.dest] = val
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _find_subparser(parser, args):
    node = parser
    for dest in ("command", "experiment"):
        name = getattr(args, dest, None)
        if name is None:
            break
        for action in node._actions:
            if isinstance(action, argparse._SubParsersAction) and name in action.choices:
                node = action.choices[name]
                break
    return node


def _check(cond, message):
    if not cond:
        raise UsageError(message)


def validate(args):
    """Range-check every numeric flag before any work starts."""
    _check(args.alpha > 0 and math.isfinite(args.alpha), "--alpha must be positive")
    _check(0 < args.beta < 1, "--beta must lie in (0, 1)")
    _check(args.c > 0 and math.isfinite(args.c), "--c must be positive")
    _check(args.epsilon > 0 and math.isfinite(args.epsilon), "--epsilon must be positive")
    _check(args.lam > 0 and math.isfinite(args.lam), "--lambda must be positive")
    _check(args.seed >= 0, "--seed must be non-negative")
    _check(args.threads is None or args.threads >= 1, "--threads must be at least 1")
    if hasattr(args, "n"):
        _check(args.n >= 2, "--n must be at least 2")
    for name in ("runs", "queries", "random_orders", "group_size", "d", "heldout_size", "test_size"):
        if getattr(args, name, None) is not None:
            _check(getattr(args, name) >= 1, f"--{name.replace('_', '-')} must be at least 1")
    if getattr(args, "limit", None) is not None:
        _check(args.limit >= 1, "--limit must be at least 1")
    if getattr(args, "label_noise", None) is not None:
        _check(0 <= args.label_noise < 0.5, "--label-noise must lie in [0, 0.5)")
    if getattr(args, "step", None) is not None:
        _check(0 < args.step <= args.max_fraction < 1, "need 0 < --step <= --max-fraction < 1")
    if getattr(args, "permutations", None) is not None:
        _check(args.permutations >= 1, "--permutations must be at least 1")
    if getattr(args, "cap", None) is not None:
        _check(args.cap >= 1, "--cap must be at least 1")
    if getattr(args, "point", None) is not None and args.point != "all":
        try:
            point = int(args.point)
        except ValueError:
            raise UsageError("--point must be an index or 'all'") from None
        _check(point >= 0, "--point must be non-negative")


def _lam(args, n_train):
    return args.lam / (2.0 * n_train) if args.lambda_convention == "sklearn" else args.lam


def _emit(doc, out):
    text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w") as fh:
            fh.write(text)


# ---------------------------------------------------------------- commands


def _load(path, header):
    try:
        return Dataset.from_csv(path, header=header)
    except FileNotFoundError:
        raise OSError(f"{path}: no such file") from None


def cmd_value(args):
    train = _load(args.data, args.header)
    heldout = _load(args.heldout, args.header) if args.heldout else None
    if heldout is not None and heldout.d != train.d:
        raise DatasetError("heldout and training CSVs have different feature counts")
    if args.normalize:
        lo, hi = train.X.min(axis=0), train.X.max(axis=0)
        train = train.normalized(lo, hi)
        heldout = heldout.normalized(lo, hi) if heldout is not None else None
    points = None
    if args.point != "all":
        _check(int(args.point) < train.n, f"--point {args.point} outside [0, {train.n})")
        points = [int(args.point)]
    if args.method == "exact":
        _check(train.n <= args.cap, f"exact enumeration capped at n={args.cap}, data has n={train.n}")

    lam = _lam(args, train.n)
    kw = {"baseline_filter": args.baseline_filter}
    if args.game == "logistic":
        v = LogisticValue(train, lam, heldout, **kw)
    elif args.game == "additive":
        v = AdditiveGame(train.n, **kw)
    else:
        v = ThresholdERMValue(train, **kw)

    privacy = None
    if args.method == "exact":
        est = exact_all(v, cap=args.cap)
        if points is not None:
            j = points[0]
            est.values, est.points = est.values[[j]], est.points[[j]]
    elif args.method == "mc":
        m = args.permutations or mc_sample_size(args.alpha, args.beta, args.c)
        est = mc_estimate(v, points[0], m, args.seed) if points else mc_estimate_all(v, m, args.seed)
    elif args.method == "layered":
        est = layered_estimate_all(v, args.alpha, args.beta, args.c, args.seed, points=points)
    else:
        params = PrivacyParams.for_value_function(v, args.alpha, args.beta, args.c, args.epsilon)
        est = private_layered_all(v, args.alpha, args.beta, params, args.c, args.seed, points=points)
        privacy = params.record()

    doc = {
        "schema": SCHEMA,
        "kind": "estimate",
        "params": {
            "method": args.method,
            "game": args.game,
            "value_kind": v.value_kind,
            "alpha": args.alpha,
            "beta": args.beta,
            "c": args.c,
            "epsilon": args.epsilon,
            "lambda": lam,
            "seed": args.seed,
            "n": train.n,
            "d": train.d,
        },
        "estimate": est.to_dict(),
    }
    if privacy is not None:
        doc["privacy"] = privacy
    _emit(doc, args.out)
    return EXIT_OK


def _experiment_config(args, **extra):
    return ExperimentConfig(
        n_train=args.n,
        n_heldout=args.heldout_size,
        n_test=args.test_size,
        d=args.d,
        label_noise=args.label_noise,
        alpha=args.alpha,
        beta=args.beta,
        c=args.c,
        epsilon=args.epsilon,
        lam=args.lam,
        lam_convention=args.lambda_convention,
        baseline_filter=not args.no_filter,
        runs=args.runs,
        seed=args.seed,
        **extra,
    )


def cmd_experiment(args):
    kind = args.experiment
    if kind == "plan":
        plan = build_plan(args.n, args.alpha, args.beta, args.c, args.group_size)
        if args.out is None:
            print(f"n={plan.n} alpha={plan.alpha} beta={plan.beta} c={plan.c}")
            print(f"{'k':>6} {'m_k':>14} {'log10 w_k':>10} {'p_k':>10}  mode")
            for row in plan.rows(args.limit):
                print(
                    f"{row['k']:>6} {row['m_k']:>14.4f} {row['log10_w_k']:>10.3f} {row['p_k']:>10.4g}  {row['mode']}"
                )
            print(f"expected coalitions {plan.expected_coalitions:.2f}; sample bound {plan.sample_bound:.2f}")
        else:
            _emit({"schema": SCHEMA, "kind": "plan", "plan": plan.to_dict(args.limit)}, args.out)
        return EXIT_OK

    if kind == "touch-stats":
        _check(args.queries <= args.n, "--queries cannot exceed --n")
        stats = touch_stats(args.n, args.alpha, args.beta, args.c, args.seed, args.queries, not args.no_mc)
        stats["within_bound"] = stats["touch_bound"] >= 1.0 or stats["layered_touched_fraction"] <= stats["touch_bound"]
        _emit({"schema": SCHEMA, "kind": "touch-stats", "stats": stats}, args.out)
        return EXIT_OK

    if kind == "rank-correlation":
        cfg = _experiment_config(args)
        runs = [rank_correlation_run(cfg, args.seed + r) for r in range(args.runs)]
        mean_rho = float(np.mean([r["rho"] for r in runs]))
        print(f"mean spearman rho over {args.runs} runs: {mean_rho:.4f}", file=sys.stderr)
        _emit(
            {"schema": SCHEMA, "kind": "rank-correlation", "config": config_record(cfg), "runs": runs, "mean_rho": mean_rho},
            args.out,
        )
        return EXIT_OK

    steps = int(round(args.max_fraction / args.step))
    fractions = tuple(round(args.step * j, 10) for j in range(steps + 1))
    cfg = _experiment_config(args, method=args.method, fractions=fractions, random_orders=args.random_orders)
    all_curves, runs = [], []
    for r in range(args.runs):
        curves, _ = removal_experiment(cfg, args.seed + r)
        all_curves.extend(curves)
        runs.append({c.order: [float(a) for a in c.accuracies] for c in curves} | {"seed": args.seed + r})
    if args.csv:
        write_curves_csv(args.csv, all_curves)
    _emit(
        {"schema": SCHEMA, "kind": "removal-curve", "config": config_record(cfg), "fractions": list(fractions), "runs": runs},
        args.out,
    )
    return EXIT_OK


# ---------------------------------------------------------------- entry


def main(argv=None):
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        validate(args)
    except UsageError as exc:
        print(f"strata-shap: error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except OSError as exc:
        print(f"strata-shap: error: {exc}", file=sys.stderr)
        return EXIT_IO
    threads = args.threads if args.threads is not None else _accel.default_threads()
    _accel.set_threads(threads)
    try:
        return args.handler(args)
    except UsageError as exc:
        print(f"strata-shap: error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except (OSError, DatasetError) as exc:
        print(f"strata-shap: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ShapleyError as exc:
        print(f"strata-shap: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ESTIMATOR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
