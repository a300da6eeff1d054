"""Command-line front end; every subcommand writes CSV.

Usage::

    adaptheston price --tolerance 1e-6 --paths 10000 --seed 1
    adaptheston bench-bias --scheme adapt --tolerance 1e-3,1e-4,1e-5,1e-6
    adaptheston bench-accuracy --scheme predictor_corrector --substeps 8,16,32,64
    adaptheston hist-intervals --tolerance 1e-6 --paths 2000 --out hist.csv
    adaptheston validate --suite all
    adaptheston validate-moments --paths 100000

Model and run settings can also come from ``--config FILE`` holding
``key = value`` lines named after the long flags (``sigma-v = 0.61``);
flags given on the command line win.  ``#`` starts a comment.
"""

import argparse
import sys

from .adapt import AdaptConfig, RefineSpace
from .besq import HestonParams
from .bench import (ACCURACY_HEADER, BIAS_HEADER, HISTOGRAM_HEADER, SUBSTEP_LADDER,
                    TOLERANCE_LADDER, BenchScheme, ExperimentSpec, run_accuracy_time,
                    run_bias_experiment, run_interval_histogram, write_csv)
from .heston import Scheme, price_european_call
from .validation import (CHECK_HEADER, COMPARISON_HEADER, SUITES, moments_comparison,
                         random_moment_configs, run_validation)

__all__ = ["main", "build_parser", "read_config"]

_BENCH = HestonParams.benchmark()

# flag -> (type, default, help)
COMMON_FLAGS = {
    "s0": (float, _BENCH.s0, "initial price"),
    "strike": (float, 100.0, "option strike"),
    "v0": (float, _BENCH.v0, "initial variance"),
    "kappa": (float, _BENCH.kappa, "mean-reversion speed"),
    "theta": (float, _BENCH.theta, "long-run variance"),
    "sigma-v": (float, _BENCH.sigma_v, "volatility of variance"),
    "rho": (float, _BENCH.rho, "price/variance correlation"),
    "rate": (float, _BENCH.r, "risk-free rate"),
    "maturity": (float, 1.0, "maturity in years"),
    "mu": (float, None, "price drift (defaults to the rate)"),
    "tolerance": (str, None, "adaptive tolerance delta0 (comma list for ladders)"),
    "substeps": (str, None, "predictor-corrector substeps (comma list for ladders)"),
    "paths": (int, None, "paths per trial (runs per band for hist-intervals)"),
    "trials": (int, 50, "independent trials per knob point"),
    "seed": (int, 0, "master seed"),
    "scheme": (str, "adapt", "adapt, adapt_plain, predictor_corrector (exact = adapt)"),
    "refine-space": (str, "t_space", "bisect in t_space or tau_space"),
    "max-depth": (int, 40, "bisection depth limit"),
    "reservoir": (str, None, "true/false; overrides the adapt/adapt_plain choice"),
    "workers": (int, 1, "worker processes"),
    "out": (str, None, "output CSV path (default: standard output)"),
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def read_config(path):
    """Parse a ``key = value`` file into a dict keyed by flag name."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key = key.strip().replace("_", "-")
            if key not in COMMON_FLAGS and key not in ("suite", "points", "configs"):
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = value.strip()
    return values


def _add_common(p):
    p.add_argument("--config", help="file of 'key = value' defaults")
    for flag, (_, _, help_) in COMMON_FLAGS.items():
        p.add_argument(f"--{flag}", default=None, help=help_)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="adaptheston",
        description="Heston Monte Carlo with exact BESQ transitions and adaptive "
                    "integrated variance.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("price", "price the European call"),
                        ("bench-bias", "bias per knob point over independent trials"),
                        ("bench-accuracy", "accuracy against time along a knob ladder"),
                        ("hist-intervals", "segment-count and unused-tolerance histograms"),
                        ("validate", "run oracle validation suites"),
                        ("validate-moments", "closed-form moments against the bridge oracle")):
        p = sub.add_parser(name, help=help_)
        _add_common(p)
        if name == "validate":
            p.add_argument("--suite", default=None, choices=sorted(SUITES) + ["all"])
        if name == "validate-moments":
            p.add_argument("--points", default=None, help="bridge grid points (default 4096)")
            p.add_argument("--configs", default=None, help="random configurations (default 20)")
    return parser


def _settings(args):
    """Merge flags over the config file over the defaults."""
    conf = read_config(args.config) if args.config else {}
    out = {}
    for flag, (typ, default, _) in COMMON_FLAGS.items():
        raw = getattr(args, flag.replace("-", "_"))
        if raw is None:
            raw = conf.get(flag)
        out[flag] = default if raw is None else typ(raw)
    for extra in ("suite", "points", "configs"):
        if hasattr(args, extra):
            raw = getattr(args, extra)
            out[extra] = raw if raw is not None else conf.get(extra)
    return out


def _params(s):
    return HestonParams(kappa=s["kappa"], theta=s["theta"], sigma_v=s["sigma-v"],
                        rho=s["rho"], s0=s["s0"], v0=s["v0"], r=s["rate"], mu=s["mu"])


def _scheme(s):
    name = s["scheme"].lower()
    if name == "exact":
        name = "adapt"
    scheme = BenchScheme(name)
    if s["reservoir"] is not None and scheme.is_adaptive:
        flag = s["reservoir"].lower()
        if flag not in _TRUE | _FALSE:
            raise ValueError(f"--reservoir must be true or false, got {s['reservoir']!r}")
        scheme = BenchScheme.ADAPT if flag in _TRUE else BenchScheme.ADAPT_PLAIN
    return scheme


def _knobs(s, scheme, ladder_default, single_default):
    if scheme.is_adaptive:
        raw, conv, ladder = s["tolerance"], float, TOLERANCE_LADDER
    else:
        raw, conv, ladder = s["substeps"], int, SUBSTEP_LADDER
    if raw is None:
        return list(ladder) if ladder_default else [single_default[scheme.is_adaptive]]
    return [conv(float(v)) for v in raw.split(",") if v.strip()]


def _spec(s, scheme, knob, n_paths):
    kw = dict(tolerance=knob) if scheme.is_adaptive else dict(substeps=knob)
    return ExperimentSpec(scheme, n_paths=n_paths, n_trials=s["trials"], seed=s["seed"],
                          params=_params(s), strike=s["strike"], maturity=s["maturity"],
                          refine_space=RefineSpace(s["refine-space"]),
                          max_depth=s["max-depth"], workers=s["workers"], **kw)


def _cmd_price(s):
    scheme = _scheme(s)
    knob = _knobs(s, scheme, False, {True: 1e-6, False: 64})[0]
    n_paths = s["paths"] or 10000
    p = _params(s)
    if scheme.is_adaptive:
        cfg = AdaptConfig(knob, s["max-depth"], s["refine-space"],
                          scheme is BenchScheme.ADAPT)
        res = price_european_call(s["seed"], p, cfg, s["strike"], s["maturity"], n_paths,
                                  Scheme.EXACT, workers=s["workers"])
    else:
        res = price_european_call(s["seed"], p, None, s["strike"], s["maturity"], n_paths,
                                  Scheme.PREDICTOR_CORRECTOR, substeps=knob,
                                  workers=s["workers"])
    write_csv(s["out"], ("scheme", "knob", "paths", "price", "stderr", "time_s",
                         "mean_leaf_count"),
              [(scheme.value, knob, n_paths, res.price, res.stderr, res.timing,
                res.mean_leaf_count)])
    return 0


def _cmd_bench_bias(s):
    scheme = _scheme(s)
    rows = []
    for knob in _knobs(s, scheme, True, None):
        rows.extend(run_bias_experiment(_spec(s, scheme, knob, s["paths"] or 5000)))
    write_csv(s["out"], BIAS_HEADER, rows)
    return 0


def _cmd_bench_accuracy(s):
    scheme = _scheme(s)
    specs = [_spec(s, scheme, k, s["paths"] or 5000) for k in _knobs(s, scheme, True, None)]
    write_csv(s["out"], ACCURACY_HEADER, run_accuracy_time(specs))
    return 0


def _cmd_hist_intervals(s):
    scheme = _scheme(s)
    if not scheme.is_adaptive:
        raise ValueError("hist-intervals needs an adaptive scheme")
    knob = _knobs(s, scheme, False, {True: 1e-6, False: None})[0]
    res = run_interval_histogram(_spec(s, scheme, knob, s["paths"] or 2000))
    rows = ([("leaf_count",) + r for r in res.leaf_rows]
            + [("unused_tolerance",) + r for r in res.residual_rows])
    write_csv(s["out"], ("table",) + HISTOGRAM_HEADER, rows)
    return 0


def _cmd_validate(s):
    checks = run_validation(s.get("suite") or "all", seed=s["seed"])
    write_csv(s["out"], CHECK_HEADER, [c.row() for c in checks])
    return 0 if all(c.passed for c in checks) else 1


def _cmd_validate_moments(s):
    n_cfg = int(s.get("configs") or 20)
    n_points = int(s.get("points") or 2**12)
    rows = moments_comparison(_params(s), random_moment_configs(n_cfg, s["seed"]),
                              n_paths=s["paths"] or 10**5, n_points=n_points, seed=s["seed"],
                              workers=s["workers"])
    write_csv(s["out"], COMPARISON_HEADER, rows)
    return 0 if all(r[-1] for r in rows) else 1


COMMANDS = {
    "price": _cmd_price,
    "bench-bias": _cmd_bench_bias,
    "bench-accuracy": _cmd_bench_accuracy,
    "hist-intervals": _cmd_hist_intervals,
    "validate": _cmd_validate,
    "validate-moments": _cmd_validate_moments,
}


def main(argv=None):
    """Entry point; returns the process exit status."""
    args = build_parser().parse_args(argv)
    try:
        settings = _settings(args)
        return COMMANDS[args.command](settings)
    except (ValueError, OSError) as exc:
        print(f"adaptheston {args.command}: error: {exc}", file=sys.stderr)
        return 2
