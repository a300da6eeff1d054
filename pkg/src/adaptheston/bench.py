"""Benchmark experiments on the at-the-money test case.

Each experiment is described by an :class:`ExperimentSpec` and returns plain
rows that can be written as CSV.

* :func:`run_bias_experiment` prices the option in independent trials and
  summarises the bias against :data:`REFERENCE_PRICE`.
* :func:`run_accuracy_time` relates accuracy (inverse absolute relative bias)
  to wall-clock time along a ladder of tolerances or substeps.
* :func:`run_interval_histogram` histograms the number of segments used by
  the adaptive estimator, and the unused tolerance, per endpoint-variance band.
"""

import io
import math
import sys
import time
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy import stats

from .adapt import AdaptConfig, RefineSpace, estimate_integral_batch
from .besq import HestonParams
from .heston import Scheme, price_european_call

__all__ = [
    "REFERENCE_PRICE",
    "BAND_EDGES",
    "LEAF_BIN_EDGES",
    "TOLERANCE_LADDER",
    "TOLERANCE_LADDER_RATIO2",
    "SUBSTEP_LADDER",
    "BenchScheme",
    "ExperimentSpec",
    "BiasSummary",
    "HistogramResult",
    "trial_seed",
    "run_bias_experiment",
    "summarize_bias",
    "bias_nonincreasing",
    "run_accuracy_time",
    "accuracy_slope",
    "run_interval_histogram",
    "format_float",
    "write_csv",
]

#: Benchmark price of the at-the-money call, quoted to four decimals.
REFERENCE_PRICE = 6.8061
#: Half a unit in the last quoted digit of the benchmark price.
REFERENCE_ROUNDING = 5e-5

#: Upper edges of the endpoint-variance bands (the first band starts at 0).
BAND_EDGES = (1e-6, 1e-4, 0.01, 0.04, 0.09, 0.16, 0.25, 0.36, 0.49, 0.64, 0.81, 1.0)
#: Right edges of the segment-count bins.
LEAF_BIN_EDGES = tuple(range(8, 89, 8))
#: Right edges of the unused-tolerance bins, as fractions of the tolerance.
RESIDUAL_BIN_FRACTIONS = tuple(np.round(np.linspace(0.1, 1.0, 10), 10))

#: Tolerances by decades, and a ratio-2 ladder ending near 1.56e-6.
TOLERANCE_LADDER = (1e-3, 1e-4, 1e-5, 1e-6)
TOLERANCE_LADDER_RATIO2 = tuple(1e-4 / 2**k for k in range(7))
SUBSTEP_LADDER = (8, 16, 32, 64)


class BenchScheme(str, Enum):
    """Pricing schemes compared by the experiments."""

    ADAPT = "adapt"
    ADAPT_PLAIN = "adapt_plain"
    PREDICTOR_CORRECTOR = "predictor_corrector"

    @property
    def is_adaptive(self):
        return self is not BenchScheme.PREDICTOR_CORRECTOR


@dataclass(frozen=True)
class ExperimentSpec:
    """One knob point of an experiment.

    Parameters
    ----------
    scheme : BenchScheme or str
    tolerance : float, optional
        ``delta0`` of the adaptive schemes.
    substeps : int, optional
        Substeps of the predictor-corrector scheme.
    n_paths : int, default 5000
        Paths per trial (runs per band for the interval histogram).
    n_trials : int, default 50
    seed : int, default 0
    out : str, optional
        CSV destination; ``None`` keeps the rows in memory only.
    params : HestonParams, default benchmark
    strike, maturity : float
    refine_space : RefineSpace or str, default "t_space"
    max_depth : int, default 40
    workers : int, default 1
    reference : float
        Price the bias is measured against.
    """

    scheme: BenchScheme
    tolerance: float = None
    substeps: int = None
    n_paths: int = 5000
    n_trials: int = 50
    seed: int = 0
    out: str = None
    params: HestonParams = field(default_factory=HestonParams.benchmark)
    strike: float = 100.0
    maturity: float = 1.0
    refine_space: RefineSpace = RefineSpace.T_SPACE
    max_depth: int = 40
    workers: int = 1
    reference: float = REFERENCE_PRICE

    def __post_init__(self):
        object.__setattr__(self, "scheme", BenchScheme(self.scheme))
        object.__setattr__(self, "refine_space", RefineSpace(self.refine_space))
        if self.scheme.is_adaptive:
            if self.tolerance is None or self.substeps is not None:
                raise ValueError(f"scheme {self.scheme.value} takes a tolerance, not substeps")
            if not self.tolerance > 0:
                raise ValueError("tolerance must be > 0")
        else:
            if self.substeps is None or self.tolerance is not None:
                raise ValueError("the predictor-corrector scheme takes substeps, not a tolerance")
            if int(self.substeps) != self.substeps or self.substeps < 1:
                raise ValueError("substeps must be a positive integer")
        if self.n_paths < 1 or self.n_trials < 1:
            raise ValueError("n_paths and n_trials must be >= 1")

    @property
    def knob(self):
        return self.tolerance if self.scheme.is_adaptive else self.substeps

    def with_knob(self, value):
        """Copy of this spec at another tolerance or substep count."""
        if self.scheme.is_adaptive:
            return replace(self, tolerance=float(value))
        return replace(self, substeps=int(value))

    def adapt_config(self):
        if not self.scheme.is_adaptive:
            return None
        return AdaptConfig(self.tolerance, self.max_depth, self.refine_space,
                           self.scheme is BenchScheme.ADAPT)


@dataclass(frozen=True)
class BiasSummary:
    """Bias of one knob point over its trials."""

    scheme: str
    knob: float
    bias: float
    stderr: float
    n_trials: int


@dataclass
class HistogramResult:
    """Per-band segment counts and unused tolerance.

    ``leaf_rows`` and ``residual_rows`` are ``(band, bin_right, count)``
    tuples; ``leaf_counts`` and ``residuals`` hold the raw per-run values,
    one array per band.
    """

    bands: tuple
    leaf_rows: list
    residual_rows: list
    leaf_counts: list
    residuals: list
    right_values: list


def trial_seed(seed, trial):
    """Seed of one trial, derived from the experiment seed."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(trial),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def format_float(x):
    """Shortest round-trip text for a float (17 significant digits)."""
    return format(float(x), ".17g")


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format_float(v)
    return str(v)


def write_csv(out, header, rows):
    """Write rows as UTF-8, comma-delimited CSV with LF line endings.

    Parameters
    ----------
    out : str, file-like or None
        Path, open text stream, or ``None`` for standard output.
    header : sequence of str
    rows : iterable of sequences
    """
    lines = [",".join(header)] + [",".join(_cell(v) for v in row) for row in rows]
    text = "\n".join(lines) + "\n"
    if out is None:
        sys.stdout.write(text)
    elif isinstance(out, io.TextIOBase) or hasattr(out, "write"):
        out.write(text)
    else:
        try:
            with open(out, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        except OSError as exc:
            raise OSError(f"cannot write CSV to {out!r}: {exc}") from exc


def _price_trial(spec, trial):
    scheme = Scheme.EXACT if spec.scheme.is_adaptive else Scheme.PREDICTOR_CORRECTOR
    return price_european_call(trial_seed(spec.seed, trial), spec.params, spec.adapt_config(),
                               spec.strike, spec.maturity, spec.n_paths, scheme,
                               substeps=spec.substeps, workers=spec.workers)


BIAS_HEADER = ("scheme", "knob", "trial", "price", "stderr")


def run_bias_experiment(spec):
    """Price in independent trials and summarise the bias.

    Returns
    -------
    list of tuple
        One ``(scheme, knob, trial, price, stderr)`` row per trial, then a
        summary row whose ``trial`` field is ``"bias"``, whose ``price``
        field is the mean price minus ``spec.reference`` and whose
        ``stderr`` field is the standard error of that bias.  With a single
        trial the within-trial standard error is used.
    """
    rows = []
    prices = np.empty(spec.n_trials)
    errs = np.empty(spec.n_trials)
    for j in range(spec.n_trials):
        res = _price_trial(spec, j)
        prices[j], errs[j] = res.price, res.stderr
        rows.append((spec.scheme.value, spec.knob, j, res.price, res.stderr))
    if spec.n_trials > 1:
        se = prices.std(ddof=1) / math.sqrt(spec.n_trials)
    else:
        se = errs[0]
    rows.append((spec.scheme.value, spec.knob, "bias", prices.mean() - spec.reference, se))
    if spec.out is not None:
        write_csv(spec.out, BIAS_HEADER, rows)
    return rows


def summarize_bias(rows):
    """Pick the summary rows out of bias-experiment output."""
    return [BiasSummary(r[0], r[1], r[3], r[4], 0) for r in rows if r[2] == "bias"]


def bias_nonincreasing(summaries, level=0.05):
    """Test that ``|bias|`` does not grow along a knob ladder.

    For each consecutive pair the null hypothesis is that the later
    ``|bias|`` is no larger than the earlier one.  It is rejected when the
    increase exceeds the two-sided normal critical value times the combined
    standard error.

    Returns
    -------
    list of tuple
        ``(knob_before, knob_after, z, ok)`` for each consecutive pair.
    """
    crit = stats.norm.ppf(1.0 - 0.5 * level)
    out = []
    for a, b in zip(summaries[:-1], summaries[1:]):
        z = (abs(b.bias) - abs(a.bias)) / math.hypot(a.stderr, b.stderr)
        out.append((a.knob, b.knob, z, bool(z <= crit)))
    return out


ACCURACY_HEADER = ("scheme", "knob", "mean_time_s", "accuracy", "bias", "bias_stderr",
                   "noise_limited")


def run_accuracy_time(specs):
    """Accuracy and mean wall-clock time per trial along a knob ladder.

    Accuracy is ``1 / |bias / reference|``.  When ``|bias|`` is below its
    standard error (the trial noise combined with the rounding of the
    reference) the bias is not resolved: the row is flagged
    ``noise_limited`` and the accuracy is capped at ``reference / stderr``.

    Parameters
    ----------
    specs : ExperimentSpec or sequence of ExperimentSpec
        One spec per knob point; the first spec's ``out`` names the CSV.

    Returns
    -------
    list of tuple
        ``(scheme, knob, mean_time_s, accuracy, bias, bias_stderr,
        noise_limited)`` rows in the order given.
    """
    if isinstance(specs, ExperimentSpec):
        specs = [specs]
    rows = []
    for spec in specs:
        prices = np.empty(spec.n_trials)
        # keep compilation and cache loading out of the timing
        _price_trial(replace(spec, n_paths=2), 0)
        start = time.perf_counter()
        for j in range(spec.n_trials):
            prices[j] = _price_trial(spec, j).price
        mean_time = (time.perf_counter() - start) / spec.n_trials
        bias = prices.mean() - spec.reference
        se_trials = prices.std(ddof=1) / math.sqrt(spec.n_trials) if spec.n_trials > 1 else 0.0
        se = math.hypot(se_trials, REFERENCE_ROUNDING)
        limited = abs(bias) < se
        accuracy = spec.reference / (se if limited else abs(bias))
        rows.append((spec.scheme.value, spec.knob, mean_time, float(accuracy), float(bias), se,
                     bool(limited)))
    if specs and specs[0].out is not None:
        write_csv(specs[0].out, ACCURACY_HEADER, rows)
    return rows


def accuracy_slope(rows, n_points=3):
    """Least-squares slope of ``log(accuracy)`` against time over the first points."""
    t = np.array([r[2] for r in rows[:n_points]])
    a = np.log([r[3] for r in rows[:n_points]])
    return float(np.polyfit(t, a, 1)[0])


def _terminal_variance_law(params, maturity):
    # V_T = scale * noncentral chi-square(df, nc) given V_0
    k = params.kappa
    decay = math.exp(-k * maturity)
    scale = params.sigma_v**2 * (1.0 - decay) / (4.0 * k)
    nc = params.v0 * decay / scale
    return scale, params.dimension, nc


def _draw_in_band(u, lo, hi, scale, df, nc):
    # inverse transform restricted to (lo, hi], on whichever tail keeps precision
    if stats.ncx2.sf(lo / scale, df, nc) > 0.5:
        a, b = stats.ncx2.cdf(lo / scale, df, nc), stats.ncx2.cdf(hi / scale, df, nc)
        v = scale * stats.ncx2.ppf(a + u * (b - a), df, nc)
    else:
        a, b = stats.ncx2.sf(hi / scale, df, nc), stats.ncx2.sf(lo / scale, df, nc)
        v = scale * stats.ncx2.isf(a + u * (b - a), df, nc)
    return np.clip(v, lo, hi)


HISTOGRAM_HEADER = ("band", "bin_right", "count")


def _histogram_rows(bands, per_band, edges):
    rows = []
    for band, values in zip(bands, per_band):
        # bin i holds edges[i-1] < v <= edges[i]; overflow joins the last bin
        idx = np.minimum(np.searchsorted(edges, values, side="left"), edges.size - 1)
        counts = np.bincount(idx, minlength=edges.size)
        rows.extend((band, e, int(c)) for e, c in zip(edges, counts))
    return rows


def run_interval_histogram(spec, bands=BAND_EDGES, bins=LEAF_BIN_EDGES):
    """Segment counts and unused tolerance of single-step estimates, by band.

    The step is ``[0, spec.maturity]`` starting from ``V0``.  For each band
    ``(lo, hi]`` of the terminal variance, ``spec.n_paths`` terminal values
    are drawn from the exact transition law conditioned on the band, and
    the estimator runs with tolerance ``spec.tolerance`` on each endpoint
    pair.  Counts above the last bin edge go into the last bin.

    Returns
    -------
    HistogramResult
        With ``spec.out`` set, the segment-count table is written there and
        the unused-tolerance table next to it with an ``_unused`` suffix.
    """
    if not spec.scheme.is_adaptive:
        raise ValueError("the interval histogram needs an adaptive scheme")
    p = spec.params
    cfg = spec.adapt_config()
    scale, df, nc = _terminal_variance_law(p, spec.maturity)
    lows = (0.0,) + tuple(bands[:-1])
    leaf_counts, residuals, rights = [], [], []
    for k, (lo, hi) in enumerate(zip(lows, bands)):
        u = np.random.Generator(np.random.PCG64(np.random.SeedSequence(
            int(spec.seed), spawn_key=(1, k)))).random(spec.n_paths)
        v_r = _draw_in_band(u, lo, hi, scale, df, nc)
        x_r = v_r * math.exp(p.kappa * spec.maturity)
        est = estimate_integral_batch(trial_seed(spec.seed, k), p, cfg, 0.0, spec.maturity,
                                      p.v0, x_r)
        leaf_counts.append(est.leaf_count)
        residuals.append(cfg.delta0 - est.variance_sum)
        rights.append(v_r)
    edges = np.asarray(bins, dtype=float)
    res_edges = cfg.delta0 * np.asarray(RESIDUAL_BIN_FRACTIONS)
    result = HistogramResult(tuple(bands), _histogram_rows(bands, leaf_counts, edges),
                             _histogram_rows(bands, residuals, res_edges), leaf_counts,
                             residuals, rights)
    if spec.out is not None:
        write_csv(spec.out, HISTOGRAM_HEADER, result.leaf_rows)
        root, dot, ext = str(spec.out).rpartition(".")
        unused = f"{root}_unused.{ext}" if dot else f"{spec.out}_unused"
        write_csv(unused, HISTOGRAM_HEADER, result.residual_rows)
    return result
