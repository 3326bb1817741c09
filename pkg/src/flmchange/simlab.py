"""Simulation study: data generators, rejection-rate experiments, figure data.

The design follows the finite-sample study of the method: covariates are
sums of five randomly scaled sines, the coefficient function is the
Gamma(3, rate 1/3) density, and the error distribution changes at
``floor(n * change_fraction)`` from a standard normal to one of three
alternatives with mean zero, or from N(0, 0.25) to N(0, (0.5 + delta)^2).
"""

from __future__ import annotations

import csv
import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np
from scipy import integrate

from .errors import ConfigurationError, ExperimentAbortedError, NumericalFailureError
from .estimator import DEFAULT_LAMBDA_GRID, SplineBasis, gcv_select, residuals
from .funcdata import FunctionalDataset, GridFunction, equidistant_grid, trapezoid_weights
from .limits import QuantileTable, replication_rng, worker_count
from .seqproc import ResidualSample, StatisticKind, run_test, sup_process_distance

__all__ = [
    "ErrorFamily",
    "ErrorSpec",
    "SimConfig",
    "RejectionRow",
    "sine_mean",
    "covariate_centering",
    "gen_covariates",
    "gamma_coefficient",
    "skew_normal_params",
    "gen_errors",
    "simulate_dataset",
    "run_experiment",
    "process_gap",
    "emit_figure_data",
]


class ErrorFamily(str, enum.Enum):
    NORMAL_STD = "normal"
    MIX_MEAN = "mix_mean"
    MIX_VAR = "mix_var"
    SKEW = "skew"
    VAR_CHANGE = "var_change"

    @classmethod
    def parse(cls, value) -> "ErrorFamily":
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("-", "_")
        for member in cls:
            if key in (member.value, member.name.lower()):
                return member
        choices = ", ".join(m.value for m in cls)
        raise ValueError(f"unknown error family {value!r}; choose from {choices}")


@dataclass(frozen=True)
class ErrorSpec:
    family: ErrorFamily
    delta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "family", ErrorFamily.parse(self.family))
        if not (math.isfinite(self.delta) and self.delta >= 0):
            raise ConfigurationError(f"delta must be finite and >= 0, got {self.delta}")
        if self.family is ErrorFamily.MIX_VAR and (1 - self.delta) ** 2 > 2:
            raise ConfigurationError("mix_var needs (1 - delta)^2 <= 2")


@dataclass(frozen=True)
class SimConfig:
    n: int
    error_spec: ErrorSpec
    seed: int = 0
    grid_points: int = 300
    change_fraction: float = 0.5
    repetitions: int = 500
    level: float = 0.05
    statistic_kind: StatisticKind = StatisticKind.KS
    basis: SplineBasis = SplineBasis()
    lambda_grid: tuple = tuple(DEFAULT_LAMBDA_GRID)
    pointwise_centering: bool = False

    def __post_init__(self):
        object.__setattr__(self, "statistic_kind", StatisticKind.parse(self.statistic_kind))
        if self.n < 4:
            raise ConfigurationError("n must be at least 4")
        if self.repetitions < 1:
            raise ConfigurationError("repetitions must be >= 1")
        if not 0 < self.level < 1:
            raise ConfigurationError("level must lie in (0, 1)")
        if not 0 < self.change_fraction < 1:
            raise ConfigurationError("change_fraction must lie in (0, 1)")

    @property
    def n_before(self) -> int:
        return int(math.floor(self.n * self.change_fraction))


@dataclass(frozen=True, eq=False)
class RejectionRow:
    family: ErrorFamily
    delta: float
    n: int
    repetitions: int
    level: float
    statistic_kind: StatisticKind
    rejections: int
    failures: int
    theta_mean: float
    theta_median: float
    statistics: np.ndarray = field(repr=False)
    p_values: np.ndarray = field(repr=False)
    theta_hats: np.ndarray = field(repr=False)

    @property
    def completed(self) -> int:
        return self.repetitions - self.failures

    @property
    def rate(self) -> float:
        return self.rejections / self.completed

    @property
    def mc_se(self) -> float:
        return math.sqrt(self.rate * (1 - self.rate) / self.completed)


# -- generators --------------------------------------------------------------


def _sine_summand(b, t):
    return b * np.sin(t * (5 - b) * 2 * np.pi)


@lru_cache(maxsize=None)
def sine_mean(t: float = 1.0) -> float:
    """``E[B sin(t (5 - B) 2 pi)]`` for ``B ~ U[0, 5]`` by adaptive quadrature."""
    val, _ = integrate.quad(
        lambda b: _sine_summand(b, t) / 5, 0.0, 5.0, limit=200, epsabs=1e-13, epsrel=1e-13
    )
    return val


def covariate_centering(grid=None, pointwise: bool = False) -> np.ndarray | float:
    """``E[B sin(. (5 - B) 2 pi) - M]`` with ``M ~ U[0, 2 pi]``.

    The default uses the time-free constant (the expectation at ``t = 1``);
    ``pointwise=True`` centers at every grid point instead.
    """
    if not pointwise:
        return sine_mean(1.0) - np.pi
    return np.array([sine_mean(float(t)) for t in grid]) - np.pi


def gen_covariates(n: int, grid, rng: np.random.Generator, pointwise: bool = False) -> np.ndarray:
    """``(n, len(grid))`` matrix of covariate curves.

    ``X_i(t) = 1/2 * sum_l (B_il sin(t (5 - B_il) 2 pi) - M_il - c)`` with
    ``B ~ U[0, 5]``, ``M ~ U[0, 2 pi]`` and the centering ``c`` from
    :func:`covariate_centering`.
    """
    grid = np.asarray(grid, dtype=float)
    B = rng.uniform(0.0, 5.0, size=(n, 5))
    M = rng.uniform(0.0, 2 * np.pi, size=(n, 5))
    c = covariate_centering(grid, pointwise)
    terms = _sine_summand(B[:, :, None], grid[None, None, :]) - M[:, :, None]
    return 0.5 * (terms.sum(axis=1) - 5 * np.asarray(c))


def gamma_coefficient(a: float, b: float, grid) -> GridFunction:
    """Gamma density with shape ``a`` and rate ``b`` sampled on ``grid``."""
    if not (a > 0 and b > 0):
        raise ConfigurationError("gamma parameters must be positive")
    grid = np.asarray(grid, dtype=float)
    vals = np.zeros_like(grid)
    pos = grid > 0
    t = grid[pos]
    vals[pos] = np.exp(a * math.log(b) - math.lgamma(a) + (a - 1) * np.log(t) - b * t)
    return GridFunction(grid, vals)


def skew_normal_params(delta: float) -> tuple[float, float, float]:
    """Location, scale and shape of the mean-zero, unit-variance skew normal."""
    s = 10 * delta
    pi = math.pi
    loc = -math.sqrt(
        2 * pi * (s**2 + s**4) / (pi**2 + (2 * pi**2 - 2 * pi) * s**2 + (pi**2 - 2 * pi) * s**4)
    )
    scale = math.sqrt(pi * (1 + s**2) / (pi + (pi - 2) * s**2))
    return loc, scale, s


def _skew_normal(size, delta, rng):
    loc, scale, shape = skew_normal_params(delta)
    u = np.abs(rng.standard_normal(size))
    v = rng.standard_normal(size)
    r = math.sqrt(1 + shape**2)
    return loc + scale * (shape / r * u + v / r)


def _post_change(spec: ErrorSpec, size: int, rng) -> np.ndarray:
    d = spec.delta
    fam = spec.family
    if fam is ErrorFamily.NORMAL_STD:
        return rng.standard_normal(size)
    if fam is ErrorFamily.MIX_MEAN:
        sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
        return 2 * d * sign + rng.standard_normal(size)
    if fam is ErrorFamily.MIX_VAR:
        sd = np.where(rng.random(size) < 0.5, abs(1 - d), math.sqrt(2 - (1 - d) ** 2))
        return sd * rng.standard_normal(size)
    if fam is ErrorFamily.SKEW:
        return _skew_normal(size, d, rng)
    return (0.5 + d) * rng.standard_normal(size)


def gen_errors(spec: ErrorSpec, n_before: int, n_after: int, rng: np.random.Generator) -> np.ndarray:
    """``n_before`` draws from the pre-change law, then ``n_after`` after it."""
    if n_before < 0 or n_after < 0:
        raise ConfigurationError("segment lengths must be non-negative")
    pre_sd = 0.5 if spec.family is ErrorFamily.VAR_CHANGE else 1.0
    before = pre_sd * rng.standard_normal(n_before)
    return np.concatenate([before, _post_change(spec, n_after, rng)])


# -- experiments -------------------------------------------------------------


def simulate_dataset(config: SimConfig, rep: int) -> tuple[FunctionalDataset, np.ndarray]:
    """Dataset and true errors of repetition ``rep``; a function of (seed, rep) only."""
    rng = replication_rng(config.seed, rep)
    grid = equidistant_grid(config.grid_points)
    X = gen_covariates(config.n, grid, rng, config.pointwise_centering)
    beta = gamma_coefficient(3.0, 1.0 / 3.0, grid)
    eps = gen_errors(config.error_spec, config.n_before, config.n - config.n_before, rng)
    y = X @ (trapezoid_weights(grid) * beta.values) + eps
    return FunctionalDataset(grid, X, y), eps


def fit_residuals(config: SimConfig, data: FunctionalDataset) -> np.ndarray:
    fit = gcv_select(data, config.basis, np.asarray(config.lambda_grid))
    return residuals(fit, data)


def _run_chunk(args):
    config, table, start, stop = args
    out = []
    for rep in range(start, stop):
        data, _ = simulate_dataset(config, rep)
        try:
            res = fit_residuals(config, data)
        except NumericalFailureError:
            out.append(None)
            continue
        r = run_test(ResidualSample.from_values(res), config.statistic_kind, config.level, table)
        out.append((r.statistic, r.p_value, r.theta_hat, r.reject))
    return out


def _map_reps(func, config, extra, workers, chunk=25):
    reps = config.repetitions
    jobs = [(config, extra, a, min(a + chunk, reps)) for a in range(0, reps, chunk)]
    workers = worker_count() if workers is None else max(1, workers)
    if workers == 1 or len(jobs) == 1:
        parts = list(map(func, jobs))
    else:
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(func, jobs))
    return [x for part in parts for x in part]


def run_experiment(config: SimConfig, quantiles, workers: int | None = None) -> RejectionRow:
    """Rejection rate of the test over ``config.repetitions`` simulated datasets.

    Parameters
    ----------
    config : SimConfig
    quantiles : QuantileTable or mapping of kind to QuantileTable
        Limit-law table for ``config.statistic_kind``.
    workers : int, optional
        Process count; defaults to ``FLMCHANGE_WORKERS``. Results are
        identical for every value.

    Raises
    ------
    ExperimentAbortedError
        If more than 1% of the repetitions fail to fit.
    """
    if isinstance(quantiles, dict):
        quantiles = quantiles[config.statistic_kind]
    results = _map_reps(_run_chunk, config, quantiles, workers)
    failures = sum(r is None for r in results)
    if failures > 0.01 * config.repetitions:
        raise ExperimentAbortedError(
            f"{failures} of {config.repetitions} repetitions failed to fit"
        )
    ok = [r for r in results if r is not None]
    stats = np.array([r[0] for r in ok])
    pvals = np.array([r[1] for r in ok])
    thetas = np.array([r[2] for r in ok])
    reject = np.array([r[3] for r in ok], dtype=bool)
    rej_thetas = thetas[reject]
    return RejectionRow(
        family=config.error_spec.family,
        delta=config.error_spec.delta,
        n=config.n,
        repetitions=config.repetitions,
        level=config.level,
        statistic_kind=config.statistic_kind,
        rejections=int(reject.sum()),
        failures=failures,
        theta_mean=float(rej_thetas.mean()) if rej_thetas.size else float("nan"),
        theta_median=float(np.median(rej_thetas)) if rej_thetas.size else float("nan"),
        statistics=stats,
        p_values=pvals,
        theta_hats=thetas,
    )


def _gap_chunk(args):
    config, _, start, stop = args
    out = []
    for rep in range(start, stop):
        data, eps = simulate_dataset(config, rep)
        out.append(sup_process_distance(fit_residuals(config, data), eps))
    return out


def process_gap(config: SimConfig, workers: int | None = None) -> np.ndarray:
    """Per-repetition ``sup_{t,z} |G_n(residuals) - G_n(true errors)|``."""
    return np.array(_map_reps(_gap_chunk, config, None, workers))


# -- figure data -------------------------------------------------------------

_CSV_FIELDS = ("delta", "n", "rejection_rate", "mc_se")


def emit_figure_data(rows, path) -> tuple[Path, Path]:
    """Write ``<path>.csv`` and a line chart ``<path>.svg`` of rejection rates.

    Rows must share an error family; one line per sample size, with a dotted
    reference line at the nominal level.
    """
    rows = list(rows)
    if not rows:
        raise ValueError("no rows to plot")
    families = {r.family for r in rows}
    if len(families) > 1:
        raise ValueError("rows mix several error families")
    path = Path(path)
    if path.suffix in (".csv", ".svg"):
        path = path.with_suffix("")
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = sorted(rows, key=lambda r: (r.n, r.delta))
    csv_path = path.with_suffix(".csv")
    with csv_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_CSV_FIELDS)
        for r in rows:
            writer.writerow([f"{r.delta:.6g}", r.n, f"{r.rate:.6f}", f"{r.mc_se:.6f}"])
    svg_path = path.with_suffix(".svg")
    svg_path.write_text(_svg_chart(rows, families.pop()), encoding="utf-8")
    return csv_path, svg_path


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def _svg_chart(rows, family, width=420, height=320, pad=50) -> str:
    deltas = [r.delta for r in rows]
    x_lo, x_hi = min(deltas), max(deltas)
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    pw, ph = width - 2 * pad, height - 2 * pad

    def sx(d):
        return pad + (d - x_lo) / (x_hi - x_lo) * pw

    def sy(p):
        return pad + (1 - min(max(p, 0.0), 1.0)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{pad + ph}" x2="{pad + pw}" y2="{pad + ph}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{pad + ph}" stroke="black"/>',
    ]
    for p in (0.0, 0.25, 0.5, 0.75, 1.0):
        out.append(
            f'<text x="{pad - 6}" y="{sy(p) + 4:.2f}" font-size="10" text-anchor="end">{p:g}</text>'
        )
    for d in sorted(set(deltas)):
        out.append(
            f'<text x="{sx(d):.2f}" y="{pad + ph + 14}" font-size="10" '
            f'text-anchor="middle">{d:g}</text>'
        )
    level = rows[0].level
    out.append(
        f'<line x1="{pad}" y1="{sy(level):.2f}" x2="{pad + pw}" y2="{sy(level):.2f}" '
        f'stroke="gray" stroke-dasharray="2,3"/>'
    )
    for i, n in enumerate(sorted({r.n for r in rows})):
        color = _COLORS[i % len(_COLORS)]
        pts = [(sx(r.delta), sy(r.rate)) for r in rows if r.n == n]
        coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in pts)
        out.append(f'<polyline points="{coords}" fill="none" stroke="{color}"/>')
        for x, y in pts:
            out.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3" fill="{color}"/>')
        out.append(
            f'<text x="{pad + pw - 4}" y="{pad + 14 + 14 * i}" font-size="11" '
            f'text-anchor="end" fill="{color}">n = {n}</text>'
        )
    out.append(
        f'<text x="{width / 2}" y="{pad / 2}" font-size="12" text-anchor="middle">'
        f"rejection rate, {escape(family.value)}</text>"
    )
    out.append(
        f'<text x="{width / 2}" y="{height - 8}" font-size="11" text-anchor="middle">delta</text>'
    )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def with_delta(config: SimConfig, delta: float, n: int | None = None) -> SimConfig:
    spec = ErrorSpec(config.error_spec.family, delta)
    return replace(config, error_spec=spec, n=config.n if n is None else n)
