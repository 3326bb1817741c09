"""Monte Carlo tables for the null limit of the sequential process.

Under the null hypothesis the process converges to a completely tucked
Brownian sheet ``G`` on the unit square, the centered Gaussian process with
``Cov(G(s, u), G(t, v)) = (min(s, t) - s t) (min(u, v) - u v)``. It is
obtained from a standard Brownian sheet ``W`` by pinning all four edges,

    G(s, u) = W(s, u) - s W(1, u) - u W(s, 1) + s u W(1, 1).

Tables store the sorted simulated values of three functionals of ``G`` and
give empirical (type 7) quantiles and Monte Carlo p-values from them.
"""

from __future__ import annotations

import io
import os
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, TableFormatError
from .seqproc import ResidualSample, StatisticKind, seq_process, statistic

__all__ = [
    "QuantileTable",
    "STANDARD_LEVELS",
    "replication_rng",
    "simulate_sheets",
    "sheet_functionals",
    "simulate_tucked_sheet_functionals",
    "finite_sample_null",
    "quantile",
    "save_table",
    "load_table",
    "default_tables",
    "table_filename",
    "worker_count",
]

STANDARD_LEVELS = (0.90, 0.95, 0.99)
MIN_GRID = 50
MIN_REPLICATIONS = 1000

_MAGIC = b"FLMQTAB\x00"
_VERSION = 2
_KIND_CODES = {StatisticKind.KS: 0, StatisticKind.CVM_SUP: 1, StatisticKind.CVM_INT: 2}
_KIND_FROM_CODE = {v: k for k, v in _KIND_CODES.items()}
_HEAD = struct.Struct("<8sHBIQQ")
_CHUNK = 250

DEFAULT_GRID = 200
DEFAULT_REPLICATIONS = 100_000
DEFAULT_SEED = 20240601


def worker_count() -> int:
    """Worker processes from ``FLMCHANGE_WORKERS``; never affects results."""
    try:
        return max(1, int(os.environ.get("FLMCHANGE_WORKERS", "1")))
    except ValueError:
        return 1


def replication_rng(seed: int, index: int) -> np.random.Generator:
    """Independent generator for replication ``index`` of a run seeded ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, index])))


@dataclass(frozen=True, eq=False)
class QuantileTable:
    kind: StatisticKind
    grid_resolution: int
    replications: int
    seed: int
    sorted_samples: np.ndarray = field(repr=False)
    levels: tuple = STANDARD_LEVELS

    def __post_init__(self):
        object.__setattr__(self, "kind", StatisticKind.parse(self.kind))
        s = np.array(self.sorted_samples, dtype="<f8")
        if s.ndim != 1 or s.size == 0:
            raise ValueError("a table needs at least one sample")
        if np.any(np.diff(s) < 0):
            raise ValueError("samples must be sorted")
        s.setflags(write=False)
        object.__setattr__(self, "sorted_samples", s)
        object.__setattr__(self, "levels", tuple(float(a) for a in self.levels))

    @property
    def quantiles(self) -> dict[float, float]:
        return {a: self.quantile(a) for a in self.levels}

    def quantile(self, level: float) -> float:
        return quantile(self, level)

    def p_value(self, value: float) -> float:
        """Fraction of simulated values at or above ``value``."""
        s = self.sorted_samples
        return float((s.size - np.searchsorted(s, value, side="left")) / s.size)


def quantile(table: QuantileTable, level: float) -> float:
    """Empirical ``level``-quantile of the table (linear interpolation, type 7)."""
    if not 0 < level < 1:
        raise ValueError(f"quantile level must lie in (0, 1), got {level}")
    return float(np.quantile(table.sorted_samples, level, method="linear"))


def simulate_sheets(M: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """``size`` tucked sheets on the ``(M + 1) x (M + 1)`` grid ``{i / M}``."""
    s = np.arange(M + 1) / M
    W = np.zeros((size, M + 1, M + 1))
    W[:, 1:, 1:] = rng.standard_normal((size, M, M)) / M
    W = W.cumsum(axis=1).cumsum(axis=2)
    G = (
        W
        - s[None, :, None] * W[:, -1:, :]
        - s[None, None, :] * W[:, :, -1:]
        + (s[:, None] * s[None, :])[None] * W[:, -1:, -1:]
    )
    # pinning is exact in theory; clear the rounding residue on the edges
    G[:, 0, :] = G[:, -1, :] = G[:, :, 0] = G[:, :, -1] = 0.0
    return G


def sheet_functionals(G: np.ndarray) -> np.ndarray:
    """``(sup |G|, sup_t int G(t, u)^2 du, int int G^2)`` by Riemann sums.

    Accepts a single sheet or a stack with leading batch axis; the first grid
    axis is time.
    """
    G = np.asarray(G)
    M = G.shape[-1] - 1
    sq = G**2
    per_t = sq[..., 1:].sum(axis=-1) / M
    return np.stack(
        [
            np.abs(G).max(axis=(-2, -1)),
            per_t.max(axis=-1),
            per_t[..., 1:].sum(axis=-1) / M,
        ],
        axis=-1,
    )


def _simulate_chunk(args):
    M, seed, start, stop, transpose = args
    out = np.empty((stop - start, 3))
    for r in range(start, stop):
        G = simulate_sheets(M, 1, replication_rng(seed, r))[0]
        out[r - start] = sheet_functionals(G.T if transpose else G)
    return out


def simulate_tucked_sheet_functionals(
    M: int = DEFAULT_GRID,
    R: int = DEFAULT_REPLICATIONS,
    seed: int = DEFAULT_SEED,
    *,
    workers: int | None = None,
    transpose: bool = False,
    levels=STANDARD_LEVELS,
) -> dict[StatisticKind, QuantileTable]:
    """Simulate ``R`` tucked sheets on an ``M``-grid; one table per statistic.

    Replication ``r`` draws from :func:`replication_rng` ``(seed, r)``, so the
    result does not depend on ``workers``. ``transpose`` swaps the roles of
    the two axes (a check on the symmetry of the limit law).
    """
    if M < MIN_GRID:
        raise ConfigurationError(f"grid resolution M={M} below minimum {MIN_GRID}")
    if R < MIN_REPLICATIONS:
        raise ConfigurationError(f"replications R={R} below minimum {MIN_REPLICATIONS}")
    workers = worker_count() if workers is None else max(1, workers)
    jobs = [(M, seed, a, min(a + _CHUNK, R), transpose) for a in range(0, R, _CHUNK)]
    if workers == 1:
        parts = list(map(_simulate_chunk, jobs))
    else:
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_simulate_chunk, jobs))
    values = np.vstack(parts)
    return {
        kind: QuantileTable(kind, M, R, seed, np.sort(values[:, col]), levels)
        for kind, col in _KIND_CODES.items()
    }


def finite_sample_null(n: int, reps: int, seed: int, kinds=tuple(StatisticKind)) -> dict:
    """Null statistics from iid standard normal pseudo-residuals of size ``n``."""
    kinds = [StatisticKind.parse(k) for k in kinds]
    out = {k: np.empty(reps) for k in kinds}
    for r in range(reps):
        values = replication_rng(seed, r).standard_normal(n)
        table = seq_process(ResidualSample.from_values(values))
        for k in kinds:
            out[k][r] = statistic(table, k)
    return out


def save_table(table: QuantileTable, path, version: int = _VERSION) -> None:
    """Write ``table``: versioned little-endian header, then the samples as ``<f8``."""
    if version not in (1, 2):
        raise TableFormatError(f"cannot write table version {version}")
    buf = io.BytesIO()
    buf.write(
        _HEAD.pack(
            _MAGIC,
            version,
            _KIND_CODES[table.kind],
            table.grid_resolution,
            table.replications,
            table.seed,
        )
    )
    if version >= 2:
        buf.write(struct.pack("<H", len(table.levels)))
        buf.write(np.asarray(table.levels, dtype="<f8").tobytes())
    buf.write(np.asarray(table.sorted_samples, dtype="<f8").tobytes())
    Path(path).write_bytes(buf.getvalue())


def _read_table(raw: bytes) -> QuantileTable:
    if len(raw) < _HEAD.size:
        raise TableFormatError("truncated table header")
    magic, version, code, M, R, seed = _HEAD.unpack_from(raw)
    if magic != _MAGIC:
        raise TableFormatError("not a quantile table (bad magic bytes)")
    if version > _VERSION or version < 1:
        raise TableFormatError(f"unsupported table version {version}")
    if code not in _KIND_FROM_CODE:
        raise TableFormatError(f"unknown statistic code {code}")
    pos = _HEAD.size
    levels = STANDARD_LEVELS
    if version >= 2:
        if len(raw) < pos + 2:
            raise TableFormatError("truncated level list")
        (nlev,) = struct.unpack_from("<H", raw, pos)
        pos += 2
        if len(raw) < pos + 8 * nlev:
            raise TableFormatError("truncated level list")
        levels = tuple(np.frombuffer(raw, dtype="<f8", count=nlev, offset=pos).tolist())
        pos += 8 * nlev
    if len(raw) - pos != 8 * R:
        raise TableFormatError(
            f"truncated table: expected {R} samples, found {(len(raw) - pos) / 8:g}"
        )
    samples = np.frombuffer(raw, dtype="<f8", count=R, offset=pos).copy()
    return QuantileTable(_KIND_FROM_CODE[code], M, R, seed, samples, levels)


def load_table(path) -> QuantileTable:
    return _read_table(Path(path).read_bytes())


def table_filename(kind, M: int, R: int, seed: int) -> str:
    return f"limit_{StatisticKind.parse(kind).value}_M{M}_R{R}_seed{seed}.qtab"


def default_tables() -> dict[StatisticKind, QuantileTable]:
    """The shipped tables (M = 200, R = 100000)."""
    root = resources.files("flmchange") / "data"
    out = {}
    for kind in StatisticKind:
        name = table_filename(kind, DEFAULT_GRID, DEFAULT_REPLICATIONS, DEFAULT_SEED)
        out[kind] = _read_table((root / name).read_bytes())
    return out
