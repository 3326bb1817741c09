"""Grid-sampled functions on [0, 1] and functional datasets."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DatasetFormatError, GridMismatchError

__all__ = [
    "GridFunction",
    "FunctionalDataset",
    "equidistant_grid",
    "trapezoid_weights",
    "inner_product",
    "l2_norm",
    "load_dataset",
    "save_dataset",
]


def equidistant_grid(points: int = 300) -> np.ndarray:
    """Return ``points`` equally spaced values from 0 to 1 inclusive."""
    if points < 2:
        raise ValueError("a grid needs at least 2 points")
    return np.linspace(0.0, 1.0, points)


def _validate_grid(grid: np.ndarray) -> None:
    if grid.ndim != 1 or grid.size < 2:
        raise ValueError("grid must be a 1-d array with at least 2 points")
    if not np.all(np.isfinite(grid)):
        raise ValueError("grid contains non-finite values")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid not increasing")
    if grid[0] != 0.0 or grid[-1] != 1.0:
        raise ValueError("grid must start at 0 and end at 1")


def trapezoid_weights(grid: np.ndarray) -> np.ndarray:
    """Quadrature weights ``w`` with ``w @ f(grid)`` the trapezoidal rule."""
    h = np.diff(grid)
    w = np.zeros_like(grid, dtype=float)
    w[:-1] += h / 2
    w[1:] += h / 2
    return w


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GridFunction:
    """A real function on [0, 1] sampled on a strictly increasing grid."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = _frozen(self.grid)
        values = _frozen(self.values)
        _validate_grid(grid)
        if values.shape != grid.shape:
            raise ValueError(
                f"values has shape {values.shape}, grid has shape {grid.shape}"
            )
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_callable(cls, func, grid) -> "GridFunction":
        grid = np.asarray(grid, dtype=float)
        return cls(grid, np.broadcast_to(func(grid), grid.shape))

    def same_grid(self, other: "GridFunction") -> bool:
        return self.grid is other.grid or np.array_equal(self.grid, other.grid)

    def __len__(self):
        return self.grid.size


@dataclass(frozen=True, eq=False)
class FunctionalDataset:
    """Pairs ``(X_i, Y_i)`` with all covariates sampled on one common grid.

    Covariates are stored as an ``(n, len(grid))`` matrix; use
    :meth:`covariate` for a single curve as a :class:`GridFunction`.
    """

    grid: np.ndarray
    curves: np.ndarray
    responses: np.ndarray

    def __post_init__(self):
        grid = _frozen(self.grid)
        curves = _frozen(self.curves)
        responses = _frozen(self.responses)
        _validate_grid(grid)
        if curves.ndim != 2 or curves.shape[1] != grid.size:
            raise GridMismatchError(
                f"covariate matrix has shape {curves.shape}, expected (n, {grid.size})"
            )
        if responses.ndim != 1 or responses.size != curves.shape[0]:
            raise ValueError("need exactly one response per covariate")
        if responses.size < 2:
            raise DatasetFormatError("n < 2")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "curves", curves)
        object.__setattr__(self, "responses", responses)

    @classmethod
    def from_functions(cls, covariates, responses) -> "FunctionalDataset":
        covariates = list(covariates)
        if not covariates:
            raise DatasetFormatError("n < 2")
        grid = covariates[0].grid
        for f in covariates[1:]:
            if not f.same_grid(covariates[0]):
                raise GridMismatchError("covariates do not share one grid")
        return cls(grid, np.vstack([f.values for f in covariates]), responses)

    @property
    def n(self) -> int:
        return self.responses.size

    def covariate(self, i: int) -> GridFunction:
        return GridFunction(self.grid, self.curves[i])

    @property
    def covariates(self) -> list[GridFunction]:
        return [self.covariate(i) for i in range(self.n)]


def inner_product(f: GridFunction, g: GridFunction) -> float:
    """Trapezoidal approximation of the L2 inner product on [0, 1].

    Raises
    ------
    GridMismatchError
        If ``f`` and ``g`` are sampled on different grids.
    """
    if not f.same_grid(g):
        raise GridMismatchError("inner product of functions on different grids")
    return float(trapezoid_weights(f.grid) @ (f.values * g.values))


def l2_norm(f: GridFunction) -> float:
    return float(np.sqrt(max(inner_product(f, f), 0.0)))


def load_dataset(path) -> FunctionalDataset:
    """Read a functional dataset from CSV.

    The first non-comment row is a header: a label for the response column
    followed by the grid points. Every following row holds the response and
    then the covariate values at those grid points. Lines starting with
    ``#`` are ignored.

    Raises
    ------
    FileNotFoundError
        If ``path`` does not exist.
    DatasetFormatError
        On non-numeric cells, rows of the wrong length, a non-increasing
        grid or fewer than two observations.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such dataset file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [
            (lineno, row)
            for lineno, row in enumerate(csv.reader(fh), start=1)
            if row and any(c.strip() for c in row) and not row[0].lstrip().startswith("#")
        ]
    if not rows:
        raise DatasetFormatError("empty file: missing grid header")

    head_line, header = rows[0]
    try:
        grid = np.array([float(c) for c in header[1:]])
    except ValueError as exc:
        raise DatasetFormatError(f"line {head_line}: non-numeric grid point ({exc})") from None
    if grid.size < 2:
        raise DatasetFormatError(f"line {head_line}: need at least 2 grid points")
    if np.any(np.diff(grid) <= 0):
        raise DatasetFormatError("grid not increasing")
    if grid[0] != 0.0 or grid[-1] != 1.0:
        raise DatasetFormatError("grid must start at 0 and end at 1")

    width = grid.size + 1
    data = []
    for lineno, row in rows[1:]:
        if len(row) != width:
            raise DatasetFormatError(
                f"line {lineno}: arity mismatch, expected {width} fields, got {len(row)}"
            )
        try:
            data.append([float(c) for c in row])
        except ValueError as exc:
            raise DatasetFormatError(f"line {lineno}: non-numeric cell ({exc})") from None
    if len(data) < 2:
        raise DatasetFormatError("n < 2")
    data = np.array(data)
    if not np.all(np.isfinite(data)):
        raise DatasetFormatError("non-finite value in data rows")
    return FunctionalDataset(grid, data[:, 1:], data[:, 0])


def save_dataset(data: FunctionalDataset, path) -> None:
    """Write ``data`` in the CSV layout read by :func:`load_dataset`."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["y"] + [repr(float(t)) for t in data.grid])
        for y, x in zip(data.responses, data.curves):
            writer.writerow([repr(float(y))] + [repr(float(v)) for v in x])
