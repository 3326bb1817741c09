"""Penalized spline estimation of the functional linear model.

The model ``Y = alpha + <X, beta> + eps`` is fitted by minimizing

    (1/n) * ||Y - a - Z c||^2 + lam * c' Omega c

over the intercept ``a`` and the B-spline coefficients ``c`` of ``beta``,
where ``Z[i, j] = <X_i, B_j>`` and ``Omega[j, k] = int B_j^(m) B_k^(m)``.
The smoothing parameter is chosen by generalized cross-validation.

All solves go through a one-off reparameterization of the problem
(:class:`PenalizedProblem`): the coefficients are split into the exact
polynomial null space of the penalty and its orthogonal complement, the
unpenalized part is projected out, and the remaining ridge problem is
diagonalized by an SVD. Every lambda is then a cheap diagonal rescaling and
the hat-matrix trace is available in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
from scipy import linalg
from scipy.interpolate import BSpline

from .errors import ConfigurationError, GridMismatchError, NumericalFailureError
from .funcdata import FunctionalDataset, GridFunction, trapezoid_weights

__all__ = [
    "SplineBasis",
    "FlmFit",
    "PenalizedProblem",
    "DEFAULT_LAMBDA_GRID",
    "design_matrix",
    "penalty_matrix",
    "penalty_factor",
    "penalized_objective",
    "fit_penalized",
    "gcv_select",
    "residuals",
]

DEFAULT_LAMBDA_GRID = np.logspace(-10, 2, 50)

_GAUSS_NODES = 7
_JITTER = 1e-12


@dataclass(frozen=True)
class SplineBasis:
    """Clamped B-spline basis on [0, 1] with equidistant interior knots.

    Parameters
    ----------
    size : int
        Number of basis functions ``K``.
    degree : int
        Polynomial degree of the pieces. Must be at least
        ``2 * penalty_order - 1``.
    penalty_order : int
        Order ``m`` of the derivative in the roughness penalty.
    """

    size: int = 40
    degree: int = 5
    penalty_order: int = 3

    def __post_init__(self):
        if self.penalty_order < 1:
            raise ConfigurationError("penalty order must be >= 1")
        if self.degree < 2 * self.penalty_order - 1:
            raise ConfigurationError(
                f"degree {self.degree} too low for penalty order {self.penalty_order}; "
                f"need degree >= {2 * self.penalty_order - 1}"
            )
        if self.size < self.degree + 1:
            raise ConfigurationError(
                f"basis size {self.size} smaller than degree + 1 = {self.degree + 1}"
            )

    @property
    def n_interior_knots(self) -> int:
        return self.size - self.degree - 1

    @cached_property
    def knots(self) -> np.ndarray:
        interior = np.linspace(0.0, 1.0, self.n_interior_knots + 2)[1:-1]
        k = self.degree
        return np.r_[np.zeros(k + 1), interior, np.ones(k + 1)]

    @cached_property
    def breakpoints(self) -> np.ndarray:
        return np.unique(self.knots)

    @cached_property
    def _spline(self) -> BSpline:
        return BSpline(self.knots, np.eye(self.size), self.degree)

    def evaluate(self, x, nu: int = 0) -> np.ndarray:
        """Matrix of ``B_j^(nu)(x_i)`` with shape ``(len(x), size)``."""
        x = np.asarray(x, dtype=float)
        if np.any((x < 0) | (x > 1)):
            raise ValueError("basis evaluated outside [0, 1]")
        return self._spline(x, nu=nu)

    @cached_property
    def greville(self) -> np.ndarray:
        k = self.degree
        t = self.knots
        return np.array([t[j + 1 : j + k + 1].mean() for j in range(self.size)])

    def interpolate(self, func) -> np.ndarray:
        """Coefficients of the spline interpolating ``func`` at the Greville points.

        Reproduces every polynomial of degree ``<= degree`` exactly.
        """
        tau = self.greville
        return linalg.solve(self.evaluate(tau), np.asarray(func(tau), dtype=float))

    @cached_property
    def polynomial_coefficients(self) -> np.ndarray:
        """``(size, m)`` coefficient vectors of ``1, t, ..., t^(m-1)``."""
        return np.column_stack(
            [self.interpolate(lambda t, p=p: t**p) for p in range(self.penalty_order)]
        )


@dataclass(frozen=True, eq=False)
class FlmFit:
    """A fitted functional linear model."""

    alpha_hat: float
    coeffs: np.ndarray
    lam: float
    gcv_score: float
    edf: float
    rss: float
    basis: SplineBasis
    grid: np.ndarray = field(repr=False)

    def beta_values(self, x, nu: int = 0) -> np.ndarray:
        return self.basis.evaluate(x, nu=nu) @ self.coeffs

    def beta(self, grid=None) -> GridFunction:
        grid = self.grid if grid is None else np.asarray(grid, dtype=float)
        return GridFunction(grid, self.beta_values(grid))

    def predict(self, data: FunctionalDataset) -> np.ndarray:
        """Fitted values ``alpha_hat + <X_i, beta_hat>``."""
        _check_grid(self, data)
        w = trapezoid_weights(data.grid)
        return self.alpha_hat + data.curves @ (w * self.beta_values(data.grid))


def design_matrix(data: FunctionalDataset, basis: SplineBasis) -> np.ndarray:
    """``Z[i, j] = <X_i, B_j>`` by the trapezoidal rule on the data grid."""
    w = trapezoid_weights(data.grid)
    return data.curves @ (w[:, None] * basis.evaluate(data.grid))


def _gauss_legendre_on(breaks: np.ndarray, nodes: int) -> tuple[np.ndarray, np.ndarray]:
    x0, w0 = np.polynomial.legendre.leggauss(nodes)
    a, b = breaks[:-1, None], breaks[1:, None]
    x = (a + b) / 2 + (b - a) / 2 * x0
    w = (b - a) / 2 * w0
    return x.ravel(), w.ravel()


def penalty_factor(basis: SplineBasis) -> np.ndarray:
    """Matrix ``L`` with ``penalty_matrix(basis) == L.T @ L``.

    Rows are m-th derivatives of the basis at Gauss-Legendre nodes, scaled
    by the square roots of the weights, so ``||L @ c||**2`` is the penalty
    of ``c`` without the cancellation of the explicit quadratic form.
    """
    if basis.degree < 2 * basis.penalty_order - 1:
        raise ConfigurationError("degree too low for penalty order")
    nodes = max(_GAUSS_NODES, basis.degree - basis.penalty_order + 1)
    x, w = _gauss_legendre_on(basis.breakpoints, nodes)
    return np.sqrt(w)[:, None] * basis.evaluate(x, nu=basis.penalty_order)


def penalty_matrix(basis: SplineBasis) -> np.ndarray:
    """Roughness penalty ``Omega[j, k] = int_0^1 B_j^(m)(t) B_k^(m)(t) dt``.

    Gauss-Legendre quadrature on every knot interval; exact since the
    integrand is piecewise polynomial of degree ``2 * (degree - m)``.
    """
    L = penalty_factor(basis)
    omega = L.T @ L
    return (omega + omega.T) / 2


def penalized_objective(
    data: FunctionalDataset, basis: SplineBasis, alpha: float, coeffs, lam: float
) -> float:
    """Value of the penalized least-squares criterion at ``(alpha, coeffs)``."""
    coeffs = np.asarray(coeffs, dtype=float)
    r = data.responses - alpha - design_matrix(data, basis) @ coeffs
    pen = penalty_factor(basis) @ coeffs
    return float(r @ r / data.n + lam * pen @ pen)


@lru_cache(maxsize=16)
def _penalty_split(basis: SplineBasis):
    # exact null space of the penalty (polynomials of degree < m), then the
    # complement rotated so the penalty is diagonal there
    null, _ = linalg.qr(basis.polynomial_coefficients, mode="economic")
    comp = linalg.null_space(null.T)
    _, sq, Wt = linalg.svd(penalty_factor(basis) @ comp, full_matrices=False)
    if sq[-1] <= 0:
        raise NumericalFailureError("penalty not positive definite off its null space")
    return null, comp @ Wt.T, sq


class PenalizedProblem:
    """Precomputed decomposition of one dataset/basis pair.

    Reusable across smoothing parameters; :meth:`fit` costs O(n K) per
    lambda once constructed.
    """

    def __init__(self, data: FunctionalDataset, basis: SplineBasis):
        self.data = data
        self.basis = basis
        n = data.n
        y = data.responses
        Z = design_matrix(data, basis)
        if not np.all(np.isfinite(Z)) or not np.all(np.isfinite(y)):
            raise NumericalFailureError("non-finite design matrix or responses")

        null, pen_dirs, self._pen_scale = _penalty_split(basis)
        self._null_dirs = null
        self._pen_dirs = pen_dirs

        A_null = np.column_stack([np.ones(n), Z @ null])
        A_pen = (Z @ pen_dirs) / self._pen_scale

        # unpenalized block by truncated SVD; tiny singular values are dropped
        Un, sn, Vnt = linalg.svd(A_null, full_matrices=False)
        rank = int(np.sum(sn > _JITTER * sn[0])) if sn[0] > 0 else 0
        if rank == 0:
            raise NumericalFailureError("unpenalized part of the design is zero")
        Q1 = Un[:, :rank]
        self._null_pinv = (Vnt[:rank].T / sn[:rank]) @ Q1.T
        self._A_pen = A_pen
        self._Q1 = Q1
        self._null_rank = rank

        R = A_pen - Q1 @ (Q1.T @ A_pen)
        yt = y - Q1 @ (Q1.T @ y)
        U, d, Vt = linalg.svd(R, full_matrices=False)
        self._U = U
        self._d = d
        self._V = Vt.T
        self._yt = yt
        self._uty = U.T @ yt

    def fit(self, lam: float) -> FlmFit:
        if not np.isfinite(lam) or lam <= 0:
            raise ValueError(f"lambda must be positive and finite, got {lam}")
        n = self.data.n
        d2 = self._d**2
        nl = n * lam
        shrink = d2 / (d2 + nl)
        b = self._V @ (self._d / (d2 + nl) * self._uty)
        resid = self._yt - self._U @ (shrink * self._uty)
        theta = self._null_pinv @ (self.data.responses - self._A_pen @ b)
        coeffs = self._null_dirs @ theta[1:] + self._pen_dirs @ (b / self._pen_scale)
        rss = float(resid @ resid)
        edf = float(self._null_rank + shrink.sum())
        gcv = n * rss / (n - edf) ** 2 if edf < n else np.inf
        if not (np.all(np.isfinite(coeffs)) and np.isfinite(theta[0])):
            raise NumericalFailureError(f"non-finite solution at lambda={lam:g}")
        return FlmFit(
            alpha_hat=float(theta[0]),
            coeffs=coeffs,
            lam=float(lam),
            gcv_score=float(gcv),
            edf=edf,
            rss=rss,
            basis=self.basis,
            grid=self.data.grid,
        )

    def hat_matrix(self, lam: float) -> np.ndarray:
        """Explicit ``n x n`` hat matrix; for checks, not for fitting."""
        d2 = self._d**2
        shrink = d2 / (d2 + self.data.n * lam)
        return self._Q1 @ self._Q1.T + (self._U * shrink) @ self._U.T


def fit_penalized(data: FunctionalDataset, basis: SplineBasis, lam: float) -> FlmFit:
    """Penalized least-squares fit at a fixed smoothing parameter."""
    return PenalizedProblem(data, basis).fit(lam)


def gcv_select(
    data: FunctionalDataset, basis: SplineBasis, lambda_grid=None
) -> FlmFit:
    """Fit at every lambda in ``lambda_grid`` and keep the GCV minimizer.

    ``GCV(lam) = n * RSS(lam) / (n - tr H(lam))**2``; exact ties go to the
    larger lambda.
    """
    grid = DEFAULT_LAMBDA_GRID if lambda_grid is None else np.asarray(lambda_grid, float)
    grid = np.unique(grid)
    if grid.size == 0 or np.any(grid <= 0):
        raise ValueError("lambda grid must be a nonempty set of positive values")
    problem = PenalizedProblem(data, basis)
    best = None
    for lam in grid:
        f = problem.fit(lam)
        if np.isfinite(f.gcv_score) and (best is None or f.gcv_score <= best.gcv_score):
            best = f
    if best is None:
        raise NumericalFailureError("GCV score non-finite on the whole lambda grid")
    return best


def _check_grid(fit: FlmFit, data: FunctionalDataset) -> None:
    if fit.grid.shape != data.grid.shape or not np.array_equal(fit.grid, data.grid):
        raise GridMismatchError("fit and dataset are on different grids")


def residuals(fit: FlmFit, data: FunctionalDataset) -> np.ndarray:
    """``Y_i - alpha_hat - <X_i, beta_hat>`` for every observation."""
    return data.responses - fit.predict(data)
