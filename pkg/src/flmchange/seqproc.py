"""Sequential residual empirical processes and the change-point test.

For residuals ``e_1, ..., e_n`` the process is

    G(k/n, z) = k / sqrt(n) * (F_k(z) - F_n(z)),

with ``F_k`` the empirical distribution function of the first ``k``
residuals. Both distribution functions are right-continuous steps that jump
only at residual values, so every supremum over ``z`` is attained at an
order statistic and every supremum over ``t`` at some ``k / n``.

On the integer scale ``n**1.5 * G(k/n, u_j) = n * S_k(j) - k * N(j)``, where
``S_k(j)`` counts the first ``k`` residuals at or below the ``j``-th distinct
value ``u_j`` and ``N(j)`` counts all of them. The kernel works on those
integers, so all statistics depend on the residuals only through their
ranks and are reproduced bit for bit under strictly increasing transforms.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numba
import numpy as np

from .errors import InvalidInputError, MissingQuantileError

__all__ = [
    "StatisticKind",
    "ResidualSample",
    "SeqProcessTable",
    "TestResult",
    "seq_process",
    "ks_statistic",
    "cvm_statistics",
    "change_point_estimate",
    "statistic",
    "run_test",
    "process_matrix",
    "sup_process_distance",
]


class StatisticKind(str, enum.Enum):
    KS = "ks"
    CVM_SUP = "cvm-sup"
    CVM_INT = "cvm-int"

    @classmethod
    def parse(cls, value) -> "StatisticKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower().replace("_", "-"))
        except ValueError:
            choices = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown statistic kind {value!r}; choose from {choices}") from None


@dataclass(frozen=True, eq=False)
class ResidualSample:
    """Residuals in observation order, with their sort permutation and ranks."""

    values: np.ndarray
    sort_index: np.ndarray
    ranks: np.ndarray

    @classmethod
    def from_values(cls, values) -> "ResidualSample":
        values = np.array(values, dtype=float).ravel()
        if values.size < 2:
            raise InvalidInputError("need at least 2 residuals")
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("residuals contain NaN or infinite values")
        order = np.argsort(values, kind="stable")
        ranks = np.empty(values.size, dtype=np.int64)
        ranks[order] = np.arange(1, values.size + 1)
        for a in (values, order, ranks):
            a.setflags(write=False)
        return cls(values, order, ranks)

    @property
    def n(self) -> int:
        return self.values.size

    def level_index(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct-value index of each residual and cumulative counts.

        Returns ``(idx, cum)`` where residual ``i`` equals the ``idx[i]``-th
        smallest distinct value ``u`` and ``cum[j] = #{i : e_i <= u_j}``.
        """
        uniq, idx, counts = np.unique(self.values, return_inverse=True, return_counts=True)
        return idx.astype(np.int64), np.cumsum(counts).astype(np.int64)


@dataclass(frozen=True, eq=False)
class SeqProcessTable:
    """Per-``k`` summaries of the process for ``k = 1, ..., n - 1``.

    ``sup_abs[k - 1] = sup_z |G(k/n, z)|`` and
    ``cvm[k - 1] = (1/n) * sum_i G(k/n, e_i)**2``.
    """

    n: int
    sup_abs: np.ndarray
    cvm: np.ndarray

    @property
    def k(self) -> np.ndarray:
        return np.arange(1, self.n)

    @property
    def t(self) -> np.ndarray:
        return self.k / self.n


@dataclass(frozen=True)
class TestResult:
    statistic_kind: StatisticKind
    statistic: float
    critical_value: float
    p_value: float
    reject: bool
    theta_hat: float
    n: int
    level: float

    def verdict_line(self) -> str:
        return (
            f"kind={self.statistic_kind.value} statistic={float(self.statistic)!r} "
            f"critical_value={float(self.critical_value)!r} p_value={float(self.p_value)!r} "
            f"decision={'reject' if self.reject else 'accept'} "
            f"theta_hat={float(self.theta_hat)!r} n={self.n} level={float(self.level)!r}"
        )


@numba.njit(cache=True)
def _sweep(idx, cum, n):
    m = cum.size
    counts = np.zeros(m, dtype=np.int64)
    mult = np.empty(m, dtype=np.int64)
    mult[0] = cum[0]
    for j in range(1, m):
        mult[j] = cum[j] - cum[j - 1]
    sup_int = np.zeros(n - 1, dtype=np.int64)
    sq_sum = np.zeros(n - 1)
    for k in range(1, n):
        j0 = idx[k - 1]
        for j in range(j0, m):
            counts[j] += 1
        best = 0
        acc = 0.0
        for j in range(m):
            g = n * counts[j] - k * cum[j]
            if g < 0:
                g = -g
            if g > best:
                best = g
            acc += mult[j] * float(g) * float(g)
        sup_int[k - 1] = best
        sq_sum[k - 1] = acc
    return sup_int, sq_sum


def seq_process(sample: ResidualSample) -> SeqProcessTable:
    """Tabulate ``sup_z |G(k/n, z)|`` and the per-``k`` CvM means in O(n^2)."""
    if not isinstance(sample, ResidualSample):
        sample = ResidualSample.from_values(sample)
    n = sample.n
    idx, cum = sample.level_index()
    sup_int, sq_sum = _sweep(idx, cum, n)
    scale = float(n) ** 1.5
    return SeqProcessTable(n=n, sup_abs=sup_int / scale, cvm=sq_sum / float(n) ** 4)


def ks_statistic(table: SeqProcessTable) -> float:
    """``T_n = sup_t sup_z |G(t, z)| = max_k sup_abs[k]``."""
    return float(table.sup_abs.max())


def cvm_statistics(sample: ResidualSample | None, table: SeqProcessTable) -> tuple[float, float]:
    """Sup-over-time and integrated-over-time Cramer-von Mises statistics.

    ``G(t, .)`` is constant for ``t`` in ``[k/n, (k+1)/n)`` and zero for
    ``t < 1/n`` and at ``t = 1``, so the time integral is ``sum_k cvm[k] / n``.
    """
    if sample is not None and sample.n != table.n:
        raise InvalidInputError("table was computed from a different sample")
    return float(table.cvm.max()), float(table.cvm.sum() / table.n)


def change_point_estimate(table: SeqProcessTable) -> float:
    """Smallest ``k/n`` at which ``sup_z |G(k/n, z)|`` is maximal."""
    return float((int(np.argmax(table.sup_abs)) + 1) / table.n)


def statistic(table: SeqProcessTable, kind) -> float:
    kind = StatisticKind.parse(kind)
    if kind is StatisticKind.KS:
        return ks_statistic(table)
    sup_t, int_t = cvm_statistics(None, table)
    return sup_t if kind is StatisticKind.CVM_SUP else int_t


def run_test(sample: ResidualSample, kind, level: float, quantiles) -> TestResult:
    """Test for a change in the residual distribution.

    Parameters
    ----------
    sample : ResidualSample
    kind : StatisticKind or str
    level : float
        Nominal level; the critical value is the ``1 - level`` quantile of
        the simulated limit law.
    quantiles : QuantileTable or mapping of kind to QuantileTable

    Raises
    ------
    MissingQuantileError
        If no table for ``kind`` is supplied.
    """
    kind = StatisticKind.parse(kind)
    if not 0 < level < 1:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    table_for_kind = quantiles.get(kind) if isinstance(quantiles, dict) else quantiles
    if table_for_kind is None or StatisticKind.parse(table_for_kind.kind) is not kind:
        raise MissingQuantileError(f"no limit table for statistic {kind.value}")
    table = seq_process(sample)
    value = statistic(table, kind)
    crit = table_for_kind.quantile(1 - level)
    return TestResult(
        statistic_kind=kind,
        statistic=value,
        critical_value=crit,
        p_value=table_for_kind.p_value(value),
        reject=bool(value > crit),
        theta_hat=change_point_estimate(table),
        n=table.n,
        level=level,
    )


def process_matrix(values, z) -> np.ndarray:
    """``G(k/n, z_j)`` for ``k = 0, ..., n`` (rows) and each ``z_j`` (columns)."""
    values = np.asarray(values, dtype=float)
    z = np.asarray(z, dtype=float)
    n = values.size
    below = (values[:, None] <= z[None, :]).astype(np.int64)
    counts = np.vstack([np.zeros((1, z.size), dtype=np.int64), np.cumsum(below, axis=0)])
    k = np.arange(n + 1)[:, None]
    return (n * counts - k * counts[-1][None, :]) / float(n) ** 1.5


def sup_process_distance(a, b) -> float:
    """``sup_{t, z} |G_a(t, z) - G_b(t, z)|`` for two samples of equal size.

    Both processes are steps in ``z`` jumping only at their own sample
    points, so the union of the two samples is an exhaustive set of
    ``z`` values.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise InvalidInputError("samples must have the same length")
    z = np.union1d(a, b)
    return float(np.abs(process_matrix(a, z) - process_matrix(b, z)).max())
