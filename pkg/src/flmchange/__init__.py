"""Residual-based change-point tests for functional linear models."""

from .errors import (
    ConfigurationError,
    DatasetFormatError,
    FlmChangeError,
    GridMismatchError,
    InvalidInputError,
    MissingQuantileError,
    NumericalFailureError,
    TableFormatError,
)
from .estimator import FlmFit, SplineBasis, fit_penalized, gcv_select, residuals
from .funcdata import FunctionalDataset, GridFunction, inner_product, l2_norm, load_dataset
from .limits import QuantileTable, default_tables, load_table, save_table
from .seqproc import (
    ResidualSample,
    StatisticKind,
    TestResult,
    change_point_estimate,
    cvm_statistics,
    ks_statistic,
    run_test,
    seq_process,
)

__version__ = "0.1.0"
