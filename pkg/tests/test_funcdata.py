import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from flmchange.errors import DatasetFormatError, GridMismatchError
from flmchange.funcdata import (
    FunctionalDataset,
    GridFunction,
    equidistant_grid,
    inner_product,
    l2_norm,
    load_dataset,
    save_dataset,
)


def fn(grid, f):
    return GridFunction.from_callable(f, grid)


def test_constant_one_integrates_to_one():
    for grid in (equidistant_grid(2), equidistant_grid(300), np.array([0, 0.1, 0.7, 1.0])):
        one = fn(grid, lambda t: np.ones_like(t))
        assert inner_product(one, one) == pytest.approx(1.0, abs=1e-15)


def test_linear_integrand_is_exact(grid300):
    assert abs(inner_product(fn(grid300, lambda t: t), fn(grid300, np.ones_like)) - 0.5) < 1e-10


def test_sin_squared(grid300):
    s = fn(grid300, lambda t: np.sin(2 * np.pi * t))
    assert abs(inner_product(s, s) - 0.5) < 1e-4


def test_norms(grid300):
    assert l2_norm(fn(grid300, np.zeros_like)) == 0.0
    assert l2_norm(fn(grid300, lambda t: 2 * np.ones_like(t))) == pytest.approx(2.0, abs=1e-14)
    assert abs(l2_norm(fn(grid300, lambda t: t)) - np.sqrt(1 / 3)) < 1e-3


def test_grid_mismatch():
    f = fn(equidistant_grid(10), np.ones_like)
    g = fn(equidistant_grid(11), np.ones_like)
    with pytest.raises(GridMismatchError):
        inner_product(f, g)


@pytest.mark.parametrize(
    "grid",
    [[0.0], [0.0, 0.5, 0.5, 1.0], [0.1, 0.5, 1.0], [0.0, 0.5, 0.9], [0.0, 0.7, 0.3, 1.0]],
)
def test_grid_invariants(grid):
    with pytest.raises(ValueError):
        GridFunction(np.array(grid), np.zeros(len(grid)))


def test_values_length_checked():
    with pytest.raises(ValueError):
        GridFunction(equidistant_grid(5), np.zeros(4))


def test_grid_function_is_immutable(grid300):
    f = fn(grid300, lambda t: t)
    with pytest.raises(ValueError):
        f.values[0] = 1.0


vec = arrays(np.float64, 25, elements=st.floats(-1e3, 1e3))


@settings(max_examples=100, deadline=None)
@given(vec, vec, vec, st.floats(-10, 10), st.floats(-10, 10))
def test_symmetric_bilinear_positive(a, b, c, s, r):
    grid = equidistant_grid(25)
    f, g, h = GridFunction(grid, a), GridFunction(grid, b), GridFunction(grid, c)
    assert inner_product(f, g) == pytest.approx(inner_product(g, f), rel=1e-12, abs=1e-12)
    lhs = inner_product(GridFunction(grid, s * a + r * b), h)
    rhs = s * inner_product(f, h) + r * inner_product(g, h)
    scale = max(1.0, np.abs(a).max() * np.abs(c).max() * 20, np.abs(b).max() * np.abs(c).max() * 20)
    assert abs(lhs - rhs) <= 1e-12 * scale
    assert inner_product(f, f) >= 0


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_load_well_formed(tmp_path):
    p = _write(
        tmp_path / "d.csv",
        "# a comment\ny,0,0.25,0.5,0.75,1\n1.0,0,1,2,3,4\n2.0,1,1,1,1,1\n# mid\n3.5,0,0,0,0,0\n",
    )
    d = load_dataset(p)
    assert d.n == 3 and d.grid.size == 5
    np.testing.assert_array_equal(d.responses, [1.0, 2.0, 3.5])
    np.testing.assert_array_equal(d.curves[0], [0, 1, 2, 3, 4])


@pytest.mark.parametrize(
    "text, message",
    [
        ("y,0,0.5,0.25,1\n1,0,0,0,0\n2,0,0,0,0\n", "grid not increasing"),
        ("y,0,0.5,1\n", "n < 2"),
        ("y,0,0.5,1\n1,0,0,0\n", "n < 2"),
        ("y,0,0.5,1\n1,0,0,0\n2,0,0\n", "arity mismatch"),
        ("y,0,0.5,1\n1,0,0,0\n2,0,x,0\n", "non-numeric cell"),
        ("y,0,a,1\n1,0,0,0\n2,0,0,0\n", "non-numeric grid point"),
    ],
)
def test_load_errors(tmp_path, text, message):
    with pytest.raises(DatasetFormatError, match=message):
        load_dataset(_write(tmp_path / "bad.csv", text))


def test_load_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path / "nope.csv")


def test_save_load_roundtrip(tmp_path, rng):
    grid = equidistant_grid(7)
    d = FunctionalDataset(grid, rng.standard_normal((4, 7)), rng.standard_normal(4))
    save_dataset(d, tmp_path / "rt.csv")
    back = load_dataset(tmp_path / "rt.csv")
    np.testing.assert_array_equal(back.curves, d.curves)
    np.testing.assert_array_equal(back.responses, d.responses)
    np.testing.assert_array_equal(back.grid, d.grid)


def test_dataset_requires_shared_grid():
    a = GridFunction(equidistant_grid(5), np.zeros(5))
    b = GridFunction(equidistant_grid(6), np.zeros(6))
    with pytest.raises(GridMismatchError):
        FunctionalDataset.from_functions([a, b], [1.0, 2.0])
    with pytest.raises(DatasetFormatError):
        FunctionalDataset.from_functions([a], [1.0])
