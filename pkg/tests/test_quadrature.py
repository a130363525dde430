import numpy as np
import pytest

from modules.quadrature import running_integral, second_difference, simpson, simpson_rows


def test_simpson_exact_for_cubics_on_odd_grid():
    x = np.linspace(0.0, 2.0, 11)
    assert simpson(x**3 - x, x) == pytest.approx(2.0, rel=1e-12)


def test_simpson_even_grid_uses_trapezoid_tail():
    x = np.linspace(0.0, 1.0, 1000)
    assert simpson(np.sin(x), x) == pytest.approx(1.0 - np.cos(1.0), abs=1e-7)


def test_simpson_degenerate_grids():
    assert simpson([1.0], [0.0]) == 0.0
    assert simpson([1.0, 3.0], [0.0, 1.0]) == pytest.approx(2.0)


def test_simpson_rows_matches_row_by_row(rng):
    for size in (11, 12):
        x = np.linspace(0.0, 1.0, size)
        y = rng.normal(size=(4, size))
        np.testing.assert_allclose(simpson_rows(y, x), [simpson(row, x) for row in y], rtol=1e-12)


def test_running_integral_ends_at_total():
    x = np.linspace(0.0, 1.0, 2001)
    G = running_integral(2.0 * x, x)
    assert G[0] == 0.0
    assert G[-1] == pytest.approx(1.0, abs=1e-6)


def test_second_difference_of_parabola():
    x = np.linspace(-1.0, 1.0, 41)
    np.testing.assert_allclose(second_difference(3.0 * x**2, x[1] - x[0]), 6.0, rtol=1e-9)
