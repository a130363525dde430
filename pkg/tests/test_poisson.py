import numpy as np
import pytest

from modules.errors import ParameterError
from modules.poisson import poisson_reciprocal_moment


def test_unit_mean():
    assert poisson_reciprocal_moment(1.0) == pytest.approx(0.48482, abs=1e-4)


def test_large_mean_matches_expansion():
    m = 500.0
    assert poisson_reciprocal_moment(m) == pytest.approx((1 + 1 / m) / m, rel=0.02)


def test_tiny_mean_first_term_dominates():
    m = 0.01
    assert poisson_reciprocal_moment(m) == pytest.approx(np.exp(-m) * m, rel=5e-3)


@pytest.mark.parametrize("m", [0.5, 1.0, 2.0, 5.0, 10.0, 50.0, 200.0])
def test_matches_monte_carlo(m):
    draws = np.random.default_rng(int(m * 10)).poisson(m, size=1_000_000)
    values = np.where(draws > 0, 1.0 / np.maximum(draws, 1), 0.0)
    se = values.std(ddof=1) / np.sqrt(values.size)
    assert abs(poisson_reciprocal_moment(m) - values.mean()) < 3 * se


@pytest.mark.parametrize("m", [0.0, -1.0])
def test_non_positive_mean(m):
    with pytest.raises(ParameterError):
        poisson_reciprocal_moment(m)
