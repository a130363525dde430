import numpy as np
import pytest

from modules.covariate_transform import CovariateDistribution, spatial_cdf
from modules.geom import RasterCovariate, Window


@pytest.fixture(scope="session")
def unit_window():
    return Window.unit_square()


@pytest.fixture(scope="session")
def raster_x(unit_window):
    """Z(u) = x on a 200 x 200 grid; g* is 1 on (0, 1)."""
    return RasterCovariate.from_function(unit_window, 200, 200, lambda x, y: x)


@pytest.fixture(scope="session")
def raster_xy(unit_window):
    """Z(u) = x + y; g* is triangular on (0, 2)."""
    return RasterCovariate.from_function(unit_window, 200, 200, lambda x, y: x + y)


@pytest.fixture(scope="session")
def dist_x(raster_x):
    return spatial_cdf(raster_x)


@pytest.fixture(scope="session")
def dist_xy(raster_xy):
    return spatial_cdf(raster_xy)


@pytest.fixture(scope="session")
def flat_dist():
    """Analytic g* = 1 on [0, 1] (the Z(u) = x covariate without smoothing)."""
    z = np.linspace(0.0, 1.0, 513)
    return CovariateDistribution.from_density(z, np.ones_like(z), area=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
