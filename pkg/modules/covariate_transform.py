# modules/covariate_transform.py
"""
The covariate-space measure: spatial CDF G* of the covariate, its density g*, and the
expected-count functional m = integral of rho * g*.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy.signal import fftconvolve
from scipy.stats import norm

from modules.errors import NumericError, ParameterError
from modules.geom import RasterCovariate
from modules.kernels import silverman_rule
from modules.quadrature import running_integral, second_difference, simpson

logger = logging.getLogger(__name__)

DEFAULT_N_Z = 513
MIN_N_Z = 64
PAD_BANDWIDTHS = 3.0
EPS_G_REL = 1e-6


@dataclass(frozen=True)
class CovariateDistribution:
    z_grid: np.ndarray
    g_star: np.ndarray
    G_star: np.ndarray
    area: float
    smoothing_bandwidth: float
    g_star_d1: Optional[np.ndarray] = None
    g_star_d2: Optional[np.ndarray] = None

    def __post_init__(self):
        z = np.asarray(self.z_grid, dtype=float)
        if z.ndim != 1 or z.size < 3 or np.any(np.diff(z) <= 0):
            raise ParameterError("z_grid must be a strictly increasing 1-D grid of at least 3 points")
        g = np.asarray(self.g_star, dtype=float)
        G = np.asarray(self.G_star, dtype=float)
        if g.shape != z.shape or G.shape != z.shape:
            raise ParameterError("g_star and G_star must match z_grid")
        if np.any(g < 0):
            raise NumericError("g_star must be non-negative")
        arrays = {"z_grid": z, "g_star": g, "G_star": G}
        for name in ("g_star_d1", "g_star_d2"):
            d = getattr(self, name)
            if d is not None:
                d = np.asarray(d, dtype=float)
                if d.shape != z.shape:
                    raise ParameterError(f"{name} must match z_grid")
                arrays[name] = d
        for name, arr in arrays.items():
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_density(cls, z_grid, g_star, area: float, smoothing_bandwidth: float = 0.0) -> "CovariateDistribution":
        """Distribution from an analytically known g*; G* is its running integral."""
        z = np.asarray(z_grid, dtype=float)
        g = np.asarray(g_star, dtype=float)
        return cls(z, g, running_integral(g, z), float(area), smoothing_bandwidth)

    @property
    def z_min(self) -> float:
        return float(self.z_grid[0])

    @property
    def z_max(self) -> float:
        return float(self.z_grid[-1])

    @property
    def dz(self) -> float:
        return float(self.z_grid[1] - self.z_grid[0])

    @property
    def eps_g(self) -> float:
        return EPS_G_REL * float(self.g_star.max())


def _gaussian_taps(offsets, bandwidth: float, order: int) -> np.ndarray:
    u = offsets / bandwidth
    pdf = norm.pdf(u)
    if order == 0:
        return pdf / bandwidth
    if order == 1:
        return -u * pdf / bandwidth**2
    if order == 2:
        return (u * u - 1.0) * pdf / bandwidth**3
    raise ParameterError(f"derivative order must be 0, 1 or 2, got {order}")


def smoothed_measure(values, weights, z_grid, bandwidth: float, order: int = 0) -> np.ndarray:
    """
    Gaussian-smoothed density of `values` carrying mass `weights`, on a uniform z_grid.

    Mass is linearly binned onto the grid nodes and convolved with the sampled kernel,
    or with its first or second derivative when `order` is 1 or 2.
    """
    z_grid = np.asarray(z_grid, dtype=float)
    dz = z_grid[1] - z_grid[0]
    n = z_grid.size
    pos = np.clip((np.asarray(values, dtype=float).ravel() - z_grid[0]) / dz, 0.0, n - 1)
    lo = np.minimum(np.floor(pos).astype(int), n - 2)
    frac = pos - lo
    w = np.asarray(weights, dtype=float).ravel() * np.ones_like(pos)
    binned = np.bincount(lo, weights=w * (1 - frac), minlength=n) + np.bincount(
        lo + 1, weights=w * frac, minlength=n
    )
    half = int(np.ceil(6.0 * bandwidth / dz))
    offsets = np.arange(-half, half + 1) * dz
    smoothed = fftconvolve(binned, _gaussian_taps(offsets, bandwidth, order), mode="full")[half:half + n]
    return np.clip(smoothed, 0.0, None) if order == 0 else smoothed


def spatial_cdf(
    raster: RasterCovariate,
    n_z: int = DEFAULT_N_Z,
    smoothing_bandwidth: Optional[float] = None,
) -> CovariateDistribution:
    """
    Builds G* and g* from the raster's cell values, each cell carrying its area.

    Args:
        raster: Covariate raster.
        n_z (int): Number of z-grid nodes (at least 64).
        smoothing_bandwidth (float, optional): Override for the Silverman bandwidth
            used to smooth g*.

    Returns:
        CovariateDistribution on [min Z - 3 bw, max Z + 3 bw].
    """
    if n_z < MIN_N_Z:
        raise ParameterError(f"n_z must be at least {MIN_N_Z}, got {n_z}")
    values = raster.values.ravel()
    zlo, zhi = float(values.min()), float(values.max())
    if zhi - zlo <= 0:
        raise NumericError("covariate has zero gradient")

    bw = silverman_rule(values) if smoothing_bandwidth is None else float(smoothing_bandwidth)
    if bw <= 0:
        raise ParameterError(f"smoothing bandwidth must be positive, got {bw}")
    area = raster.window.area
    z_grid = np.linspace(zlo - PAD_BANDWIDTHS * bw, zhi + PAD_BANDWIDTHS * bw, n_z)

    g = smoothed_measure(values, raster.cell_area, z_grid, bw)
    scale = area / simpson(g, z_grid)
    g *= scale
    g1 = scale * smoothed_measure(values, raster.cell_area, z_grid, bw, order=1)
    g2 = scale * smoothed_measure(values, raster.cell_area, z_grid, bw, order=2)

    ordered = np.sort(values)
    G = np.searchsorted(ordered, z_grid, side="right") * raster.cell_area

    logger.info(f"Built g* on {n_z} nodes over [{z_grid[0]:.4g}, {z_grid[-1]:.4g}] with bandwidth {bw:.4g}")
    return CovariateDistribution(z_grid, g, G, area, bw, g1, g2)


def gstar_at(dist: CovariateDistribution, z):
    """Linear interpolation of g*; zero outside the z-grid."""
    out = np.interp(z, dist.z_grid, dist.g_star, left=0.0, right=0.0)
    return float(out) if np.ndim(out) == 0 else out


def gstar_derivatives(dist: CovariateDistribution) -> tuple[np.ndarray, np.ndarray]:
    """
    g*' and g*'' on the z-grid.

    Exact derivatives of the smoothed g* when the distribution was built from a raster;
    central differences with the grid spacing as step otherwise.
    """
    if dist.g_star_d1 is not None and dist.g_star_d2 is not None:
        return dist.g_star_d1, dist.g_star_d2
    return np.gradient(dist.g_star, dist.dz), second_difference(dist.g_star, dist.dz)


def expected_count(rho: Union[Callable, np.ndarray], dist: CovariateDistribution) -> float:
    """Simpson integral of rho * g* over the z-grid."""
    values = rho(dist.z_grid) if callable(rho) else rho
    values = np.broadcast_to(np.asarray(values, dtype=float), dist.z_grid.shape)
    if not np.all(np.isfinite(values)):
        raise NumericError("rho must be finite on the z-grid")
    if np.any(values < 0):
        raise ParameterError("rho must be non-negative: intensities cannot be negative")
    if not np.any(values):
        return 0.0
    return simpson(values * dist.g_star, dist.z_grid)
