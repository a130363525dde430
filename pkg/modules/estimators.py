# modules/estimators.py
"""
Covariate-based intensity estimators.

The weighted estimator works in covariate space: events are mapped to Z_i = Z(X_i),
weighted by 1/g*(Z_i) and kernel-smoothed; the intensity surface is recovered by
plugging the covariate raster back in. Guan's and Diggle's estimators are kept as
baselines.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
from scipy.stats import norm

from modules.covariate_transform import CovariateDistribution, gstar_at
from modules.errors import NumericError, ParameterError
from modules.geom import PointPattern, RasterCovariate, Window, eval_covariate, eval_covariate_many
from modules.kernels import Kernel
from modules.poisson import poisson_reciprocal_moment
from modules.quadrature import simpson, simpson_rows

logger = logging.getLogger(__name__)

EPS_Q_REL = 1e-12
CHUNK_ENTRIES = 4_000_000
GUAN_EVAL_POINTS = 257


# --- Types ---
@dataclass(frozen=True)
class TransformedSample:
    z: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float).ravel()
        w = np.asarray(self.weights, dtype=float).ravel()
        if z.shape != w.shape:
            raise ParameterError(f"{z.size} covariate values but {w.size} weights")
        if w.size and not (np.all(np.isfinite(w)) and np.all(w > 0)):
            raise NumericError("weights must be strictly positive and finite")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.z.size

    @classmethod
    def from_values(cls, z, dist: CovariateDistribution, strict: bool = True) -> "TransformedSample":
        """
        Weights 1/g*(z). With strict, values in negligible covariate mass are an error;
        otherwise g* is floored at eps_g.
        """
        z = np.asarray(z, dtype=float).ravel()
        g = np.atleast_1d(gstar_at(dist, z)) if z.size else np.zeros(0)
        low = g < dist.eps_g
        if np.any(low):
            if strict:
                idx = ", ".join(f"#{i} (z={z[i]:.4g})" for i in np.flatnonzero(low)[:10])
                raise NumericError(f"event in negligible covariate mass: {idx}")
            g = np.maximum(g, dist.eps_g)
        return cls(z, 1.0 / g)

    def concat(self, other: "TransformedSample") -> "TransformedSample":
        return TransformedSample(np.concatenate([self.z, other.z]), np.concatenate([self.weights, other.weights]))


@dataclass(frozen=True)
class RhoEstimate:
    z_grid: np.ndarray
    rho_hat: np.ndarray
    h: float
    kernel: Kernel
    m_hat: float
    estimator: str = "weighted"


@dataclass(frozen=True)
class IntensityEstimate:
    raster: RasterCovariate
    provenance: dict[str, Any] = field(default_factory=dict)


# --- Kernel sums ---
def _check_bandwidth(h: float) -> None:
    if not (np.isfinite(h) and h > 0):
        raise ParameterError(f"bandwidth must be positive, got {h}")


def kernel_sum(z_eval, centres, weights, h: float, k: Kernel) -> np.ndarray:
    """sum_j weights_j K_h(z_eval_i - centres_j), chunked over z_eval."""
    z_eval = np.atleast_1d(np.asarray(z_eval, dtype=float))
    centres = np.asarray(centres, dtype=float).ravel()
    weights = np.broadcast_to(np.asarray(weights, dtype=float), centres.shape)
    out = np.zeros(z_eval.shape[0])
    if centres.size == 0:
        return out
    step = max(1, CHUNK_ENTRIES // centres.size)
    for start in range(0, z_eval.size, step):
        block = z_eval[start:start + step]
        out[start:start + step] = k((block[:, None] - centres[None, :]) / h) @ weights / h
    return out


def _scalar_or_array(values, z):
    return float(values[0]) if np.ndim(z) == 0 else values


# --- Weighted estimator ---
def transform_sample(pattern: PointPattern, raster: RasterCovariate, dist: CovariateDistribution) -> TransformedSample:
    """Maps events to covariate values and attaches 1/g* weights."""
    z = pattern.z_values if pattern.z_values is not None else eval_covariate_many(raster, pattern.points)
    return TransformedSample.from_values(z, dist, strict=True)


def rho_hat(sample: TransformedSample, h: float, k: Kernel, z):
    _check_bandwidth(h)
    values = kernel_sum(z, sample.z, sample.weights, h, k)
    return _scalar_or_array(values, z)


def f_hat(sample: TransformedSample, dist: CovariateDistribution, h: float, k: Kernel, z):
    _check_bandwidth(h)
    z_arr = np.atleast_1d(np.asarray(z, dtype=float))
    if sample.n == 0:
        values = np.zeros(z_arr.shape)
    else:
        values = np.atleast_1d(gstar_at(dist, z_arr)) * kernel_sum(z_arr, sample.z, sample.weights, h, k) / sample.n
    return _scalar_or_array(values, z)


def estimate_rho(sample: TransformedSample, dist: CovariateDistribution, h: float, k: Kernel) -> RhoEstimate:
    curve = rho_hat(sample, h, k, dist.z_grid)
    m_hat = simpson(curve * dist.g_star, dist.z_grid)
    return RhoEstimate(dist.z_grid, curve, float(h), k, max(m_hat, 0.0))


def lambda_hat(rho: RhoEstimate, raster: RasterCovariate) -> IntensityEstimate:
    """Plug-in surface: lambda(u) = rho(Z(u)), clamped at the ends of the rho grid."""
    values = raster.values
    outside = int(np.count_nonzero((values < rho.z_grid[0]) | (values > rho.z_grid[-1])))
    if outside:
        logger.warning(f"{outside} raster cell(s) outside the rho grid were clamped")
    lam = np.interp(values, rho.z_grid, rho.rho_hat)
    return IntensityEstimate(
        raster.with_values(lam),
        {"estimator": rho.estimator, "bandwidth": rho.h, "kernel": rho.kernel.family, "clamped_cells": outside},
    )


def f_hat_moments(density, dist: CovariateDistribution, m: float, h: float, k: Kernel, z):
    """
    Closed-form mean and variance of f_hat_h(z) when N ~ Poisson(m) and the Z_i are
    i.i.d. with `density` (on dist.z_grid), i.e. rho * g* / m.

    With Y = K_h(z - Z) / g*(Z):
        E f_hat = g*(z) (1 - e^-m) E[Y]
        Var f_hat = g*(z)^2 (A(m) E[Y^2] - (A(m) + e^-2m - e^-m) E[Y]^2)
    """
    _check_bandwidth(h)
    t = dist.z_grid
    g_eff = np.maximum(dist.g_star, dist.eps_g)
    density = np.asarray(density, dtype=float)
    z_arr = np.atleast_1d(np.asarray(z, dtype=float))
    A = poisson_reciprocal_moment(m)

    kern = k.scaled(z_arr[:, None] - t[None, :], h)
    ey = simpson_rows(kern * (density / g_eff), t)
    ey2 = simpson_rows(kern**2 * (density / g_eff**2), t)
    gz = np.atleast_1d(gstar_at(dist, z_arr))
    means = gz * (1.0 - np.exp(-m)) * ey
    variances = gz**2 * (A * ey2 - (A + np.exp(-2.0 * m) - np.exp(-m)) * ey**2)
    if np.ndim(z) == 0:
        return float(means[0]), float(variances[0])
    return means, variances


# --- Guan baseline ---
def guan_denominator(raster: RasterCovariate, h: float, k: Kernel, z) -> np.ndarray:
    """q_h as a function of the covariate value: midpoint sum of K_h(z - Z(s)) ds over cells."""
    _check_bandwidth(h)
    return kernel_sum(z, raster.values.ravel(), raster.cell_area, h, k)


def guan_rho(event_z, raster: RasterCovariate, h: float, k: Kernel, z, q=None) -> np.ndarray:
    """Guan's estimator in covariate form: sum_i K_h(z - Z_i) / q_h(z)."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    q = guan_denominator(raster, h, k, z) if q is None else q
    if np.any(q < EPS_Q_REL * raster.window.area):
        raise NumericError("empty covariate neighbourhood: q_h vanishes")
    return kernel_sum(z, event_z, 1.0, h, k) / q


def guan_cv_score(event_z, raster: RasterCovariate, h: float, k: Kernel, z_eval, q=None) -> float:
    """
    Least-squares CV for Guan's estimator: integral over W of lambda_hat^2 minus
    2 sum_i lambda_hat_{-i}(X_i), with q_h interpolated at the event values.
    """
    event_z = np.asarray(event_z, dtype=float).ravel()
    z_eval = np.asarray(z_eval, dtype=float)
    q = guan_denominator(raster, h, k, z_eval) if q is None else q
    curve = guan_rho(event_z, raster, h, k, z_eval, q)
    lam = np.interp(raster.values, z_eval, curve)
    kmat = k((event_z[:, None] - event_z[None, :]) / h) / h
    np.fill_diagonal(kmat, 0.0)
    loo = kmat.sum(axis=1) / np.interp(event_z, z_eval, q)
    return float(np.sum(lam * lam) * raster.cell_area - 2.0 * loo.sum())


def guan_estimate(pattern: PointPattern, raster: RasterCovariate, h: float, k: Kernel, u) -> float:
    _check_bandwidth(h)
    if pattern.n == 0:
        return 0.0
    event_z = eval_covariate_many(raster, pattern.points)
    return float(guan_rho(event_z, raster, h, k, eval_covariate(raster, u))[0])


def guan_surface(
    pattern: PointPattern,
    raster: RasterCovariate,
    h: float,
    k: Kernel,
    n_eval: int = GUAN_EVAL_POINTS,
) -> tuple[IntensityEstimate, np.ndarray, np.ndarray]:
    """Guan's surface via a covariate curve over the raster's value range."""
    _check_bandwidth(h)
    values = raster.values
    z_eval = np.linspace(values.min(), values.max(), n_eval)
    if pattern.n == 0:
        curve = np.zeros(n_eval)
    else:
        curve = guan_rho(eval_covariate_many(raster, pattern.points), raster, h, k, z_eval)
    lam = np.interp(values, z_eval, curve)
    est = IntensityEstimate(raster.with_values(lam), {"estimator": "guan", "bandwidth": h, "kernel": k.family})
    return est, z_eval, curve


# --- Diggle baseline ---
def _axis_mass(coord, lo: float, hi: float, ncells: int, h: float) -> np.ndarray:
    # midpoint rule for the 1-D gaussian mass inside [lo, hi]
    step = (hi - lo) / ncells
    centres = lo + (np.arange(ncells) + 0.5) * step
    coord = np.atleast_1d(np.asarray(coord, dtype=float))
    d = (coord[:, None] - centres[None, :]) / h
    return norm.pdf(d).sum(axis=1) * step / h


def diggle_edge_correction(window: Window, h_xy: float, points, ncols: int, nrows: int) -> np.ndarray:
    """p_H(u) by the midpoint rule; the isotropic gaussian makes the 2-D sum separable."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    px = _axis_mass(pts[:, 0], window.xmin, window.xmax, ncols, h_xy)
    py = _axis_mass(pts[:, 1], window.ymin, window.ymax, nrows, h_xy)
    return px * py


def _planar_kernel_sum(pattern: PointPattern, h_xy: float, points) -> np.ndarray:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    out = np.zeros(pts.shape[0])
    if pattern.n == 0:
        return out
    step = max(1, CHUNK_ENTRIES // pattern.n)
    for start in range(0, pts.shape[0], step):
        block = pts[start:start + step]
        d2 = ((block[:, None, :] - pattern.points[None, :, :]) ** 2).sum(axis=2)
        out[start:start + step] = np.exp(-0.5 * d2 / h_xy**2).sum(axis=1)
    return out / (2.0 * np.pi * h_xy**2)


def diggle_estimate(
    pattern: PointPattern,
    h_xy: float,
    u,
    raster: Optional[RasterCovariate] = None,
    resolution: int = 128,
) -> float:
    """Edge-corrected planar kernel intensity at u; quadrature follows the raster grid when given."""
    _check_bandwidth(h_xy)
    if pattern.n == 0:
        return 0.0
    ncols, nrows = (raster.ncols, raster.nrows) if raster is not None else (resolution, resolution)
    p = diggle_edge_correction(pattern.window, h_xy, u, ncols, nrows)[0]
    return float(_planar_kernel_sum(pattern, h_xy, u)[0] / p)


def diggle_surface(pattern: PointPattern, raster: RasterCovariate, h_xy: float) -> IntensityEstimate:
    _check_bandwidth(h_xy)
    xc, yc = raster.cell_centers()
    X, Y = np.meshgrid(xc, yc)
    centres = np.column_stack([X.ravel(), Y.ravel()])
    p = diggle_edge_correction(raster.window, h_xy, centres, raster.ncols, raster.nrows)
    lam = _planar_kernel_sum(pattern, h_xy, centres) / p
    return IntensityEstimate(
        raster.with_values(lam.reshape(raster.nrows, raster.ncols)),
        {"estimator": "diggle", "bandwidth": h_xy, "kernel": "gaussian"},
    )


def diggle_default_bandwidth(pattern: PointPattern) -> float:
    """Mean of the per-axis normal-scale bandwidths sd * n^(-1/6)."""
    if pattern.n < 2:
        raise ParameterError("Diggle bandwidth rule needs at least 2 events")
    sd = np.std(pattern.points, axis=0, ddof=1)
    h = float(np.mean(sd)) * pattern.n ** (-1.0 / 6.0)
    if h <= 0:
        raise ParameterError("events have zero spread")
    return h
