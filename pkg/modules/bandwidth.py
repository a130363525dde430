# modules/bandwidth.py
"""
Bandwidth selectors for the weighted covariate estimator.

All plug-in selectors share the AMISE closed form

    h = (A(m) R(K) / (mu2(K)^2 (1 - e^-m)^2 R(rho'' g* / m)))^(1/5)

and differ in how m, A(m) and the curvature functional are obtained.
"""

import logging
from typing import Any, Callable, Optional

import numpy as np
from pydantic import BaseModel, Field, field_validator

from modules.covariate_transform import CovariateDistribution, gstar_at, gstar_derivatives
from modules.errors import NumericError, ParameterError
from modules.estimators import GUAN_EVAL_POINTS, TransformedSample, guan_cv_score, kernel_sum
from modules.geom import RasterCovariate
from modules.kernels import Kernel, silverman_rule
from modules.poisson import poisson_reciprocal_moment
from modules.quadrature import second_difference, simpson

logger = logging.getLogger(__name__)

CV_GRID_SIZE = 40
CV_GRID_SPAN = 10.0
PILOT_EXPONENT = 2.0 / 35.0


class BandwidthReport(BaseModel):
    method: str
    h: float
    diagnostics: dict[str, Any] = Field(default_factory=dict)

    @field_validator("method")
    @classmethod
    def _known_method(cls, v: str) -> str:
        if v not in {"silverman", "rt", "cv", "boot", "amise_oracle", "mise_mc", "guan_cv", "fixed"}:
            raise ValueError(f"unknown bandwidth method '{v}'")
        return v

    @field_validator("h")
    @classmethod
    def _positive(cls, v: float) -> float:
        if not (np.isfinite(v) and v > 0):
            raise ValueError(f"bandwidth must be positive and finite, got {v}")
        return float(v)


# --- AMISE algebra ---
def amise(h, A: float, m: float, curvature_roughness: float, k: Kernel):
    h = np.asarray(h, dtype=float)
    return (1.0 - np.exp(-m)) ** 2 * h**4 / 4.0 * curvature_roughness * k.mu2**2 + A / h * k.roughness


def amise_bandwidth(A: float, m: float, curvature_roughness: float, k: Kernel) -> float:
    if not curvature_roughness > 0:
        raise NumericError("flat curvature functional: R(rho'' g*/m) is zero")
    return float((A * k.roughness / (k.mu2**2 * (1.0 - np.exp(-m)) ** 2 * curvature_roughness)) ** 0.2)


# --- Selectors ---
def silverman(sample: TransformedSample) -> BandwidthReport:
    """Silverman's rule applied to the raw (unweighted) covariate values."""
    if sample.n < 2:
        raise ParameterError(f"Silverman's rule needs n >= 2, got {sample.n}")
    h = silverman_rule(sample.z)
    return BandwidthReport(method="silverman", h=h, diagnostics={"n": sample.n, "sd": float(np.std(sample.z, ddof=1))})


def normal_reference_curvature(dist: CovariateDistribution, mu: float, sd: float) -> np.ndarray:
    """
    rho'' g* / m on the z-grid when f = rho g* / m is Normal(mu, sd).

    Zero where g* <= eps_g.
    """
    z = dist.z_grid
    u = (z - mu) / sd
    f = np.exp(-0.5 * u * u) / (sd * np.sqrt(2.0 * np.pi))
    f1 = -u / sd * f
    f2 = (u * u - 1.0) / sd**2 * f
    g = dist.g_star
    g1, g2 = gstar_derivatives(dist)
    mask = g > dist.eps_g
    gs = np.where(mask, g, 1.0)
    curv = f2 - 2.0 * f1 * g1 / gs - f * g2 / gs + 2.0 * f * g1**2 / gs**2
    return np.where(mask, curv, 0.0)


def rule_of_thumb(
    sample: TransformedSample,
    dist: CovariateDistribution,
    k: Kernel,
    exact_A: bool = False,
) -> BandwidthReport:
    """Normal-scale plug-in: m by n, A(m) by 1/n (or exactly), curvature from a fitted Normal."""
    n = sample.n
    if n < 2:
        raise ParameterError(f"rule-of-thumb needs n >= 2, got {n}")
    mu = float(np.mean(sample.z))
    sd = float(np.std(sample.z, ddof=1))
    if not sd > 0:
        raise NumericError("rule-of-thumb undefined: covariate values have zero spread")
    curv = normal_reference_curvature(dist, mu, sd)
    R = simpson(curv**2, dist.z_grid)
    A = poisson_reciprocal_moment(n) if exact_A else 1.0 / n
    h = amise_bandwidth(A, n, R, k)
    return BandwidthReport(
        method="rt",
        h=h,
        diagnostics={"mu": mu, "sd": sd, "curvature_roughness": R, "A": A, "m": n, "exact_A": exact_A},
    )


def default_cv_grid(sample: TransformedSample) -> np.ndarray:
    h0 = silverman_rule(sample.z)
    return np.geomspace(h0 / CV_GRID_SPAN, h0 * CV_GRID_SPAN, CV_GRID_SIZE)


def cv_score(sample: TransformedSample, dist: CovariateDistribution, k: Kernel, h: float) -> float:
    """
    Least-squares CV: integral of f_hat^2 minus (2/n) sum of leave-one-out f_hat_{-i}(Z_i).
    """
    n = sample.n
    z, w = sample.z, sample.weights
    grid = dist.z_grid
    fh = dist.g_star * kernel_sum(grid, z, w, h, k) / n
    kmat = k((z[:, None] - z[None, :]) / h) / h
    np.fill_diagonal(kmat, 0.0)
    loo = np.atleast_1d(gstar_at(dist, z)) * (kmat @ w) / (n - 1)
    return simpson(fh**2, grid) - 2.0 / n * float(loo.sum())


def cv_bandwidth(
    sample: TransformedSample,
    dist: CovariateDistribution,
    k: Kernel,
    h_grid=None,
) -> BandwidthReport:
    if sample.n < 2:
        raise ParameterError(f"cross-validation needs n >= 2, got {sample.n}")
    h_grid = default_cv_grid(sample) if h_grid is None else np.asarray(h_grid, dtype=float)
    if np.any(h_grid <= 0) or np.any(np.diff(h_grid) <= 0):
        raise ParameterError("h_grid must be positive and increasing")
    scores = np.array([cv_score(sample, dist, k, h) for h in h_grid])
    finite = np.isfinite(scores)
    if not finite.any():
        raise NumericError("all cross-validation scores are non-finite")
    idx = int(np.argmin(np.where(finite, scores, np.inf)))
    boundary = idx in (0, len(h_grid) - 1)
    return BandwidthReport(
        method="cv",
        h=float(h_grid[idx]),
        diagnostics={
            "boundary_hit": boundary,
            "h_grid": h_grid.tolist(),
            "cv": [float(s) if np.isfinite(s) else None for s in scores],
        },
    )


def h_amise_oracle(
    rho_true: Callable,
    dist: CovariateDistribution,
    m: float,
    k: Kernel,
    rho_second: Optional[Callable] = None,
) -> BandwidthReport:
    """AMISE-optimal bandwidth for a known rho with exact A(m)."""
    if not m > 0:
        raise ParameterError(f"m must be positive, got {m}")
    z = dist.z_grid
    if rho_second is not None:
        r2 = np.asarray(rho_second(z), dtype=float)
    else:
        r = np.asarray(rho_true(z), dtype=float)
        r2 = second_difference(r, dist.dz)
    curv = r2 * dist.g_star / m
    R = simpson(curv**2, z)
    A = poisson_reciprocal_moment(m)
    h = amise_bandwidth(A, m, R, k)
    return BandwidthReport(method="amise_oracle", h=h, diagnostics={"A": A, "m": m, "curvature_roughness": R})


def pilot_bandwidth(rt: BandwidthReport, n: int) -> float:
    """
    b = h_RT * n^(-1/7) / n^(-1/5): the rule of thumb rescaled from the n^(-1/5) order to
    the n^(-1/7) order of a curvature pilot, so b > h_RT for n > 1.
    """
    if n < 1:
        raise ParameterError(f"pilot bandwidth needs n >= 1, got {n}")
    return float(n ** PILOT_EXPONENT * rt.h)


def guan_cv_bandwidth(event_z, raster: RasterCovariate, k: Kernel, h_grid=None) -> BandwidthReport:
    """Grid minimiser of the least-squares CV score of Guan's estimator."""
    event_z = np.asarray(event_z, dtype=float).ravel()
    if event_z.size < 2:
        raise ParameterError(f"cross-validation needs n >= 2, got {event_z.size}")
    if h_grid is None:
        h0 = silverman_rule(event_z)
        h_grid = np.geomspace(h0 / CV_GRID_SPAN, h0 * CV_GRID_SPAN, CV_GRID_SIZE)
    h_grid = np.asarray(h_grid, dtype=float)
    z_eval = np.linspace(raster.values.min(), raster.values.max(), GUAN_EVAL_POINTS)
    scores = []
    for h in h_grid:
        try:
            scores.append(guan_cv_score(event_z, raster, h, k, z_eval))
        except NumericError:
            scores.append(np.nan)
    scores = np.array(scores)
    if not np.isfinite(scores).any():
        raise NumericError("Guan's estimator is undefined at every grid bandwidth")
    idx = int(np.nanargmin(scores))
    return BandwidthReport(
        method="guan_cv",
        h=float(h_grid[idx]),
        diagnostics={
            "boundary_hit": idx in (0, len(h_grid) - 1),
            "h_grid": h_grid.tolist(),
            "cv": [float(s) if np.isfinite(s) else None for s in scores],
        },
    )
