# modules/simulation.py
"""Synthetic covariates, log-linear Poisson models, pattern simulation and error criteria."""

import logging
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy.linalg import cholesky

from modules.covariate_transform import CovariateDistribution, smoothed_measure
from modules.errors import NumericError, ParameterError
from modules.estimators import IntensityEstimate
from modules.geom import PointPattern, RasterCovariate, Window, eval_covariate_many
from modules.quadrature import simpson
from modules.random_streams import STREAM_FIELD, substream

logger = logging.getLogger(__name__)

MAX_CIRCULANT_DIM = 512
MAX_DENSE_CELLS = 128 * 128
EMBEDDING_PADDINGS = (2, 3, 4)
EMBEDDING_TOL = 1e-8

MODEL_COEFFICIENTS = {1: (6.0, 4.0), 2: (6.0, 4.0), 3: (5.0, -3.0)}
MODEL_SOURCES = {1: "grf", 2: "grf_plus_error", 3: "distance"}

# letter-shaped polyline (stem, bowl, leg) in unit-square coordinates
LETTER_STROKES = (
    ((0.30, 0.20), (0.30, 0.80)),
    ((0.30, 0.80), (0.55, 0.80), (0.65, 0.72), (0.65, 0.58), (0.55, 0.50), (0.30, 0.50)),
    ((0.45, 0.50), (0.68, 0.20)),
)


# --- Schemas ---
class GRFSpec(BaseModel):
    sigma: float = Field(0.1, gt=0)
    range_s: float = Field(0.1, gt=0)
    ncols: int = Field(64, ge=2)
    nrows: int = Field(64, ge=2)
    # None follows the run seed
    seed: Optional[int] = None
    method: Literal["circulant", "cholesky"] = "circulant"

    @property
    def field_seed(self) -> int:
        return 0 if self.seed is None else self.seed

    def seeded(self, default: int) -> "GRFSpec":
        """This spec with `default` filled in when no field seed was given."""
        return self if self.seed is not None else self.model_copy(update={"seed": default})


class ModelSpec(BaseModel):
    model_id: Literal[1, 2, 3]
    target_m: float = Field(gt=0)
    beta0: Optional[float] = None
    beta1: Optional[float] = None
    covariate_source: Optional[Literal["grf", "grf_plus_error", "distance"]] = None

    @model_validator(mode="after")
    def _fill_model_defaults(self):
        b0, b1 = MODEL_COEFFICIENTS[self.model_id]
        if self.beta0 is None:
            self.beta0 = b0
        if self.beta1 is None:
            self.beta1 = b1
        if self.covariate_source is None:
            self.covariate_source = MODEL_SOURCES[self.model_id]
        return self


# --- Covariates ---
def _cell_size(spec: GRFSpec) -> tuple[float, float]:
    return 1.0 / spec.ncols, 1.0 / spec.nrows


def _circulant_field(spec: GRFSpec, rng: np.random.Generator) -> np.ndarray:
    dx, dy = _cell_size(spec)
    for pad in EMBEDDING_PADDINGS:
        M, N = pad * spec.nrows, pad * spec.ncols
        lag_x = np.minimum(np.arange(N), N - np.arange(N)) * dx
        lag_y = np.minimum(np.arange(M), M - np.arange(M)) * dy
        r = np.sqrt(lag_y[:, None] ** 2 + lag_x[None, :] ** 2)
        eig = np.real(np.fft.fft2(spec.sigma**2 * np.exp(-r / spec.range_s)))
        if eig.min() >= -EMBEDDING_TOL * eig.max():
            break
        logger.debug(f"Circulant embedding with padding {pad} not PSD (min eigenvalue {eig.min():.3g})")
    else:
        raise NumericError(
            "circulant embedding is not positive semidefinite; increase the padding or reduce range_s"
        )
    eig = np.clip(eig, 0.0, None)
    xi = rng.standard_normal((M, N)) + 1j * rng.standard_normal((M, N))
    field = np.fft.fft2(np.sqrt(eig / (M * N)) * xi)
    return field.real[: spec.nrows, : spec.ncols]


def _dense_field(spec: GRFSpec, rng: np.random.Generator) -> np.ndarray:
    if spec.ncols * spec.nrows > MAX_DENSE_CELLS:
        raise ParameterError(f"dense Cholesky limited to {MAX_DENSE_CELLS} cells")
    dx, dy = _cell_size(spec)
    X, Y = np.meshgrid((np.arange(spec.ncols) + 0.5) * dx, (np.arange(spec.nrows) + 0.5) * dy)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    r = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2))
    cov = spec.sigma**2 * np.exp(-r / spec.range_s)
    L = cholesky(cov + 1e-10 * spec.sigma**2 * np.eye(len(pts)), lower=True)
    return (L @ rng.standard_normal(len(pts))).reshape(spec.nrows, spec.ncols)


def gaussian_random_field(spec: GRFSpec, rng: Optional[np.random.Generator] = None) -> RasterCovariate:
    """Zero-mean field with covariance sigma^2 exp(-r / range_s) on the unit square."""
    if spec.method == "circulant" and max(spec.ncols, spec.nrows) > MAX_CIRCULANT_DIM:
        raise ParameterError(f"grid dims above {MAX_CIRCULANT_DIM} are not supported")
    rng = rng if rng is not None else substream(spec.field_seed, STREAM_FIELD)
    values = _circulant_field(spec, rng) if spec.method == "circulant" else _dense_field(spec, rng)
    return RasterCovariate(Window.unit_square(), values)


def _segment_distance(px, py, a, b) -> np.ndarray:
    ax, ay = a
    bx, by = b
    vx, vy = bx - ax, by - ay
    t = np.clip(((px - ax) * vx + (py - ay) * vy) / (vx * vx + vy * vy), 0.0, 1.0)
    return np.hypot(px - (ax + t * vx), py - (ay + t * vy))


def distance_field(ncols: int, nrows: int) -> RasterCovariate:
    """Distance to the letter-shaped polyline, rescaled to [0, 1]."""

    def dist_to_letter(x, y):
        d = np.full(np.shape(x), np.inf)
        for stroke in LETTER_STROKES:
            for a, b in zip(stroke[:-1], stroke[1:]):
                d = np.minimum(d, _segment_distance(x, y, a, b))
        return (d - d.min()) / (d.max() - d.min())

    return RasterCovariate.from_function(Window.unit_square(), ncols, nrows, dist_to_letter)


def build_model_covariates(spec: ModelSpec, grf: GRFSpec) -> tuple[RasterCovariate, RasterCovariate]:
    """
    Returns (generating covariate, observed covariate). They differ only in Model 2,
    where the intensity is driven by Z1 + e1 but the estimator sees Z1.
    """
    if spec.covariate_source == "distance":
        d = distance_field(grf.ncols, grf.nrows)
        return d, d
    z1 = gaussian_random_field(grf, substream(grf.field_seed, STREAM_FIELD, 0))
    if spec.covariate_source == "grf":
        return z1, z1
    e1 = gaussian_random_field(grf, substream(grf.field_seed, STREAM_FIELD, 1))
    return z1.with_values(z1.values + e1.values), z1


# --- Models ---
def model_intensity(spec: ModelSpec, covariate: RasterCovariate) -> RasterCovariate:
    """exp(beta0 + beta1 Z), rescaled so the cell sum of lambda * area equals target_m."""
    with np.errstate(over="ignore"):
        lam = np.exp(spec.beta0 + spec.beta1 * covariate.values)
    if not np.all(np.isfinite(lam)):
        raise NumericError("model intensity overflows: non-finite exponentials")
    lam *= spec.target_m / (lam.sum() * covariate.cell_area)
    return covariate.with_values(lam)


def simulate_poisson(
    intensity: RasterCovariate,
    seed: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> PointPattern:
    """Lewis-Shedler thinning of a dominating homogeneous process."""
    if np.any(intensity.values < 0):
        raise ParameterError("intensity must be non-negative")
    rng = rng if rng is not None else np.random.default_rng(seed)
    w = intensity.window
    lam_max = float(intensity.values.max())
    if lam_max <= 0:
        return PointPattern(np.zeros((0, 2)), w)
    n_dom = int(rng.poisson(lam_max * w.area))
    xs = w.xmin + (w.xmax - w.xmin) * rng.random(n_dom)
    ys = w.ymin + (w.ymax - w.ymin) * rng.random(n_dom)
    pts = np.column_stack([xs, ys])
    keep = rng.random(n_dom) * lam_max < eval_covariate_many(intensity, pts)
    return PointPattern(pts[keep], w)


# --- Error criteria ---
def ise_rel(lambda_hat: Union[IntensityEstimate, RasterCovariate], lambda_true: RasterCovariate) -> float:
    """Midpoint-rule integral over W of ((lambda_hat - lambda) / lambda)^2."""
    est = lambda_hat.raster if isinstance(lambda_hat, IntensityEstimate) else lambda_hat
    if est.values.shape != lambda_true.values.shape or est.window != lambda_true.window:
        raise ParameterError("estimate and true intensity rasters must share a grid")
    if np.any(lambda_true.values <= 0):
        raise ParameterError("true intensity must be positive on every cell")
    rel = (est.values - lambda_true.values) / lambda_true.values
    return float(np.sum(rel * rel) * lambda_true.cell_area)


def true_relative_density(
    intensity: RasterCovariate,
    observed: RasterCovariate,
    dist: CovariateDistribution,
) -> np.ndarray:
    """
    Density on dist.z_grid of the observed covariate at events of the true process,
    smoothed with the g* bandwidth. Equals rho g* / m when lambda = rho(observed).
    """
    if intensity.values.shape != observed.values.shape:
        raise ParameterError("intensity and observed covariate rasters must share a grid")
    if not dist.smoothing_bandwidth > 0:
        raise ParameterError("distribution carries no smoothing bandwidth")
    f = smoothed_measure(observed.values, intensity.values * intensity.cell_area, dist.z_grid, dist.smoothing_bandwidth)
    return f / simpson(f, dist.z_grid)
