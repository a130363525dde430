# modules/geom.py
"""Windows, covariate rasters, point patterns and covariate lookup at arbitrary points."""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from modules.errors import DomainError, ParameterError


def _frozen(array, dtype=float) -> np.ndarray:
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Window:
    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def __post_init__(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ParameterError(
                f"Window needs xmax > xmin and ymax > ymin, got "
                f"[{self.xmin}, {self.xmax}] x [{self.ymin}, {self.ymax}]"
            )

    @classmethod
    def unit_square(cls) -> "Window":
        return cls(0.0, 1.0, 0.0, 1.0)

    @property
    def area(self) -> float:
        return (self.xmax - self.xmin) * (self.ymax - self.ymin)

    def contains(self, x, y) -> np.ndarray:
        """Closed-region membership test, vectorised over x and y."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return (x >= self.xmin) & (x <= self.xmax) & (y >= self.ymin) & (y <= self.ymax)


@dataclass(frozen=True)
class RasterCovariate:
    """
    Gridded covariate over a rectangular window.

    `values` has shape (nrows, ncols) with row 0 at the top (largest y), matching the
    ASCII-grid file layout.
    """

    window: Window
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ParameterError(f"Raster values must be a non-empty 2-D grid, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ParameterError("Raster contains non-finite cells")
        object.__setattr__(self, "values", _frozen(values))

    @classmethod
    def from_function(cls, window: Window, ncols: int, nrows: int, func: Callable) -> "RasterCovariate":
        """Sample func(x, y) at the cell centres of an ncols x nrows grid."""
        if ncols < 1 or nrows < 1:
            raise ParameterError(f"Raster dims must be positive, got {ncols}x{nrows}")
        blank = cls(window, np.zeros((nrows, ncols)))
        xc, yc = blank.cell_centers()
        X, Y = np.meshgrid(xc, yc)
        return cls(window, np.broadcast_to(func(X, Y), (nrows, ncols)))

    @property
    def nrows(self) -> int:
        return self.values.shape[0]

    @property
    def ncols(self) -> int:
        return self.values.shape[1]

    @property
    def cell_width(self) -> float:
        return (self.window.xmax - self.window.xmin) / self.ncols

    @property
    def cell_height(self) -> float:
        return (self.window.ymax - self.window.ymin) / self.nrows

    @property
    def cell_area(self) -> float:
        return self.cell_width * self.cell_height

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-centre x (left to right) and y (top row first)."""
        xc = self.window.xmin + (np.arange(self.ncols) + 0.5) * self.cell_width
        yc = self.window.ymax - (np.arange(self.nrows) + 0.5) * self.cell_height
        return xc, yc

    def with_values(self, values) -> "RasterCovariate":
        return RasterCovariate(self.window, values)


@dataclass(frozen=True)
class PointPattern:
    points: np.ndarray
    window: Window
    z_values: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(pts)):
            raise ParameterError("Point pattern contains non-finite coordinates")
        inside = self.window.contains(pts[:, 0], pts[:, 1])
        if not np.all(inside):
            offenders = np.flatnonzero(~inside)
            listed = ", ".join(f"#{i} ({pts[i, 0]:g}, {pts[i, 1]:g})" for i in offenders[:10])
            more = f" and {len(offenders) - 10} more" if len(offenders) > 10 else ""
            raise DomainError(f"{len(offenders)} point(s) outside the window: {listed}{more}")
        object.__setattr__(self, "points", _frozen(pts))
        if self.z_values is not None:
            z = np.asarray(self.z_values, dtype=float).ravel()
            if z.shape[0] != pts.shape[0]:
                raise ParameterError(f"z_values has length {z.shape[0]}, expected {pts.shape[0]}")
            object.__setattr__(self, "z_values", _frozen(z))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def x(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.points[:, 1]

    def with_covariate(self, raster: RasterCovariate) -> "PointPattern":
        """Return a copy with Z_i = Z(X_i) cached."""
        return PointPattern(self.points, self.window, eval_covariate_many(raster, self.points))


# --- Covariate lookup ---
def _axis_weights(coord: np.ndarray, origin: float, step: float, count: int):
    # fractional index relative to cell centres, clamped to the centre hull
    frac = np.clip((coord - origin) / step - 0.5, 0.0, count - 1)
    lo = np.minimum(np.floor(frac).astype(int), max(count - 2, 0))
    hi = np.minimum(lo + 1, count - 1)
    return lo, hi, frac - lo


def eval_covariate_many(raster: RasterCovariate, points) -> np.ndarray:
    """
    Bilinear interpolation between the four surrounding cell centres.

    Points in the half-cell margin take the value of the nearest centre along the
    clamped axis. Raises DomainError for points outside the window.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    w = raster.window
    inside = w.contains(pts[:, 0], pts[:, 1])
    if not np.all(inside):
        bad = pts[~inside][0]
        raise DomainError(f"Point ({bad[0]:g}, {bad[1]:g}) lies outside the raster window")
    if pts.shape[0] == 0:
        return np.zeros(0)

    # flip so row index grows with y
    grid = raster.values[::-1]
    j0, j1, tx = _axis_weights(pts[:, 0], w.xmin, raster.cell_width, raster.ncols)
    i0, i1, ty = _axis_weights(pts[:, 1], w.ymin, raster.cell_height, raster.nrows)
    bottom = grid[i0, j0] * (1 - tx) + grid[i0, j1] * tx
    top = grid[i1, j0] * (1 - tx) + grid[i1, j1] * tx
    return bottom * (1 - ty) + top * ty


def eval_covariate(raster: RasterCovariate, p) -> float:
    return float(eval_covariate_many(raster, np.asarray(p, dtype=float).reshape(1, 2))[0])
