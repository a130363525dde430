"""covkern: covariate-based kernel intensity estimation for spatial Poisson processes."""

__version__ = "0.1.0"
