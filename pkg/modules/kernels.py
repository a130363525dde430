# modules/kernels.py
"""
Univariate smoothing kernels.

A kernel is evaluated on standardised distances u; callers form the scaled kernel
K_h(t) = K(t / h) / h themselves (see `scaled`).
"""

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from modules.errors import ParameterError


@dataclass(frozen=True)
class Kernel:
    family: str
    mu2: float
    roughness: float
    support_radius: float

    def __call__(self, u):
        return kernel_eval(self, u)

    def scaled(self, t, h: float):
        return kernel_eval(self, np.asarray(t) / h) / h

    def second_derivative(self, u):
        """K''(u); only the gaussian has a usable closed form."""
        u = np.asarray(u, dtype=float)
        if self.family == "gaussian":
            return (u * u - 1.0) * norm.pdf(u)
        raise ParameterError(f"No closed-form second derivative for the {self.family} kernel")


GAUSSIAN = Kernel("gaussian", mu2=1.0, roughness=1.0 / (2.0 * np.sqrt(np.pi)), support_radius=np.inf)
EPANECHNIKOV = Kernel("epanechnikov", mu2=0.2, roughness=0.6, support_radius=1.0)

KERNELS = {
    "gaussian": GAUSSIAN,
    "epanechnikov": EPANECHNIKOV,
}


def get_kernel(name: str) -> Kernel:
    try:
        return KERNELS[name]
    except KeyError:
        raise ParameterError(f"Unsupported kernel: {name}. Choose from {sorted(KERNELS)}")


def kernel_eval(k: Kernel, u):
    u = np.asarray(u, dtype=float)
    if k.family == "gaussian":
        return norm.pdf(u)
    if k.family == "epanechnikov":
        return 0.75 * np.clip(1.0 - u * u, 0.0, None)
    raise ParameterError(f"Unsupported kernel family: {k.family}")


def kernel_constants(k: Kernel) -> tuple[float, float]:
    return k.mu2, k.roughness


def silverman_rule(values) -> float:
    """0.9 * min(sd, IQR / 1.34) * n^(-1/5); falls back to sd when the IQR vanishes."""
    x = np.asarray(values, dtype=float).ravel()
    n = x.size
    if n < 2:
        raise ParameterError(f"Silverman's rule needs at least 2 values, got {n}")
    sd = float(np.std(x, ddof=1))
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34)
    if spread <= 0:
        spread = sd
    if spread <= 0:
        raise ParameterError("Silverman's rule undefined: values have zero spread")
    return 0.9 * spread * n ** (-0.2)
