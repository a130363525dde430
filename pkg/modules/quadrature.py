# modules/quadrature.py

import numpy as np
from scipy.integrate import cumulative_trapezoid, simpson as _simpson, trapezoid


def simpson(y, x) -> float:
    """
    Composite Simpson integral of samples y on grid x.

    An even number of samples integrates the first n-1 with Simpson and adds the last
    panel by the trapezoid rule.
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 2:
        return 0.0
    if n == 2:
        return float(trapezoid(y, x))
    if n % 2 == 1:
        return float(_simpson(y, x=x))
    return float(_simpson(y[:-1], x=x[:-1]) + trapezoid(y[-2:], x[-2:]))


def running_integral(y, x) -> np.ndarray:
    return cumulative_trapezoid(np.asarray(y, dtype=float), np.asarray(x, dtype=float), initial=0.0)


def second_difference(y, step: float) -> np.ndarray:
    """Three-point central second difference; end values copy their neighbours."""
    y = np.asarray(y, dtype=float)
    d2 = np.empty_like(y)
    d2[1:-1] = (y[2:] - 2.0 * y[1:-1] + y[:-2]) / step**2
    d2[0], d2[-1] = d2[1], d2[-2]
    return d2


def simpson_rows(y, x) -> np.ndarray:
    """Row-wise `simpson` of a 2-D array sampled on grid x along its last axis."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    x = np.asarray(x, dtype=float)
    if x.size < 3:
        return trapezoid(y, x, axis=-1)
    if x.size % 2 == 1:
        return _simpson(y, x=x, axis=-1)
    return _simpson(y[:, :-1], x=x[:-1], axis=-1) + trapezoid(y[:, -2:], x[-2:], axis=-1)
