# modules/poisson.py

import numpy as np
from scipy.special import gammaln

from modules.errors import ParameterError

SERIES_REL_TOL = 1e-14


def poisson_reciprocal_moment(m: float) -> float:
    """
    A(m) = E[(1/N) 1{N != 0}] for N ~ Poisson(m).

    Sums e^-m m^n / (n n!) in log space, stopping past the mode once a term drops
    below 1e-14 of the partial sum.
    """
    if not m > 0:
        raise ParameterError(f"A(m) needs m > 0, got {m}")
    n_max = int(m + 40.0 * np.sqrt(m) + 60)
    n = np.arange(1, n_max + 1, dtype=float)
    terms = np.exp(-m + n * np.log(m) - np.log(n) - gammaln(n + 1.0))
    partial = np.cumsum(terms)
    mode = int(np.argmax(terms))
    small = np.flatnonzero(terms[mode:] < SERIES_REL_TOL * partial[mode:])
    stop = mode + int(small[0]) if small.size else n_max - 1
    return float(partial[stop])
