"""Standard-normal primitives shared by every module.

One erf-based implementation of the normal CDF (and one inverse) for the whole
package, so that classification probabilities, learning functions and the
orthant machinery are all consistent to machine precision.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtr, ndtri

SQRT_2PI = float(np.sqrt(2.0 * np.pi))
INV_SQRT_2PI = 1.0 / SQRT_2PI


def norm_cdf(x):
    """Phi(x), erf-based, full relative precision in both tails."""
    return ndtr(x)


def norm_pdf(x):
    """phi(x) = exp(-x^2/2) / sqrt(2 pi)."""
    x = np.asarray(x, dtype=float)
    out = INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return out if out.ndim else float(out)


def norm_ppf(q):
    """Inverse of Phi, used for inverse-CDF sampling."""
    return ndtri(q)
