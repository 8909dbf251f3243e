"""Geman-McClure robust penalty, shared by the reprojection losses.

For a residual r with u = |r|^2 the penalty is

    rho(r) = sigma^2 * u / (u + sigma^2)

which grows quadratically near zero and saturates at sigma^2, suppressing
outlier detections.  ``d rho / d u = sigma^4 / (u + sigma^2)^2`` doubles as
the iteratively-reweighted-least-squares weight.
"""

import numpy as np


def geman_values(sq_norms: np.ndarray, sigma: float) -> np.ndarray:
    sq_norms = np.asarray(sq_norms, dtype=float)
    return sigma * sigma * sq_norms / (sq_norms + sigma * sigma)


def geman_weights(sq_norms: np.ndarray, sigma: float) -> np.ndarray:
    """Derivative of the penalty w.r.t. the squared residual norm."""
    sq_norms = np.asarray(sq_norms, dtype=float)
    s2 = sigma * sigma
    return s2 * s2 / (sq_norms + s2) ** 2
