"""Reference estimators the benchmark compares against.

``single_direction_mean`` is the preprocessing filter used as a complete
estimator: filter along one (F,2k,2k) direction at a time until the norm
drops below the eps log^2(1/eps) threshold, then truncate the retained
mean to k coordinates.  Its error on the evasive instance carries the
extra sqrt(log(1/eps)) factor the multidirectional estimator removes.

The classical (non-robust) counterparts are the plain empirical mean, the
top eigenvector of the sample covariance, ordinary least squares, and the
coordinatewise median.
"""

from __future__ import annotations

import numpy as np

from .data import iter_sample_chunks, num_rows
from .filtering import weighted_moments
from .mean_estimation import preprocess
from .sparse_linalg import truncate_top_k


def single_direction_mean(samples, epsilon: float, k: int,
                          c_pre: float = 24.0) -> np.ndarray:
    keep, report = preprocess(samples, epsilon, k, c_pre=c_pre)
    return truncate_top_k(report.mu, k)


def empirical_mean(samples) -> np.ndarray:
    n = num_rows(samples)
    return weighted_moments(samples, np.ones(n)).mu


def empirical_pca(samples) -> np.ndarray:
    n = num_rows(samples)
    mom = weighted_moments(samples, np.ones(n))
    evals, evecs = np.linalg.eigh(mom.sigma)
    v = evecs[:, -1]
    lead = int(np.argmax(np.abs(v)))
    return v if v[lead] >= 0 else -v


def ols(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    beta, *_ = np.linalg.lstsq(np.asarray(x, dtype=np.float64),
                               np.asarray(y, dtype=np.float64), rcond=None)
    return beta


def coordinate_median(samples) -> np.ndarray:
    parts = [np.asarray(b, dtype=np.float64)
             for _, _, b in iter_sample_chunks(samples)]
    return np.median(np.concatenate(parts, axis=0), axis=0)
