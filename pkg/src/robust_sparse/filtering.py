"""Weighted moments and the multiplicative down-weighting filter.

The filter receives nonnegative per-sample scores and, while the weighted
average score exceeds s*beta, multiplies every weight by
(1 - score / max active score).  The point attaining the maximum is
zeroed each pass, so the iteration count is small in practice; the hard
cap is ceil(max_score / (e*s)) passes.  When the weighted inlier score
mass is below s, the filter provably removes (beta-1)/eps times more
outlier mass than inlier mass; tests assert that accounting on labeled
instances.

``weighted_moments`` accepts either an ndarray or any chunked sample
source (see data.py) and accumulates in float64 regardless of the input
dtype.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import iter_sample_chunks, num_rows
from .errors import DegenerateWeightsError

WEIGHT_SNAP = 1e-12


@dataclass
class WeightVector:
    """Per-sample weights in [0, 1].

    ``passes`` records how many multiplicative passes the filter call that
    produced this vector applied (0 for hand-built vectors).
    """

    w: np.ndarray
    passes: int = 0

    def __post_init__(self) -> None:
        self.w = np.asarray(self.w, dtype=float)
        if self.w.ndim != 1:
            raise ValueError("weights must be a 1-d array")
        if self.w.size and (self.w.min() < 0.0 or self.w.max() > 1.0):
            raise ValueError("weights must lie in [0, 1]")

    @property
    def total_mass(self) -> float:
        return float(self.w.sum()) / self.w.size

    def __len__(self) -> int:
        return self.w.size


def as_weights(w) -> WeightVector:
    if isinstance(w, WeightVector):
        return w
    return WeightVector(np.asarray(w, dtype=float))


@dataclass
class WeightedMoments:
    mu: np.ndarray
    sigma: np.ndarray
    mass: float


def weighted_moments(samples, w, return_row_norms: bool = False):
    """Weighted mean and covariance: mu = sum(w_i x_i)/sum(w_i) and
    sigma = sum(w_i (x_i-mu)(x_i-mu)')/sum(w_i).

    Accumulates raw second moments in float64 and applies the rank-one
    mean correction, so the pass over the data happens once (important
    for virtual sample sources).  With ``return_row_norms`` the per-row
    squared euclidean norms come back as a bonus of the same pass.
    """
    wv = as_weights(w)
    n = num_rows(samples)
    if len(wv) != n:
        raise ValueError(f"weight length {len(wv)} != sample count {n}")
    wsum = float(wv.w.sum())
    if wsum <= 0.0:
        raise DegenerateWeightsError("all-zero weights")

    d = None
    s1 = None
    s2 = None
    norms = np.empty(n) if return_row_norms else None
    for lo, hi, x in iter_sample_chunks(samples):
        x64 = np.asarray(x, dtype=np.float64) if x.dtype != np.float64 else x
        wc = wv.w[lo:hi]
        if d is None:
            d = x.shape[1]
            s1 = np.zeros(d)
            s2 = np.zeros((d, d))
        s1 += wc @ x64
        s2 += (x64 * wc[:, None]).T @ x64
        if return_row_norms:
            norms[lo:hi] = np.einsum("ij,ij->i", x64, x64)
    mu = s1 / wsum
    sigma = s2 / wsum - np.outer(mu, mu)
    sigma = 0.5 * (sigma + sigma.T)
    mom = WeightedMoments(mu=mu, sigma=sigma, mass=wsum / n)
    if return_row_norms:
        return mom, norms
    return mom


def downweight_filter(w, scores: np.ndarray, s: float, beta: float) -> WeightVector:
    """Multiplicative down-weighting against nonnegative scores.

    Runs at most ceil(max_score/(e*s)) passes; each pass rescales every
    weight by (1 - score/max_active_score) while the weighted mean score
    exceeds s*beta.  The max is recomputed over currently positive-weight
    points each pass.  Returns the input weights unchanged when the mean
    score is already at or below s*beta.
    """
    wv = as_weights(w)
    tau = np.asarray(scores, dtype=float).ravel()
    if tau.size != len(wv):
        raise ValueError("scores and weights must have equal length")
    if tau.size and tau.min() < 0.0:
        raise ValueError("scores must be nonnegative")
    if not s > 0.0:
        raise ValueError("threshold s must be positive")
    if not beta > 1.0:
        raise ValueError("beta must exceed 1")

    n = tau.size
    wp = wv.w.copy()
    if n == 0 or float(wp @ tau) / n <= s * beta:
        return WeightVector(wp, passes=0)

    max_passes = int(np.ceil(float(tau.max()) / (np.e * s)))
    passes = 0
    for _ in range(max_passes):
        if float(wp @ tau) / n <= s * beta:
            break
        active = wp > 0.0
        if not active.any():
            break
        tau_max = float(tau[active].max())
        if tau_max <= 0.0:
            break
        wp *= np.maximum(1.0 - tau / tau_max, 0.0)
        wp[wp < WEIGHT_SNAP] = 0.0
        passes += 1
    return WeightVector(wp, passes=passes)
