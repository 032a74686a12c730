"""Robust sparse linear regression by response conditioning.

For (X, y) with y ~ N(x'beta, sigma^2), the law of X given y = a is
N((a / sigma_y^2) beta, I - beta beta' / sigma_y^2) with
sigma_y^2 = sigma^2 + ||beta||^2: an almost isotropic Gaussian whose mean
is a known rescaling of beta.  So: robustly estimate sigma_y^2 from the
responses, keep the samples whose response falls in a thin random
interval around a random center a, run the sparse mean estimator on the
retained x's, and undo the rescaling.

The center is drawn away from zero (|a| >= 0.1 sigma_y) because the
recombination divides by it.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .contamination import Dataset
from .errors import EmptySliceError, ParameterError
from .mean_estimation import MeanConfig, robust_sparse_mean
from .pca import SliceInfo, robust_variance_1d
from .rng import ALG_STREAM, stream
from .sparse_linalg import truncate_top_k


@dataclass
class RegressionConfig:
    epsilon: float
    k: int
    sigma: float | None = None             # report normalization only
    ell_divisor: float | None = None       # default log(1/epsilon)
    mean_config: MeanConfig | None = None
    seed: int = 0
    alpha_exclusion_frac: float = 0.1
    max_alpha_retries: int = 5

    def __post_init__(self) -> None:
        if not 0.0 < self.epsilon <= 0.2:
            raise ParameterError("epsilon outside (0, 0.2]")
        if self.k < 1:
            raise ParameterError("k must be >= 1")

    def resolved_ell_divisor(self) -> float:
        if self.ell_divisor is not None:
            return self.ell_divisor
        return np.log(1.0 / self.epsilon)


@dataclass
class RegressionRunTrace:
    sigma_y_sq: float = 0.0
    slice_info: SliceInfo | None = None
    inner_trace: object = None
    alpha_draws: int = 0
    warnings: list[str] = field(default_factory=list)
    wall_time: float = 0.0


def robust_sigma_y(ys: np.ndarray, epsilon: float) -> float:
    """Trimmed estimate of sigma_y^2 = sigma^2 + ||beta||^2 from the
    response marginal (which is N(0, sigma_y^2) for inliers)."""
    return robust_variance_1d(ys, epsilon)


def regression_conditional_oracle(beta: np.ndarray, sigma: float,
                                  alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Analytic law of X given y = alpha: N((alpha/sigma_y^2) beta,
    I - beta beta' / sigma_y^2)."""
    if sigma <= 0.0:
        raise ParameterError("sigma must be positive")
    beta = np.asarray(beta, dtype=float).ravel()
    sig_y2 = sigma * sigma + float(beta @ beta)
    mu = (alpha / sig_y2) * beta
    cov = np.eye(beta.size) - np.outer(beta, beta) / sig_y2
    return mu, cov


def robust_sparse_regression(dataset, config: RegressionConfig,
                             response=None, labels=None):
    """Estimate a k-sparse regressor from eps-corrupted (x, y) pairs.

    Accepts a regression Dataset or an (X, y) pair.  Returns
    (beta_hat, trace).
    """
    t0 = time.time()
    if isinstance(dataset, Dataset):
        x = np.asarray(dataset.samples)
        y = dataset.response if response is None else response
        labels = dataset.labels if labels is None else labels
    else:
        x = np.asarray(dataset)
        y = response
    if y is None:
        raise ParameterError("regression needs responses")
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.size != x.shape[0]:
        raise ParameterError("response length mismatch")

    eps, k = config.epsilon, config.k
    trace = RegressionRunTrace()
    sig_y2 = robust_sigma_y(y, eps)
    trace.sigma_y_sq = sig_y2
    sig_y = np.sqrt(sig_y2)
    ell = sig_y / config.resolved_ell_divisor()

    inner_cfg = config.mean_config
    if inner_cfg is None:
        inner_cfg = MeanConfig(epsilon=eps, k=min(k, x.shape[1]))

    rng = stream(config.seed, ALG_STREAM + 2)
    mask = None
    alpha = 0.0
    for attempt in range(config.max_alpha_retries):
        mag = rng.uniform(config.alpha_exclusion_frac * sig_y, sig_y)
        alpha = float(mag if rng.random() < 0.5 else -mag)
        trace.alpha_draws = attempt + 1
        cand = np.abs(y - alpha) <= ell
        if int(cand.sum()) >= inner_cfg.n_floor:
            mask = cand
            break
    if mask is None:
        raise EmptySliceError(
            f"no usable response slice after {config.max_alpha_retries} draws")
    retained = int(mask.sum())
    out_frac = float(np.asarray(labels)[mask].mean()) if labels is not None else None
    trace.slice_info = SliceInfo(alpha=alpha, ell=ell, retained=retained,
                                 retained_fraction=retained / y.size,
                                 outlier_fraction=out_frac, mask=mask)

    inner_labels = np.asarray(labels)[mask] if labels is not None else None
    mu_hat, inner_trace = robust_sparse_mean(x[mask], inner_cfg,
                                             labels=inner_labels)
    trace.inner_trace = inner_trace

    beta_hat = (sig_y2 / alpha) * mu_hat
    beta_hat = truncate_top_k(beta_hat, min(k, x.shape[1]))
    trace.wall_time = time.time() - t0
    return beta_hat, trace
