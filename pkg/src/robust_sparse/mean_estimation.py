"""Robust sparse mean estimation.

Pipeline: a gross-outlier preprocessing filter, a naive distance prune,
then the main loop: decompose the weighted covariance surplus into r
greedy disjoint-support maximizers, and while their average score stays
above C*eps, down-weight samples whose composite quadratic score is
extreme.  On exit the coordinates touched by the maximizers form the set
H; a dense robust estimator run on held-out samples supplies the mean on
H and the weighted empirical mean supplies it on the complement.

The two halves never mix: the input is split up front into a working part
(preprocess, prune, filter loop, complement mean) and a fresh holdout
part used only by the dense estimator on H.

Everything operates chunk-by-chunk over sample sources, so the same code
runs on in-memory matrices and on virtual datasets with billions of
entries.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .contamination import Dataset
from .data import (gather_rows, head_rows, iter_sample_chunks, num_cols,
                   num_rows, split_rows)
from .filtering import (DegenerateWeightsError, WeightVector, downweight_filter,
                        weighted_moments)
from .sparse_linalg import (ParameterError, SparseDirectionSet, fkk_norm,
                            greedy_decomposition, sparse_norm_2k, truncate_top_k)

PREPROCESS_SCORE_THRESHOLD = 100.0  # times log(1/eps)


@dataclass
class MeanConfig:
    """Tuning constants for the sparse mean estimator.

    The defaults follow the calibrated values frozen by the acceptance
    suite; epsilon above 0.2 is refused unless explicitly allowed.
    """

    epsilon: float
    k: int
    c_stop: float = 10.0
    r_override: int | None = None
    score_threshold_mult: float = 200.0
    beta: float | None = None              # default log(1/epsilon)
    s: float | None = None                 # default epsilon
    split_fraction: float = 0.5
    max_outer_iters: int | None = None
    n_floor: int = 100
    preprocess: bool = True
    c_pre: float = 24.0
    truncate_final: bool = True
    allow_large_epsilon: bool = False
    dense_c_stop: float = 1.0
    dense_trim_min: float = 1.5
    dense_gather_budget: float = 6e8   # max elements gathered for the dense stage

    def __post_init__(self) -> None:
        if not 0.0 < self.epsilon < 0.5:
            raise ParameterError(f"epsilon={self.epsilon} outside (0, 0.5)")
        if self.epsilon > 0.2 and not self.allow_large_epsilon:
            raise ParameterError(
                "epsilon > 0.2 needs allow_large_epsilon=True")
        if self.k < 1:
            raise ParameterError("k must be >= 1")
        if not 0.0 < self.split_fraction < 1.0:
            raise ParameterError("split_fraction must be in (0, 1)")

    @property
    def r(self) -> int:
        if self.r_override is not None:
            return max(1, self.r_override)
        return max(1, int(np.ceil(np.log(1.0 / self.epsilon))))

    @property
    def log_term(self) -> float:
        return float(np.log(1.0 / self.epsilon))

    def resolved_beta(self) -> float:
        return self.beta if self.beta is not None else max(self.log_term, 1.0 + 1e-6)

    def resolved_s(self) -> float:
        return self.s if self.s is not None else self.epsilon


@dataclass
class MeanIterRecord:
    g_value: float
    h_values: list[float]
    mass_removed: float
    inlier_mass_removed: float | None
    outlier_mass_removed: float | None
    filter_passes: int


@dataclass
class MeanRunTrace:
    iterations: list[MeanIterRecord] = field(default_factory=list)
    H: list[int] = field(default_factory=list)
    mu1: np.ndarray | None = None
    mu2: np.ndarray | None = None
    warnings: list[str] = field(default_factory=list)
    exit_via_condition: bool = False
    exit_fkk_residual: float | None = None
    preprocess_report: "PreprocessReport | None" = None
    prune_kept: int = 0
    final_mass: float = 1.0
    wall_time: float = 0.0


@dataclass
class PreprocessReport:
    rounds: int
    removed: int
    final_value: float
    threshold: float
    warning: str | None
    mu: np.ndarray
    sigma: np.ndarray
    center0: np.ndarray | None = None
    dist0: np.ndarray | None = None      # per-sample distance from center0
    moments: object = None               # moments of the kept set


def _support_quadratic_scores(samples, mu, matrix, support, out, keep=None):
    """p(x) = (x-mu)' M (x-mu) - tr(M) written into ``out``; M is zero
    outside support x support, so only those columns are touched."""
    cols = np.asarray(support, dtype=int)
    block = matrix[np.ix_(cols, cols)]
    center = mu[cols]
    tr = float(np.trace(block))
    for lo, hi, x in iter_sample_chunks(samples, cols=cols):
        c = np.asarray(x, dtype=np.float64) - center
        out[lo:hi] = np.einsum("ij,jk,ik->i", c, block, c) - tr
        if keep is not None:
            out[lo:hi][~keep[lo:hi]] = 0.0
    return out


MEDIAN_HEAD_ROWS = 500_000


def preprocess(samples, epsilon: float, k: int, c_pre: float = 24.0,
               max_rounds: int = 50):
    """Single-direction gross-outlier removal.

    First drops points farther than 10 sqrt(d) log(d/eps) from the
    coordinatewise median (of a leading subsample), which keeps the
    moments meaningful under gross corruption.  Then, while the
    (F,2k,2k) norm of the covariance minus identity exceeds
    c_pre * eps * log^2(1/eps), scores every point by the quadratic along
    the maximizing direction and hard-removes scores above
    100 log(1/eps).  Returns (keep mask, report); the mask plays the role
    of the retained subset.
    """
    n = num_rows(samples)
    if n == 0:
        raise ParameterError("empty input")
    d = num_cols(samples)
    keep = np.ones(n, dtype=bool)
    if epsilon <= 0.0:
        mom = weighted_moments(samples, keep.astype(float))
        return keep, PreprocessReport(0, 0, 0.0, 0.0, None, mom.mu, mom.sigma)

    center0 = np.median(np.asarray(head_rows(samples, min(n, MEDIAN_HEAD_ROWS)),
                                   dtype=np.float64), axis=0)
    w0, mom, dist0 = _prune_and_moments(samples, np.ones(n), center0,
                                        prune_radius(d, epsilon) ** 2,
                                        want_dist=True)
    keep = w0.w > 0.0

    L = np.log(1.0 / epsilon)
    threshold = c_pre * epsilon * L * L
    sparsity = min(2 * k, d)
    scores = np.empty(n)
    warning = None
    value = 0.0
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        value, direction = fkk_norm(mom.sigma - np.eye(d), sparsity)
        if value <= threshold:
            break
        support = sorted(direction.support())
        _support_quadratic_scores(samples, mom.mu, direction.matrix, support,
                                  scores)
        rm = keep & (scores > PREPROCESS_SCORE_THRESHOLD * L)
        if not rm.any():
            warning = "stalled: norm above threshold but no extreme scores"
            break
        keep[rm] = False
        mom = weighted_moments(samples, keep.astype(float))
    else:
        warning = "round cap reached"
    report = PreprocessReport(rounds=rounds, removed=int(n - keep.sum()),
                              final_value=value, threshold=threshold,
                              warning=warning, mu=mom.mu, sigma=mom.sigma,
                              center0=center0, dist0=dist0, moments=mom)
    return keep, report


def prune_radius(d: int, epsilon: float) -> float:
    if epsilon <= 0.0:
        return np.inf
    return 10.0 * np.sqrt(d) * np.log(d / epsilon)


def naive_prune(samples, epsilon: float, mu_ref: np.ndarray | None = None) -> WeightVector:
    """0/1 weights keeping points within 10 sqrt(d) log(d/eps) of mu_ref
    (the post-preprocessing empirical mean when run inside the pipeline)."""
    n = num_rows(samples)
    if n == 0:
        raise ParameterError("empty input")
    d = num_cols(samples)
    if mu_ref is None:
        mu_ref = weighted_moments(samples, np.ones(n)).mu
    radius_sq = prune_radius(d, epsilon) ** 2
    w = np.zeros(n)
    for lo, hi, x in iter_sample_chunks(samples):
        c = np.asarray(x, dtype=np.float64) - mu_ref
        w[lo:hi] = (np.einsum("ij,ij->i", c, c) <= radius_sq).astype(float)
    return WeightVector(w)


def _prune_and_moments(samples, keep, mu_ref, radius_sq, want_dist=False):
    """Fused pass: build prune weights and accumulate their moments.
    Optionally also returns the per-sample distances from mu_ref."""
    n = num_rows(samples)
    d = mu_ref.size
    w = np.zeros(n)
    dist = np.empty(n) if want_dist else None
    s1 = np.zeros(d)
    s2 = np.zeros((d, d))
    for lo, hi, x in iter_sample_chunks(samples):
        x64 = np.asarray(x, dtype=np.float64)
        c = x64 - mu_ref
        dsq = np.einsum("ij,ij->i", c, c)
        if want_dist:
            dist[lo:hi] = np.sqrt(dsq)
        wc = (dsq <= radius_sq).astype(float)
        wc *= keep[lo:hi]
        w[lo:hi] = wc
        s1 += wc @ x64
        s2 += (x64 * wc[:, None]).T @ x64
    wsum = float(w.sum())
    if wsum <= 0.0:
        raise DegenerateWeightsError("pruning removed every sample")
    mu = s1 / wsum
    sigma = s2 / wsum - np.outer(mu, mu)
    from .filtering import WeightedMoments
    mom = WeightedMoments(mu=mu, sigma=0.5 * (sigma + sigma.T), mass=wsum / n)
    if want_dist:
        return WeightVector(w), mom, dist
    return WeightVector(w), mom


def _masked_moments(y: np.ndarray, keep: np.ndarray, block: int = 262144):
    """Mean and covariance of the kept rows without copying the matrix."""
    m, d = y.shape
    s1 = np.zeros(d)
    s2 = np.zeros((d, d))
    count = 0
    for lo in range(0, m, block):
        yb = y[lo:lo + block][keep[lo:lo + block]]
        if yb.size == 0:
            continue
        yb64 = yb.astype(np.float64, copy=False)
        s1 += yb64.sum(axis=0)
        s2 += yb64.T @ yb64
        count += yb.shape[0]
    mu = s1 / count
    cov = s2 / count - np.outer(mu, mu)
    return mu, 0.5 * (cov + cov.T), count


def dense_robust_mean(samples: np.ndarray, epsilon: float, r: int | None = None,
                      c_stop: float = 1.0, trim_min: float = 1.5,
                      max_rounds: int = 60, noise_floor_mult: float = 1.1) -> np.ndarray:
    """Low-dimensional robust mean by eigenvalue-driven symmetric trimming.

    While the average of the top-r eigenvalues of the covariance surplus
    exceeds max(c_stop * eps, the Marchenko-Pastur sampling edge), project
    onto the top eigendirection, center at the median, and remove the
    2*eps most deviant tail (never trimming inside ``trim_min``).  The
    trim cuts are then re-applied symmetrically around the refined center,
    which removes the selection bias of cuts placed by contaminated
    rounds.  Clean data sits at the sampling edge and is returned
    untouched; stalled trimming exits rather than eating mass.  With
    eps <= 0 the plain mean comes back untouched.

    Works in the input dtype with float64 accumulators and never copies
    the full matrix, so multi-gigabyte float32 inputs stay in place.
    """
    y = np.asarray(samples)
    if y.ndim == 1:
        y = y[:, None]
    m, d = y.shape
    if m == 0:
        raise ParameterError("empty input")
    if epsilon <= 0.0 or m < 20 or d == 0:
        return y.mean(axis=0, dtype=np.float64)
    if r is None:
        r = max(1, int(np.ceil(np.log(1.0 / epsilon))))
    r = min(r, d)

    keep = np.ones(m, dtype=bool)
    floor_kept = max(20, int(0.2 * m))
    prev_stat = np.inf
    screens: list[tuple[np.ndarray, float]] = []
    for _ in range(max_rounds):
        mk = int(keep.sum())
        if mk < floor_kept:
            break
        mu, cov, _ = _masked_moments(y, keep)
        evals, evecs = np.linalg.eigh(cov - np.eye(d))
        top = np.maximum(evals[-r:], 0.0)
        stat = float(top.mean())
        ratio = d / mk
        mp_edge = 2.0 * np.sqrt(ratio) + ratio
        threshold = max(c_stop * epsilon, noise_floor_mult * mp_edge)
        if stat <= threshold or stat > 0.97 * prev_stat:
            break
        prev_stat = stat
        v1 = evecs[:, -1]
        t = y @ v1.astype(y.dtype) - float(mu @ v1)
        tk = t[keep]
        dev = np.abs(t - np.median(tk))
        cut = max(float(np.quantile(np.abs(tk - np.median(tk)),
                                    1.0 - 2.0 * epsilon)), trim_min)
        rm = keep & (dev >= cut)
        if not rm.any() or rm.sum() >= keep.sum():
            break
        screens.append((v1, cut))
        keep &= ~rm

    if screens:
        for _ in range(2):
            center = _masked_mean(y, keep)
            keep_new = np.ones(m, dtype=bool)
            for v1, cut in screens:
                t = y @ v1.astype(y.dtype) - float(center @ v1)
                keep_new &= np.abs(t) < cut
            if keep_new.sum() >= floor_kept:
                keep = keep_new

    return _masked_mean(y, keep)


def _masked_mean(y: np.ndarray, keep: np.ndarray, block: int = 262144) -> np.ndarray:
    s1 = np.zeros(y.shape[1])
    count = 0
    for lo in range(0, y.shape[0], block):
        yb = y[lo:lo + block][keep[lo:lo + block]]
        if yb.size:
            s1 += yb.sum(axis=0, dtype=np.float64)
            count += yb.shape[0]
    return s1 / count


@dataclass
class CertificateResult:
    applied: bool
    holds: bool
    lhs: float
    rhs: float


def certificate_check(moments, mu_true: np.ndarray, epsilon: float, alpha: float,
                      k: int, lam: float, inlier_mass: float | None = None,
                      c_cert: float = 10.0) -> CertificateResult:
    """Small weighted sparse-direction variance certifies a small (2,k)
    error of the weighted mean.  Skipped (applied=False) when the retained
    inlier mass precondition fails."""
    applied = inlier_mass is None or inlier_mass >= 1.0 - alpha
    lhs = sparse_norm_2k(np.asarray(moments.mu) - np.asarray(mu_true), k)
    la = np.log(1.0 / alpha) if alpha > 0 else 0.0
    rhs = c_cert * (alpha * np.sqrt(la) + np.sqrt(max(lam, 0.0) * epsilon)
                    + epsilon + np.sqrt(alpha * epsilon * la))
    holds = (not applied) or lhs <= rhs
    return CertificateResult(applied=applied, holds=holds, lhs=lhs, rhs=float(rhs))


def _unpack(dataset_or_samples, labels):
    if isinstance(dataset_or_samples, Dataset):
        ds = dataset_or_samples
        return ds.samples, ds.labels if labels is None else labels
    return dataset_or_samples, labels


def robust_sparse_mean(dataset_or_samples, config: MeanConfig, labels=None):
    """Estimate a k-sparse mean from eps-corrupted samples.

    Returns (mu_hat, trace).  ``labels``, when available (simulation),
    feed the per-iteration inlier/outlier mass ledger in the trace; they
    never influence the estimate.
    """
    t0 = time.time()
    samples, labels = _unpack(dataset_or_samples, labels)
    n = num_rows(samples)
    d = num_cols(samples)
    if n < config.n_floor:
        raise ParameterError(f"need at least {config.n_floor} samples, got {n}")

    work, hold = split_rows(samples, config.split_fraction)
    n_work = num_rows(work)
    labels_w = labels[:n_work] if labels is not None else None

    trace = MeanRunTrace()
    eps = config.epsilon
    r = config.r
    L = config.log_term

    # Gross outliers, then the distance prune around the filtered mean.
    # The stored distances from the preprocessing center decide membership
    # in the ball around the (nearby) post-preprocessing mean for almost
    # every point; only points within ||shift|| of the shell need an
    # exact second look, so the prune costs no extra data pass.
    radius = prune_radius(d, eps)
    if config.preprocess:
        keep, pre = preprocess(work, eps, config.k, c_pre=config.c_pre)
        trace.preprocess_report = pre
        if pre.warning:
            trace.warnings.append(f"preprocess: {pre.warning}")
        shift = float(np.linalg.norm(pre.mu - pre.center0))
        inside = pre.dist0 <= radius - shift
        outside = pre.dist0 > radius + shift
        undecided = ~(inside | outside)
        if undecided.any():
            rows = np.flatnonzero(undecided)
            exact = gather_rows(work, rows) - pre.mu
            inside[rows] = np.einsum("ij,ij->i", exact, exact) <= radius ** 2
        w_arr = (keep & inside).astype(float)
        if w_arr.sum() <= 0.0:
            raise DegenerateWeightsError("pruning removed every sample")
        w = WeightVector(w_arr)
        if np.array_equal(w_arr > 0.0, keep):
            mom = pre.moments
        else:
            mom = weighted_moments(work, w)
    else:
        keep = np.ones(n_work, dtype=bool)
        mu_ref = weighted_moments(work, keep.astype(float)).mu
        w, mom = _prune_and_moments(work, keep, mu_ref, radius ** 2)
    trace.prune_kept = int(w.w.sum())

    max_iters = config.max_outer_iters
    if max_iters is None:
        max_iters = int(np.clip(np.ceil(50.0 * d / (n_work * eps)), 100, 10 ** 6))

    score_gate = config.score_threshold_mult * L
    s_val = config.resolved_s()
    beta = config.resolved_beta()
    scores = np.empty(n_work)
    dec: SparseDirectionSet | None = None

    for _ in range(max_iters):
        dec = greedy_decomposition(mom.sigma - np.eye(d), config.k, r)
        if dec.r_produced == 0 or dec.g_value / r <= config.c_stop * eps:
            trace.exit_via_condition = True
            break
        support = dec.support_union()
        _support_quadratic_scores(work, mom.mu, dec.composite, support, scores)
        tau = np.where(scores > score_gate, scores, 0.0)
        tau = np.maximum(tau, 0.0)
        w_new = downweight_filter(w, tau, s=s_val, beta=beta)
        removed = w.w - w_new.w
        rec = MeanIterRecord(
            g_value=dec.g_value,
            h_values=dec.scores,
            mass_removed=float(removed.sum()) / n_work,
            inlier_mass_removed=(float(removed[~labels_w].sum()) / n_work
                                 if labels_w is not None else None),
            outlier_mass_removed=(float(removed[labels_w].sum()) / n_work
                                  if labels_w is not None else None),
            filter_passes=w_new.passes,
        )
        trace.iterations.append(rec)
        if rec.mass_removed <= 0.0:
            trace.warnings.append("filter stalled: no mass removed")
            break
        w = w_new
        mom = weighted_moments(work, w)
    else:
        trace.warnings.append("outer iteration cap reached")

    trace.final_mass = w.total_mass
    H = dec.support_union() if dec is not None else []
    trace.H = H
    if trace.exit_via_condition and dec is not None and dec.r_produced > 0:
        residual = mom.sigma - np.eye(d)
        residual[H, :] = 0.0
        residual[:, H] = 0.0
        trace.exit_fkk_residual = fkk_norm(residual, config.k)[0]

    # Dense estimate on H from the fresh holdout; empirical mean elsewhere.
    mu1 = np.zeros(d)
    if H:
        cap = max(1000, int(config.dense_gather_budget / len(H)))
        fresh = head_rows(hold, min(num_rows(hold), cap), cols=H)
        mu1[H] = dense_robust_mean(fresh, eps,
                                   c_stop=config.dense_c_stop,
                                   trim_min=config.dense_trim_min)
    mu2 = mom.mu.copy()
    mu2[H] = 0.0
    trace.mu1, trace.mu2 = mu1, mu2

    mu_hat = mu1 + mu2
    if config.truncate_final:
        mu_hat = truncate_top_k(mu_hat, config.k)
    trace.wall_time = time.time() - t0
    return mu_hat, trace
