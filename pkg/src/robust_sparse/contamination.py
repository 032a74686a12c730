"""Synthetic Huber-contaminated data for the mean, PCA and regression tasks.

Every sample is independently an inlier with probability 1-eps and an
adversary draw with probability eps (i.i.d. Bernoulli mixing, not a fixed
swap count).  Generation is chunked over the keyed Philox streams from
rng.py; the draw order inside chunk c of a dataset with seed s is fixed:

    1. uniforms  u[0..m)                 (outlier mask: u < eps)
    2. normals   z[0..m) x width         (inlier noise; width = d, or d+1
                                          for the regression task where the
                                          last column is the response noise)
    3. adversary extras (cluster assignments / custom point selection)

Dataset-level draws (sparse supports, adversary directions, cluster
centers) come from the META_STREAM of the same seed, in the order: target
parameter, then adversary parameters.  Identical (spec, seed) therefore
reproduce identical bytes, materialized or streamed.

The mean task can stay *virtual* (chunks regenerated on demand), which is
how benchmark cells with n*d in the billions run inside a few GB of RAM.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rng import CHUNK_ROWS, META_STREAM, chunk_stream, n_chunks, stream
from .data import iter_sample_chunks, num_rows
from .errors import ParameterError

ADVERSARIES = ("none", "sparse_shift", "dense_cluster", "evasive_tail",
               "custom_points", "response_flip")

MATERIALIZE_LIMIT = 120_000_000  # n*d above this stays virtual by default


@dataclass
class ContaminationSpec:
    """Corruption rate, adversary kind and its parameters, and the seed."""

    epsilon: float
    adversary: str = "none"
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.epsilon < 0.5:
            raise ParameterError(f"epsilon={self.epsilon} outside [0, 0.5)")
        if self.adversary not in ADVERSARIES:
            raise ParameterError(f"unknown adversary {self.adversary!r}")
        if self.adversary == "custom_points" and "points" not in self.params:
            raise ParameterError("custom_points adversary needs params['points']")


@dataclass
class Dataset:
    """Samples plus simulation-only labels and ground truth.

    ``samples`` is an ndarray or a virtual chunked source; ``labels`` is a
    per-sample outlier flag; ``truth`` holds the generating parameters;
    regression datasets carry the responses in ``response``.
    """

    samples: object
    labels: np.ndarray | None
    truth: dict
    meta: dict
    response: np.ndarray | None = None

    @property
    def n(self) -> int:
        return num_rows(self.samples)

    @property
    def d(self) -> int:
        return self.meta["d"]


def _sparse_vector(rng: np.random.Generator, d: int, k: int, norm: float) -> np.ndarray:
    """k-sparse vector with equal-magnitude random-sign entries."""
    support = rng.permutation(d)[:k]
    signs = np.where(rng.random(k) < 0.5, -1.0, 1.0)
    v = np.zeros(d)
    v[support] = signs * (norm / np.sqrt(k))
    return v


def _resolve_target(spec, rng, d, k, norm_default=1.0):
    """mu/beta specification: None -> zero, array -> as-is, ("random", norm)."""
    if spec is None:
        return np.zeros(d)
    if isinstance(spec, (tuple, list)) and len(spec) == 2 and spec[0] == "random":
        return _sparse_vector(rng, d, k, float(spec[1]))
    if isinstance(spec, str):
        if spec != "random":
            raise ParameterError(f"unknown target spec {spec!r}")
        return _sparse_vector(rng, d, k, norm_default)
    v = np.asarray(spec, dtype=float).ravel()
    if v.size != d:
        raise ParameterError(f"target vector has length {v.size}, expected {d}")
    if np.count_nonzero(v) > k:
        raise ParameterError("target vector is not k-sparse")
    return v


class _Adversary:
    """Realized adversary: fixed draw of its parameters for one dataset."""

    def __init__(self, spec: ContaminationSpec, rng: np.random.Generator,
                 d: int, k: int, center: np.ndarray, task: str):
        self.kind = spec.adversary
        self.params = dict(spec.params)
        self.point = None
        self.centers = None
        self.points = None
        self.direction = None
        eps = spec.epsilon
        if self.kind in ("sparse_shift", "evasive_tail"):
            size = int(self.params.get("support_size", k))
            if size > d:
                raise ParameterError("shift support size exceeds dimension")
            if self.kind == "evasive_tail":
                delta = float(self.params.get(
                    "delta", np.sqrt(2.0 * np.log(1.0 / eps)) if eps > 0 else 0.0))
            else:
                delta = float(self.params["delta"])
            support = self.params.get("support", "random")
            u = np.zeros(d)
            if isinstance(support, str) and support == "mu":
                idx = np.flatnonzero(center)
                if idx.size == 0:
                    u = _sparse_vector(rng, d, size, 1.0)
                else:
                    u[idx] = center[idx] / np.linalg.norm(center[idx])
            elif isinstance(support, str) and support == "random":
                u = _sparse_vector(rng, d, size, 1.0)
            else:
                idx = np.asarray(support, dtype=int)
                signs = np.where(rng.random(idx.size) < 0.5, -1.0, 1.0)
                u[idx] = signs / np.sqrt(idx.size)
            self.direction = u
            self.point = center + delta * u
        elif self.kind == "dense_cluster":
            count = int(self.params.get("count", 3))
            radius = float(self.params.get("radius", 8.0))
            z = rng.standard_normal((count, d))
            z /= np.linalg.norm(z, axis=1, keepdims=True)
            self.centers = center + radius * z
        elif self.kind == "custom_points":
            pts = np.asarray(self.params["points"], dtype=float)
            if pts.ndim == 1:
                pts = pts[None, :]
            self.points = pts
        elif self.kind == "response_flip" and task != "regression":
            raise ParameterError("response_flip applies to the regression task only")

    def apply_rows(self, x: np.ndarray, mask: np.ndarray,
                   rng: np.random.Generator, z: np.ndarray) -> None:
        """Overwrite the masked rows of x in place (x-side adversaries)."""
        m = mask.sum()
        if self.kind == "dense_cluster":
            assign = (rng.random(mask.size) * len(self.centers)).astype(int)
            x[mask] = (self.centers[assign[mask]] + z[mask]).astype(x.dtype)
        elif self.kind == "custom_points":
            sel = (rng.random(mask.size) * len(self.points)).astype(int)
            x[mask] = self.points[sel[mask]].astype(x.dtype)
        elif self.kind in ("sparse_shift", "evasive_tail"):
            x[mask] = np.asarray(self.point, dtype=x.dtype)
        elif self.kind in ("none", "response_flip"):
            pass
        else:  # pragma: no cover
            raise AssertionError(self.kind)
        del m


def _chunk_mask(rng: np.random.Generator, m: int, eps: float) -> np.ndarray:
    u = rng.random(m)
    return u < eps


class VirtualMeanSamples:
    """Mean-task sample matrix regenerated chunk-by-chunk on demand."""

    def __init__(self, n: int, d: int, mu: np.ndarray, eps: float,
                 adversary: _Adversary, seed: int, dtype):
        self.n, self.d, self.mu, self.eps = n, d, mu, eps
        self.adversary = adversary
        self.seed = seed
        self.dtype = np.dtype(dtype)

    def n_rows(self) -> int:
        return self.n

    def n_cols(self) -> int:
        return self.d

    def _make_chunk(self, ci: int, lo: int, hi: int) -> np.ndarray:
        m = hi - lo
        rng = chunk_stream(self.seed, ci)
        mask = _chunk_mask(rng, m, self.eps)
        z = rng.standard_normal((m, self.d), dtype=self.dtype)
        x = z
        if np.any(self.mu):
            nz = np.flatnonzero(self.mu)
            x[:, nz] += self.mu[nz].astype(self.dtype)
        if mask.any():
            self.adversary.apply_rows(x, mask, rng, z)
        return x

    def chunks(self, cols=None):
        for ci in range(n_chunks(self.n)):
            lo = ci * CHUNK_ROWS
            hi = min(lo + CHUNK_ROWS, self.n)
            x = self._make_chunk(ci, lo, hi)
            yield lo, hi, x if cols is None else x[:, cols]

    def labels(self) -> np.ndarray:
        out = np.zeros(self.n, dtype=bool)
        for ci in range(n_chunks(self.n)):
            lo = ci * CHUNK_ROWS
            hi = min(lo + CHUNK_ROWS, self.n)
            rng = chunk_stream(self.seed, ci)
            out[lo:hi] = _chunk_mask(rng, hi - lo, self.eps)
        return out


def gen_mean_task(n: int, d: int, k: int, mu_spec, contamination: ContaminationSpec,
                  dtype=np.float64, materialize: bool | None = None) -> Dataset:
    """eps-corrupted samples from N(mu, I) with a k-sparse mean."""
    if n < 1 or d < 1 or not 1 <= k <= d:
        raise ParameterError("bad n/d/k")
    meta_rng = stream(contamination.seed, META_STREAM)
    mu = _resolve_target(mu_spec, meta_rng, d, k)
    adv = _Adversary(contamination, meta_rng, d, k, mu, "mean")
    virtual = VirtualMeanSamples(n, d, mu, contamination.epsilon, adv,
                                 contamination.seed, dtype)
    labels = virtual.labels()
    if materialize is None:
        materialize = n * d <= MATERIALIZE_LIMIT
    samples = virtual
    if materialize:
        blocks = [b for _, _, b in virtual.chunks()]
        samples = np.concatenate(blocks, axis=0) if blocks else np.empty((0, d), dtype)
    meta = {"task": "mean", "d": d, "k": k, "n": n, "seed": contamination.seed,
            "epsilon": contamination.epsilon, "adversary": contamination.adversary,
            "n_outliers": int(labels.sum())}
    return Dataset(samples=samples, labels=labels, truth={"mu": mu}, meta=meta)


def gen_pca_task(n: int, d: int, k: int, rho: float,
                 contamination: ContaminationSpec, v=None,
                 dtype=np.float64) -> Dataset:
    """eps-corrupted samples from N(0, I + rho v v') with k-sparse unit v."""
    if not 0.0 < rho <= 1.0:
        raise ParameterError(f"rho={rho} outside (0, 1]")
    if n < 1 or not 1 <= k <= d:
        raise ParameterError("bad n/d/k")
    meta_rng = stream(contamination.seed, META_STREAM)
    if v is None:
        v = _sparse_vector(meta_rng, d, k, 1.0)
    else:
        v = np.asarray(v, dtype=float).ravel()
        v = v / np.linalg.norm(v)
    adv = _Adversary(contamination, meta_rng, d, k, np.zeros(d), "pca")
    eps = contamination.epsilon
    spike = np.sqrt(1.0 + rho) - 1.0
    vs = v.astype(dtype)

    x = np.empty((n, d), dtype=dtype)
    labels = np.zeros(n, dtype=bool)
    for ci in range(n_chunks(n)):
        lo = ci * CHUNK_ROWS
        hi = min(lo + CHUNK_ROWS, n)
        rng = chunk_stream(contamination.seed, ci)
        mask = _chunk_mask(rng, hi - lo, eps)
        z = rng.standard_normal((hi - lo, d), dtype=dtype)
        t = z @ vs
        xc = z + spike * np.outer(t, vs)
        if mask.any():
            adv.apply_rows(xc, mask, rng, z)
        x[lo:hi] = xc
        labels[lo:hi] = mask
    meta = {"task": "pca", "d": d, "k": k, "n": n, "seed": contamination.seed,
            "epsilon": eps, "adversary": contamination.adversary, "rho": rho,
            "n_outliers": int(labels.sum())}
    return Dataset(samples=x, labels=labels, truth={"rho": rho, "v": v}, meta=meta)


def gen_regression_task(n: int, d: int, k: int, beta_spec, sigma: float,
                        contamination: ContaminationSpec, dtype=np.float64,
                        beta_norm_mult: float = 4.0) -> Dataset:
    """eps-corrupted (x, y) pairs with y ~ N(x'beta, sigma^2), k-sparse beta."""
    if sigma <= 0.0:
        raise ParameterError("sigma must be positive")
    if contamination.adversary not in ("none", "response_flip", "custom_points"):
        raise ParameterError(
            f"adversary {contamination.adversary!r} not defined for regression")
    meta_rng = stream(contamination.seed, META_STREAM)
    beta = _resolve_target(beta_spec, meta_rng, d, k, norm_default=sigma)
    if np.linalg.norm(beta) > beta_norm_mult * sigma:
        raise ParameterError(
            f"||beta||={np.linalg.norm(beta):.3g} exceeds {beta_norm_mult} * sigma")
    adv = _Adversary(contamination, meta_rng, d, k, beta, "regression")
    eps = contamination.epsilon
    bs = beta.astype(dtype)

    x = np.empty((n, d), dtype=dtype)
    y = np.empty(n, dtype=dtype)
    labels = np.zeros(n, dtype=bool)
    for ci in range(n_chunks(n)):
        lo = ci * CHUNK_ROWS
        hi = min(lo + CHUNK_ROWS, n)
        rng = chunk_stream(contamination.seed, ci)
        mask = _chunk_mask(rng, hi - lo, eps)
        z = rng.standard_normal((hi - lo, d + 1), dtype=dtype)
        xc = z[:, :d]
        yc = xc @ bs + dtype(sigma) * z[:, d]
        if mask.any():
            if adv.kind == "response_flip":
                yc[mask] = -yc[mask]
            elif adv.kind == "custom_points":
                sel = (rng.random(hi - lo) * len(adv.points)).astype(int)
                rows = adv.points[sel[mask]]
                xc[mask] = rows[:, :d].astype(dtype)
                yc[mask] = rows[:, d].astype(dtype)
        x[lo:hi] = xc
        y[lo:hi] = yc
        labels[lo:hi] = mask
    meta = {"task": "reg", "d": d, "k": k, "n": n, "seed": contamination.seed,
            "epsilon": eps, "adversary": contamination.adversary, "sigma": sigma,
            "n_outliers": int(labels.sum())}
    return Dataset(samples=x, labels=labels, truth={"beta": beta, "sigma": sigma},
                   meta=meta, response=y)


# ---------------------------------------------------------------------------
# Goodness conditions checker
# ---------------------------------------------------------------------------

@dataclass
class ConditionResult:
    name: str
    observed: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.observed <= self.threshold

    @property
    def margin(self) -> float:
        return self.threshold - self.observed


@dataclass
class GoodnessReport:
    conditions: list[ConditionResult]
    trials: int

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    def __str__(self) -> str:
        lines = []
        for c in self.conditions:
            tag = "ok " if c.passed else "FAIL"
            lines.append(f"  [{tag}] {c.name:24s} observed={c.observed:.3e} "
                         f"threshold={c.threshold:.3e}")
        return "\n".join(lines)


def check_goodness(samples, mu: np.ndarray, epsilon: float, k: int,
                   trials: int, seed: int = 0) -> GoodnessReport:
    """Monte Carlo audit of the inlier stability conditions.

    Probes ``trials`` random k-sparse unit directions v and random
    k^2-support matrices A (Frobenius norm at most sqrt(log(1/eps)),
    operator norm at most 1) and measures, on the provided uncorrupted
    samples with known mean mu:

    * linear tails:      Pr[|v.(X-mu)| >= 40 log(1/eps)] <= eps
    * quadratic mass:    E[p 1(p > 100 log(1/eps))] <= eps
    * quadratic tails:   Pr[p > 10 log(1/eps)] <= eps
    * linear-gated mass: E[p 1(b + v.(X-mu) > 100 log(1/eps))] <= eps
    * mean/covariance stability along the sampled directions at w == 1,
      with alpha = 3 eps / log(1/eps)

    where p(x) = (x-mu).A(x-mu) - tr(A).  Coverage of the probe families
    is best effort; the report carries every measured margin.
    """
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    if not 0.0 < epsilon < 0.5:
        raise ParameterError("epsilon must be in (0, 0.5)")
    mu = np.asarray(mu, dtype=float).ravel()
    d = mu.size
    n = num_rows(samples)
    L = np.log(1.0 / epsilon)
    alpha = 3.0 * epsilon / L

    rng = stream(seed, META_STREAM + 7)
    V = np.zeros((d, trials), dtype=np.float32)
    A_rows, A_cols, A_blocks, A_tr, betas = [], [], [], [], []
    for t in range(trials):
        vi = rng.permutation(d)[:k]
        vv = rng.standard_normal(k)
        V[vi, t] = (vv / np.linalg.norm(vv)).astype(np.float32)
        ri = np.sort(rng.permutation(d)[:k])
        cj = np.sort(rng.permutation(d)[:k])
        blk = rng.standard_normal((k, k))
        fro = np.linalg.norm(blk)
        op = np.linalg.svd(blk, compute_uv=False)[0]
        blk *= min(np.sqrt(L) / fro, 1.0 / op)
        A_rows.append(ri)
        A_cols.append(cj)
        A_blocks.append(blk)
        common = np.intersect1d(ri, cj)
        tr = sum(blk[np.where(ri == c)[0][0], np.where(cj == c)[0][0]]
                 for c in common)
        A_tr.append(float(tr))
        betas.append(float(rng.uniform(-1.0, 1.0)))

    lin_tail = np.zeros(trials)
    p_mass = np.zeros(trials)
    p_tail = np.zeros(trials)
    p_gated = np.zeros(trials)
    proj_sq = np.zeros(trials)
    mean_acc = np.zeros(d)

    for lo, hi, x in iter_sample_chunks(samples):
        xc = np.asarray(x, dtype=np.float64)
        mean_acc += xc.sum(axis=0)
        c32 = (xc - mu).astype(np.float32)
        proj = c32 @ V                                    # (m, trials)
        proj64 = proj.astype(np.float64)
        lin_tail += (np.abs(proj64) >= 40.0 * L).sum(axis=0)
        proj_sq += np.square(proj64).sum(axis=0)
        for t in range(trials):
            cr = c32[:, A_rows[t]].astype(np.float64)
            cc = c32[:, A_cols[t]].astype(np.float64)
            p = np.einsum("ij,jk,ik->i", cr, A_blocks[t], cc) - A_tr[t]
            p_mass[t] += p[p > 100.0 * L].sum()
            p_tail[t] += (p > 10.0 * L).sum()
            gate = (betas[t] + proj64[:, t]) > 100.0 * L
            p_gated[t] += p[gate].sum()

    mu_emp = mean_acc / n
    dmu = mu_emp - mu
    mean_dev = float(np.max(np.abs(dmu @ V.astype(np.float64))))
    cov_dev = float(np.max(np.abs(proj_sq / n - 1.0)))

    conds = [
        ConditionResult("linear_tail", float(lin_tail.max()) / n, epsilon),
        ConditionResult("poly_tail_mass", float(p_mass.max()) / n, epsilon),
        ConditionResult("poly_tail_prob", float(p_tail.max()) / n, epsilon),
        ConditionResult("poly_linear_gated", float(p_gated.max()) / n, epsilon),
        ConditionResult("mean_stability", mean_dev,
                        alpha * np.sqrt(np.log(1.0 / alpha))),
        ConditionResult("cov_stability", cov_dev, alpha * np.log(1.0 / alpha)),
    ]
    return GoodnessReport(conditions=conds, trials=trials)


def hanson_wright_tail_check(n: int, d: int, ts=(2.0, 4.0, 8.0),
                             seed: int = 0) -> list[tuple[float, float, float]]:
    """Empirical quadratic-form tails against 2 exp(-0.01 min(t^2, t)).

    Returns (t, empirical tail, bound) triples for a random matrix with
    unit Frobenius norm and operator norm at most 1.
    """
    rng = stream(seed, META_STREAM + 11)
    a = rng.standard_normal((d, d))
    a /= np.linalg.norm(a)
    op = np.linalg.svd(a, compute_uv=False)[0]
    if op > 1.0:
        a /= op
    center = np.trace(a)
    counts = np.zeros(len(ts))
    done = 0
    while done < n:
        m = min(CHUNK_ROWS, n - done)
        x = rng.standard_normal((m, d))
        q = np.einsum("ij,jk,ik->i", x, a, x) - center
        for i, t in enumerate(ts):
            counts[i] += (np.abs(q) > t).sum()
        done += m
    return [(float(t), float(counts[i]) / n,
             2.0 * np.exp(-0.01 * min(t * t, t))) for i, t in enumerate(ts)]


# ---------------------------------------------------------------------------
# Dataset files: CSV + .labels + .truth.json siblings
# ---------------------------------------------------------------------------

def save_dataset(ds: Dataset, path: str | Path) -> None:
    """Write samples as CSV with the `# d=.. task=.. seed=..` header row,
    labels to <path>.labels and truth to <path>.truth.json.  Regression
    rows carry the response as the last column."""
    path = Path(path)
    task = ds.meta["task"]
    with open(path, "w") as f:
        f.write(f"# d={ds.meta['d']} task={task} seed={ds.meta['seed']}\n")
        for lo, hi, block in iter_sample_chunks(ds.samples):
            block = np.asarray(block, dtype=np.float64)
            if ds.response is not None:
                block = np.column_stack([block, ds.response[lo:hi]])
            for row in block:
                f.write(",".join(f"{v:.17g}" for v in row) + "\n")
    if ds.labels is not None:
        with open(f"{path}.labels", "w") as f:
            f.write("\n".join("1" if b else "0" for b in ds.labels) + "\n")
    truth = {kk: (vv.tolist() if isinstance(vv, np.ndarray) else vv)
             for kk, vv in ds.truth.items()}
    with open(f"{path}.truth.json", "w") as f:
        json.dump({"meta": _jsonable(ds.meta), "truth": truth}, f, indent=1)


def load_dataset(path: str | Path) -> Dataset:
    path = Path(path)
    with open(path) as f:
        header = f.readline().strip()
        if not header.startswith("#"):
            raise ParameterError(f"{path}: missing header row")
        fields = dict(tok.split("=") for tok in header[1:].split())
        d = int(fields["d"])
        task = fields["task"]
        seed = int(fields["seed"])
        data = np.loadtxt(f, delimiter=",", ndmin=2)
    response = None
    if task == "reg":
        response = data[:, d].copy()
        data = data[:, :d].copy()
    elif data.shape[1] != d:
        raise ParameterError(f"{path}: row width {data.shape[1]} != d={d}")
    labels = None
    lpath = Path(f"{path}.labels")
    if lpath.exists():
        labels = np.loadtxt(lpath, dtype=int).astype(bool).ravel()
    truth, meta = {}, {"task": task, "d": d, "seed": seed, "n": data.shape[0]}
    tpath = Path(f"{path}.truth.json")
    if tpath.exists():
        blob = json.loads(tpath.read_text())
        meta.update(blob.get("meta", {}))
        truth = {kk: (np.asarray(vv) if isinstance(vv, list) else vv)
                 for kk, vv in blob.get("truth", {}).items()}
    return Dataset(samples=data, labels=labels, truth=truth, meta=meta,
                   response=response)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj
