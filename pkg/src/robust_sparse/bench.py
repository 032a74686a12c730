"""Benchmark cells: generate a task instance, run an estimator, report.

A cell is one (task, d, k, n, eps, adversary, estimator, seed) tuple; the
report row embeds the full cell description so any row can be re-executed
to the same numbers.  Error metrics: euclidean and (2,k) norms of the
parameter error, plus the projector Frobenius distance for PCA.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import baselines
from .contamination import ContaminationSpec, Dataset, gen_mean_task, \
    gen_pca_task, gen_regression_task
from .errors import ParameterError
from .mean_estimation import MeanConfig, robust_sparse_mean
from .pca import PcaConfig, robust_sparse_pca
from .regression import RegressionConfig, robust_sparse_regression
from .sparse_linalg import sparse_norm_2k, truncate_top_k

SCHEMA_VERSION = 1

MEAN_ESTIMATORS = ("paper", "baseline_single_direction", "empirical_mean",
                   "coordinate_median")
PCA_ESTIMATORS = ("paper", "empirical_pca")
REGRESSION_ESTIMATORS = ("paper", "ols")


@dataclass
class CellSpec:
    task: str
    d: int
    k: int
    n: int
    epsilon: float
    adversary: str = "none"
    adversary_params: dict = field(default_factory=dict)
    rho: float | None = None
    sigma: float | None = None
    mu_spec: object = None
    beta_spec: object = ("random", 1.0)
    seed: int = 0
    dtype: str = "float32"
    estimator_config: dict = field(default_factory=dict)

    def contamination(self) -> ContaminationSpec:
        return ContaminationSpec(epsilon=self.epsilon, adversary=self.adversary,
                                 params=dict(self.adversary_params), seed=self.seed)


@dataclass
class EstimateReport:
    schema: int
    task: str
    estimator: str
    cell: dict
    seed: int
    error_l2: float | None
    error_2k: float | None
    error_projector: float | None
    iterations: int
    mass_final: float | None
    inlier_mass_removed: float | None
    outlier_mass_removed: float | None
    wall_time: float
    warnings: list[str]

    def to_json(self) -> str:
        return json.dumps(asdict(self), default=_np_default)


def _np_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    raise TypeError(f"not jsonable: {type(o)}")


def generate_cell_dataset(cell: CellSpec, materialize: bool | None = None) -> Dataset:
    spec = cell.contamination()
    dtype = np.dtype(cell.dtype)
    if cell.task == "mean":
        return gen_mean_task(cell.n, cell.d, cell.k, cell.mu_spec, spec,
                             dtype=dtype, materialize=materialize)
    if cell.task == "pca":
        if cell.rho is None:
            raise ParameterError("pca cell needs rho")
        return gen_pca_task(cell.n, cell.d, cell.k, cell.rho, spec, dtype=dtype)
    if cell.task == "regression":
        if cell.sigma is None:
            raise ParameterError("regression cell needs sigma")
        return gen_regression_task(cell.n, cell.d, cell.k, cell.beta_spec,
                                   cell.sigma, spec, dtype=dtype)
    raise ParameterError(f"unknown task {cell.task!r}")


def run_estimator(ds: Dataset, cell: CellSpec, estimator: str):
    """Dispatch one estimator; returns (estimate, iterations, ledger, warnings)."""
    task = cell.task
    ledger = {"mass_final": None, "inlier_removed": None, "outlier_removed": None}
    warnings: list[str] = []
    cfg_extra = dict(cell.estimator_config)
    if task == "mean":
        if estimator == "paper":
            cfg = MeanConfig(epsilon=cell.epsilon, k=cell.k, **cfg_extra)
            est, tr = robust_sparse_mean(ds, cfg)
            ledger["mass_final"] = tr.final_mass
            ledger["inlier_removed"] = _total(tr, "inlier_mass_removed")
            ledger["outlier_removed"] = _total(tr, "outlier_mass_removed")
            return est, len(tr.iterations), ledger, tr.warnings
        if estimator == "baseline_single_direction":
            est = baselines.single_direction_mean(ds.samples, cell.epsilon, cell.k)
            return est, 0, ledger, warnings
        if estimator == "empirical_mean":
            return baselines.empirical_mean(ds.samples), 0, ledger, warnings
        if estimator == "coordinate_median":
            return baselines.coordinate_median(ds.samples), 0, ledger, warnings
    elif task == "pca":
        if estimator == "paper":
            cfg = PcaConfig(epsilon=cell.epsilon, k=cell.k, rho=cell.rho,
                            seed=cell.seed, **cfg_extra)
            est, tr = robust_sparse_pca(ds, cfg)
            return est, tr.alpha_draws, ledger, tr.warnings
        if estimator == "empirical_pca":
            return baselines.empirical_pca(ds.samples), 0, ledger, warnings
    elif task == "regression":
        if estimator == "paper":
            cfg = RegressionConfig(epsilon=cell.epsilon, k=cell.k,
                                   sigma=cell.sigma, seed=cell.seed, **cfg_extra)
            est, tr = robust_sparse_regression(ds, cfg)
            return est, tr.alpha_draws, ledger, tr.warnings
        if estimator == "ols":
            return baselines.ols(ds.samples, ds.response), 0, ledger, warnings
    raise ParameterError(f"unknown estimator {estimator!r} for task {task!r}")


def _total(trace, attr):
    vals = [getattr(it, attr) for it in trace.iterations]
    vals = [v for v in vals if v is not None]
    return float(sum(vals)) if vals else None


def score_estimate(ds: Dataset, cell: CellSpec, estimate: np.ndarray):
    """(error_l2, error_2k, error_projector) against the ground truth."""
    task = cell.task
    if task == "mean":
        target = ds.truth["mu"]
        diff = estimate - target
        return (float(np.linalg.norm(diff)), sparse_norm_2k(diff, cell.k), None)
    if task == "pca":
        v = ds.truth["v"]
        vh = estimate / np.linalg.norm(estimate)
        proj = float(np.linalg.norm(np.outer(vh, vh) - np.outer(v, v)))
        diff = vh - v if vh @ v >= 0 else vh + v
        return (float(np.linalg.norm(diff)), sparse_norm_2k(diff, cell.k), proj)
    if task == "regression":
        target = ds.truth["beta"]
        diff = estimate - target
        return (float(np.linalg.norm(diff)), sparse_norm_2k(diff, cell.k), None)
    raise ParameterError(task)


def run_cell(cell: CellSpec, estimator: str, ds: Dataset | None = None) -> EstimateReport:
    if ds is None:
        ds = generate_cell_dataset(cell)
    t0 = time.time()
    est, iters, ledger, warns = run_estimator(ds, cell, estimator)
    wall = time.time() - t0
    e2, e2k, eproj = score_estimate(ds, cell, np.asarray(est, dtype=float))
    return EstimateReport(
        schema=SCHEMA_VERSION, task=cell.task, estimator=estimator,
        cell=asdict(cell), seed=cell.seed, error_l2=e2, error_2k=e2k,
        error_projector=eproj, iterations=iters,
        mass_final=ledger["mass_final"],
        inlier_mass_removed=ledger["inlier_removed"],
        outlier_mass_removed=ledger["outlier_removed"],
        wall_time=wall, warnings=list(warns))


def estimators_for_task(task: str):
    return {"mean": MEAN_ESTIMATORS, "pca": PCA_ESTIMATORS,
            "regression": REGRESSION_ESTIMATORS}[task]


def mean_task_cell(d: int, k: int, epsilon: float, n_mult: float = 40.0,
                   adversary: str = "evasive_tail", seed: int = 0,
                   mu_spec=None, **kw) -> CellSpec:
    """The canonical benchmark cell: n = n_mult * k^2 log(d) / eps^2."""
    n = int(np.ceil(n_mult * k * k * np.log(d) / epsilon ** 2))
    return CellSpec(task="mean", d=d, k=k, n=n, epsilon=epsilon,
                    adversary=adversary, seed=seed, mu_spec=mu_spec, **kw)
