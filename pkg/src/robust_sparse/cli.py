"""robust-sparse command line front end.

Subcommands:

    generate   write a dataset (CSV + .labels + .truth.json siblings)
    run        run one estimator on a dataset file, print a JSON report row
    sweep      full grid x repeats from a JSON experiment spec
    selftest   acceptance suite (criteria 1-4, 8, 9; --full adds 5-7)

Exit codes: 0 ok, 1 usage error, 2 runtime failure, 3 selftest failure.
The ROBUST_SPARSE_THREADS environment variable caps the sweep worker
pool (default 1).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .bench import (CellSpec, EstimateReport, estimators_for_task,
                    generate_cell_dataset, run_cell)
from .contamination import load_dataset, save_dataset
from .errors import ParameterError

USAGE_ERROR, RUNTIME_ERROR, SELFTEST_FAILURE = 1, 2, 3


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--task", choices=("mean", "pca", "regression"), default="mean")
    p.add_argument("--d", type=int, default=100)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--n", type=int, default=50000)
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--adversary", default="none")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None,
                   help="JSON dict of extra estimator / adversary settings")


def _cell_from_args(args) -> CellSpec:
    extra = json.loads(args.config) if args.config else {}
    adv_params = extra.pop("adversary_params", {})
    rho = args.rho if args.rho is not None else (0.5 if args.task == "pca" else None)
    sigma = args.sigma if args.sigma is not None else (
        1.0 if args.task == "regression" else None)
    mu_spec = extra.pop("mu_spec", None)
    beta_spec = extra.pop("beta_spec", ("random", 1.0))
    return CellSpec(task=args.task, d=args.d, k=args.k, n=args.n,
                    epsilon=args.eps, adversary=args.adversary,
                    adversary_params=adv_params, rho=rho, sigma=sigma,
                    mu_spec=mu_spec, beta_spec=beta_spec, seed=args.seed,
                    estimator_config=extra)


def cmd_generate(args) -> int:
    cell = _cell_from_args(args)
    ds = generate_cell_dataset(cell, materialize=True)
    save_dataset(ds, args.out)
    print(f"wrote {args.out} (n={ds.n}, d={ds.d}, "
          f"outliers={ds.meta['n_outliers']})")
    return 0


def cmd_run(args) -> int:
    ds = load_dataset(args.dataset)
    task = {"mean": "mean", "pca": "pca", "reg": "regression"}[ds.meta["task"]]
    if args.task != task:
        raise ParameterError(
            f"dataset {args.dataset} holds a {task} task, got --task {args.task}")
    if args.estimator not in estimators_for_task(task):
        raise ParameterError(
            f"unknown estimator {args.estimator!r}; choices for {task}: "
            f"{estimators_for_task(task)}")
    cell = _cell_from_args(args)
    cell.n = ds.n
    cell.d = ds.meta["d"]
    for key in ("k", "epsilon", "rho", "sigma"):
        if key in ds.meta and ds.meta[key] is not None:
            setattr(cell, "epsilon" if key == "epsilon" else key, ds.meta[key])
    report = run_cell(cell, args.estimator, ds=ds)
    line = report.to_json()
    print(line)
    if args.out:
        with open(args.out, "a") as f:
            f.write(line + "\n")
    return 0


def _sweep_cells(spec: dict):
    task = spec["task"]
    repeats = int(spec.get("repeats", 1))
    if repeats < 1:
        raise ParameterError("repeats must be >= 1")
    grid = spec.get("grid", [])
    if not grid:
        raise ParameterError("empty grid")
    estimators = spec.get("estimators", ["paper"])
    base_seed = int(spec.get("seed", 0))
    adversary = spec.get("adversary", {"adversary": "none"})
    for ci, g in enumerate(grid):
        for rep in range(repeats):
            cell = CellSpec(
                task=task, d=int(g["d"]), k=int(g["k"]), n=int(g["n"]),
                epsilon=float(g["eps"]),
                adversary=adversary.get("adversary", "none"),
                adversary_params=adversary.get("params", {}),
                rho=g.get("rho"), sigma=g.get("sigma"),
                mu_spec=g.get("mu_spec"), beta_spec=g.get("beta_spec",
                                                          ("random", 1.0)),
                seed=base_seed + 1000 * ci + rep,
                estimator_config=spec.get("estimator_config", {}))
            yield ci, rep, cell, estimators


def cmd_sweep(args) -> int:
    spec = json.loads(Path(args.spec).read_text())
    out = Path(args.out or "sweep_out")
    out.mkdir(parents=True, exist_ok=True)
    rows: list[EstimateReport] = []
    failures = []

    def one(job):
        ci, rep, cell, estimators = job
        ds = generate_cell_dataset(cell)
        results = []
        for est in estimators:
            try:
                results.append(run_cell(cell, est, ds=ds))
            except Exception as exc:  # record, keep sweeping
                failures.append((ci, rep, est, repr(exc)))
        return results

    jobs = list(_sweep_cells(spec))
    workers = max(1, int(os.environ.get("ROBUST_SPARSE_THREADS", "1")))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for res in pool.map(one, jobs):
                rows.extend(res)
    else:
        for job in jobs:
            rows.extend(one(job))

    report_path = out / "report.jsonl"
    with open(report_path, "w") as f:
        for row in rows:
            f.write(row.to_json() + "\n")
    csv_path = out / "report.csv"
    _write_tidy_csv(rows, csv_path)
    _write_plot_data(rows, out)
    _write_plot_stub(out)
    print(f"{len(rows)} rows -> {report_path}, {csv_path}")
    if failures:
        print(f"{len(failures)} cell failures recorded", file=sys.stderr)
        (out / "failures.json").write_text(json.dumps(failures, indent=1))
    return 0


def _write_tidy_csv(rows, path) -> None:
    cols = ("task", "estimator", "d", "k", "n", "epsilon", "adversary", "seed",
            "error_l2", "error_2k", "error_projector", "iterations",
            "wall_time")
    with open(path, "w") as f:
        f.write(",".join(cols) + "\n")
        for r in rows:
            c = r.cell
            vals = [r.task, r.estimator, c["d"], c["k"], c["n"], c["epsilon"],
                    c["adversary"], r.seed, r.error_l2, r.error_2k,
                    r.error_projector, r.iterations, f"{r.wall_time:.3f}"]
            f.write(",".join("" if v is None else str(v) for v in vals) + "\n")


def _write_plot_data(rows, out: Path) -> None:
    """Two-column (eps, mean error) files per estimator."""
    series: dict[str, dict[float, list[float]]] = {}
    for r in rows:
        err = r.error_projector if r.task == "pca" else r.error_l2
        if err is None:
            continue
        series.setdefault(r.estimator, {}).setdefault(
            r.cell["epsilon"], []).append(err)
    for est, by_eps in series.items():
        lines = [f"{eps:.6g} {float(np.mean(v)):.6g}"
                 for eps, v in sorted(by_eps.items())]
        (out / f"error_vs_eps_{est}.dat").write_text("\n".join(lines) + "\n")


def _write_plot_stub(out: Path) -> None:
    stub = """\
#!/usr/bin/env python3
# Plot stub: error vs epsilon, one line per estimator (log-log).
import glob
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

for path in sorted(glob.glob("error_vs_eps_*.dat")):
    data = np.loadtxt(path, ndmin=2)
    label = path[len("error_vs_eps_"):-len(".dat")]
    plt.loglog(data[:, 0], data[:, 1], marker="o", label=label)
plt.xlabel("epsilon"); plt.ylabel("error"); plt.legend(); plt.grid(True)
plt.savefig("error_vs_eps.png", dpi=150)
print("wrote error_vs_eps.png")
"""
    (out / "plot_error_vs_eps.py").write_text(stub)


def cmd_selftest(args) -> int:
    from .acceptance import run_acceptance
    results = run_acceptance(full=args.full, quick=args.quick)
    failed = [r for r in results if not r.passed]
    return SELFTEST_FAILURE if failed else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="robust-sparse",
        description="Robust sparse estimation benchmark harness")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic dataset")
    _add_common(g)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="run one estimator on a dataset file")
    _add_common(r)
    r.add_argument("--dataset", required=True)
    r.add_argument("--estimator", required=True)
    r.add_argument("--out", default=None)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="grid sweep from a JSON spec")
    s.add_argument("--spec", required=True)
    s.add_argument("--out", default="sweep_out")
    s.set_defaults(func=cmd_sweep)

    t = sub.add_parser("selftest", help="acceptance criteria")
    t.add_argument("--full", action="store_true",
                   help="include the long criteria 5-7")
    t.add_argument("--quick", action="store_true",
                   help="reduced sizes (smoke only, not the acceptance gate)")
    t.set_defaults(func=cmd_selftest)

    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE_ERROR if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (ParameterError, FileNotFoundError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except Exception as exc:  # pragma: no cover
        print(f"runtime failure: {exc}", file=sys.stderr)
        return RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
