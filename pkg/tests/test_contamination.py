"""Dataset generation, determinism, adversaries, the goodness checker,
and the CSV round trip."""

import numpy as np
import pytest
from scipy import stats

from robust_sparse import (ContaminationSpec, ParameterError, check_goodness,
                           gen_mean_task, gen_pca_task, gen_regression_task,
                           load_dataset, save_dataset)
from robust_sparse.contamination import hanson_wright_tail_check
from robust_sparse.data import materialize


def test_spec_validation():
    with pytest.raises(ParameterError):
        ContaminationSpec(epsilon=0.6)
    with pytest.raises(ParameterError):
        ContaminationSpec(epsilon=0.1, adversary="nope")
    with pytest.raises(ParameterError):
        ContaminationSpec(epsilon=0.1, adversary="custom_points")


def test_determinism_byte_identical():
    spec = ContaminationSpec(epsilon=0.1, adversary="evasive_tail", seed=42)
    a = gen_mean_task(3000, 25, 3, ("random", 1.0), spec)
    b = gen_mean_task(3000, 25, 3, ("random", 1.0), spec)
    assert a.samples.tobytes() == b.samples.tobytes()
    assert np.array_equal(a.labels, b.labels)
    # virtual and materialized agree
    c = gen_mean_task(3000, 25, 3, ("random", 1.0), spec, materialize=False)
    assert np.array_equal(materialize(c.samples), a.samples)

    p1 = gen_pca_task(2000, 20, 3, 0.7, spec)
    p2 = gen_pca_task(2000, 20, 3, 0.7, spec)
    assert p1.samples.tobytes() == p2.samples.tobytes()

    spec_r = ContaminationSpec(epsilon=0.1, adversary="response_flip", seed=9)
    r1 = gen_regression_task(2000, 20, 3, ("random", 1.0), 1.0, spec_r)
    r2 = gen_regression_task(2000, 20, 3, ("random", 1.0), 1.0, spec_r)
    assert r1.samples.tobytes() == r2.samples.tobytes()
    assert np.array_equal(r1.response, r2.response)


def test_clean_mean_task():
    spec = ContaminationSpec(epsilon=0.0, seed=1)
    ds = gen_mean_task(20000, 30, 4, ("random", 1.0), spec)
    assert not ds.labels.any()
    assert ds.meta["n_outliers"] == 0
    err = np.linalg.norm(ds.samples.mean(axis=0) - ds.truth["mu"])
    assert err <= 4 * np.sqrt(30 / 20000)


def test_outlier_fraction_concentration():
    for seed in range(4):
        spec = ContaminationSpec(epsilon=0.12, adversary="evasive_tail", seed=seed)
        ds = gen_mean_task(20000, 10, 2, None, spec)
        frac = ds.labels.mean()
        assert abs(frac - 0.12) <= 3 * np.sqrt(0.12 * 0.88 / 20000)
        assert ds.meta["n_outliers"] == int(ds.labels.sum())


def test_sparse_shift_point_mass_rows():
    spec = ContaminationSpec(epsilon=0.2, adversary="sparse_shift",
                             params={"delta": 7.0}, seed=3)
    ds = gen_mean_task(5000, 12, 3, ("random", 1.0), spec)
    out_rows = ds.samples[ds.labels]
    assert len(out_rows) > 0
    # all outlier rows identical: mu + delta * u
    assert np.allclose(out_rows, out_rows[0])
    shift = out_rows[0] - ds.truth["mu"]
    assert abs(np.linalg.norm(shift) - 7.0) < 1e-9
    assert np.count_nonzero(shift) <= 3


def test_evasive_default_magnitude():
    eps = 0.08
    spec = ContaminationSpec(epsilon=eps, adversary="evasive_tail", seed=5)
    ds = gen_mean_task(5000, 15, 3, None, spec)
    out_rows = ds.samples[ds.labels]
    delta = np.sqrt(2 * np.log(1 / eps))
    assert abs(np.linalg.norm(out_rows[0]) - delta) < 1e-9


def test_evasive_baseline_residual_bias():
    # the single-direction baseline keeps the eps*delta bias
    from robust_sparse.baselines import single_direction_mean
    eps, d, k = 0.1, 80, 4
    spec = ContaminationSpec(epsilon=eps, adversary="evasive_tail", seed=11)
    ds = gen_mean_task(400_000, d, k, None, spec, dtype=np.float32)
    est = single_direction_mean(ds.samples, eps, k)
    delta = np.sqrt(2 * np.log(1 / eps))
    err = np.linalg.norm(est - ds.truth["mu"])
    assert 0.5 * eps * delta <= err <= 1.5 * eps * delta


def test_pca_task_moments():
    spec = ContaminationSpec(epsilon=0.0, seed=2)
    v = np.zeros(10)
    v[0] = 1.0
    ds = gen_pca_task(100_000, 10, 1, 1.0, spec, v=v)
    var1 = ds.samples[:, 0].var()
    assert 1.9 <= var1 <= 2.1
    evals, evecs = np.linalg.eigh(np.cov(ds.samples.T))
    assert evecs[:, -1] @ v > 0.975 or evecs[:, -1] @ v < -0.975


def test_pca_rejects_bad_rho():
    with pytest.raises(ParameterError):
        gen_pca_task(100, 5, 2, 0.0, ContaminationSpec(epsilon=0.0))
    with pytest.raises(ParameterError):
        gen_pca_task(100, 5, 2, 1.5, ContaminationSpec(epsilon=0.0))


def test_pca_adversary_labels():
    spec = ContaminationSpec(epsilon=0.05, adversary="sparse_shift",
                             params={"delta": 5.0}, seed=7)
    ds = gen_pca_task(20000, 15, 3, 0.5, spec)
    assert abs(ds.labels.mean() - 0.05) <= 3 * np.sqrt(0.05 * 0.95 / 20000)


def test_regression_marginal_and_ols():
    spec = ContaminationSpec(epsilon=0.0, seed=4)
    ds = gen_regression_task(50_000, 20, 3, None, 1.3, spec)
    # beta = 0: y marginally N(0, sigma^2)
    assert abs(ds.response.std() - 1.3) < 0.02
    ds2 = gen_regression_task(50_000, 20, 3, ("random", 1.0), 1.0,
                              ContaminationSpec(epsilon=0.0, seed=6))
    beta = ds2.truth["beta"]
    sup = np.flatnonzero(beta)
    x = ds2.samples[:, sup]
    bh, *_ = np.linalg.lstsq(x, ds2.response, rcond=None)
    assert np.linalg.norm(bh - beta[sup]) <= 4 * 1.0 * np.sqrt(3 / 50_000)


def test_regression_rejects_bad_sigma_and_norm():
    with pytest.raises(ParameterError):
        gen_regression_task(100, 5, 2, None, 0.0, ContaminationSpec(epsilon=0.0))
    big = np.zeros(5)
    big[0] = 100.0
    with pytest.raises(ParameterError):
        gen_regression_task(100, 5, 1, big, 1.0, ContaminationSpec(epsilon=0.0))


def test_response_flip_only_for_regression():
    spec = ContaminationSpec(epsilon=0.1, adversary="response_flip", seed=1)
    with pytest.raises(ParameterError):
        gen_mean_task(100, 5, 2, None, spec)


def test_goodness_clean_passes():
    eps, k, d = 0.05, 5, 100
    spec = ContaminationSpec(epsilon=0.0, seed=21)
    ds = gen_mean_task(50_000, d, k, ("random", 1.0), spec, dtype=np.float32)
    report = check_goodness(ds.samples, ds.truth["mu"], eps, k, trials=200)
    assert report.passed, str(report)


def test_goodness_detects_shifted_mean():
    eps, k, d = 0.05, 3, 30
    spec = ContaminationSpec(epsilon=0.0, seed=22)
    ds = gen_mean_task(50_000, d, k, None, spec)
    shifted = ds.samples.copy()
    shifted[:, 0] += 10.0
    report = check_goodness(shifted, ds.truth["mu"], eps, k, trials=100)
    by_name = {c.name: c for c in report.conditions}
    assert not by_name["mean_stability"].passed


def test_goodness_chi_square_tail_matches_analytic():
    # p(x) = ((x1-m1)^2 + (x2-m2)^2 - 2)/sqrt(2) under the inlier law:
    # Pr[p > t] = Pr[chi2_2 > 2 + sqrt(2) t] = exp(-(2 + sqrt(2) t)/2)
    rng = np.random.default_rng(23)
    n = 400_000
    x = rng.standard_normal((n, 2))
    p = (np.sum(x * x, axis=1) - 2.0) / np.sqrt(2.0)
    for t in [1.0, 2.0, 4.0]:
        emp = (p > t).mean()
        ana = np.exp(-(2 + np.sqrt(2) * t) / 2)
        se = np.sqrt(ana * (1 - ana) / n)
        assert abs(emp - ana) <= 4 * se + 1e-6


def test_goodness_rejects_bad_trials():
    with pytest.raises(ParameterError):
        check_goodness(np.zeros((10, 2)), np.zeros(2), 0.1, 1, trials=0)


def test_hanson_wright_empirical_tails():
    rows = hanson_wright_tail_check(1_000_000, 20, ts=(2.0, 4.0, 8.0), seed=3)
    for t, emp, bound in rows:
        assert emp <= bound
    # tail actually decays
    assert rows[2][1] < rows[0][1] + 1e-9


def test_csv_roundtrip_and_header(tmp_path):
    spec = ContaminationSpec(epsilon=0.1, adversary="evasive_tail", seed=33)
    ds = gen_mean_task(200, 7, 2, ("random", 1.0), spec)
    path = tmp_path / "mean.csv"
    save_dataset(ds, path)
    header = path.read_text().splitlines()[0]
    assert header == "# d=7 task=mean seed=33"
    back = load_dataset(path)
    assert np.array_equal(back.samples, ds.samples)
    assert np.array_equal(back.labels, ds.labels)
    assert np.allclose(back.truth["mu"], ds.truth["mu"])
    # regenerating writes identical bytes
    path2 = tmp_path / "mean2.csv"
    save_dataset(gen_mean_task(200, 7, 2, ("random", 1.0), spec), path2)
    assert path.read_bytes() == path2.read_bytes()


def test_csv_roundtrip_regression(tmp_path):
    spec = ContaminationSpec(epsilon=0.05, adversary="response_flip", seed=8)
    ds = gen_regression_task(150, 6, 2, ("random", 1.0), 1.0, spec)
    path = tmp_path / "reg.csv"
    save_dataset(ds, path)
    back = load_dataset(path)
    assert back.meta["task"] == "reg"
    assert np.array_equal(back.samples, ds.samples)
    assert np.array_equal(back.response, ds.response)
