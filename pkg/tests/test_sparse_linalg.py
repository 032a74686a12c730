"""Sparse norms, the (F,k,k) maximizer, and the greedy decomposition,
checked against exhaustive enumeration oracles at small dimension."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robust_sparse import (ParameterError, fkk_norm, fkk_norm_bruteforce,
                           greedy_decomposition, sparse_bilinear_bound_check,
                           sparse_norm_2k, sparse_op_norm_oracle,
                           truncate_top_k)

RNG = np.random.default_rng(20240811)


def test_sparse_norm_2k_examples():
    assert sparse_norm_2k([3, 0, -4, 0], 1) == 4.0
    assert sparse_norm_2k([3, 0, -4, 0], 2) == 5.0


def test_sparse_norm_2k_matches_support_enumeration():
    from itertools import combinations
    for _ in range(20):
        x = RNG.standard_normal(8)
        best = 0.0
        for sup in combinations(range(8), 3):
            sub = x[list(sup)]
            nv = np.linalg.norm(sub)
            if nv > 0:
                best = max(best, float(sub @ (sub / nv)))
        assert abs(sparse_norm_2k(x, 3) - best) < 1e-12


@given(st.integers(1, 12), st.integers(0, 10 ** 6))
@settings(max_examples=40, deadline=None)
def test_sparse_norm_2k_bounded_by_l2(k, seed):
    x = np.random.default_rng(seed).standard_normal(12)
    assert sparse_norm_2k(x, k) <= np.linalg.norm(x) + 1e-12
    assert abs(sparse_norm_2k(x, 12) - np.linalg.norm(x)) < 1e-12


def test_sparse_norm_2k_rejects_bad_k():
    with pytest.raises(ParameterError):
        sparse_norm_2k([1.0, 2.0], 0)
    with pytest.raises(ParameterError):
        sparse_norm_2k([1.0, 2.0], 3)


def test_truncate_examples_and_tiebreak():
    assert np.array_equal(truncate_top_k([1, -5, 2], 1), [0, -5, 0])
    # ties broken by lowest index
    assert np.array_equal(truncate_top_k([1, 1, 1], 2), [1, 1, 0])


def test_truncation_error_bound():
    # ||t_k(x) - y||_2 <= sqrt(6) ||x - y||_{2,2k} for k-sparse y
    d, k = 12, 3
    for _ in range(1000):
        y = np.zeros(d)
        sup = RNG.permutation(d)[:k]
        y[sup] = RNG.standard_normal(k) * RNG.uniform(0.1, 3.0)
        x = y + RNG.standard_normal(d) * RNG.uniform(0.01, 2.0)
        lhs = np.linalg.norm(truncate_top_k(x, k) - y)
        rhs = np.sqrt(6.0) * sparse_norm_2k(x - y, 2 * k)
        assert lhs <= rhs + 1e-12


def test_fkk_norm_examples():
    a = np.diag([3.0, 4.0])
    val, direction = fkk_norm(a, 1)
    assert abs(val - 4.0) < 1e-12
    expected = np.zeros((2, 2))
    expected[1, 1] = 1.0
    assert np.allclose(direction.matrix, expected)
    val2, _ = fkk_norm(a, 2)
    assert abs(val2 - 5.0) < 1e-12


def test_fkk_norm_matches_bruteforce():
    for _ in range(60):
        d = int(RNG.integers(3, 9))
        k = int(RNG.integers(1, min(3, d) + 1))
        a = RNG.standard_normal((d, d))
        fast, direction = fkk_norm(a, k)
        assert abs(fast - fkk_norm_bruteforce(a, k)) < 1e-9
        # the maximizer witnesses its own value
        assert abs(float(np.sum(a * direction.matrix)) - fast) < 1e-9
        assert abs(np.linalg.norm(direction.matrix) - 1.0) < 1e-9
        assert len(direction.row_support) <= k
        assert all(len(c) <= k for c in direction.col_support_per_row.values())


def test_fkk_zero_matrix_null_direction():
    val, direction = fkk_norm(np.zeros((4, 4)), 2)
    assert val == 0.0
    assert direction.is_null
    assert direction.score == 0.0
    assert direction.matrix[0, 0] == 1.0  # canonical e1 e1'


def test_op_norm_oracle_examples():
    assert abs(sparse_op_norm_oracle(np.eye(4), 2) - 1.0) < 1e-12
    v = np.array([0.0, 0.6, 0.0, 0.8])
    assert abs(sparse_op_norm_oracle(np.outer(v, v), 2) - 1.0) < 1e-9


def test_op_norm_oracle_below_fkk():
    for _ in range(500):
        a = RNG.standard_normal((6, 6))
        assert sparse_op_norm_oracle(a, 2) <= fkk_norm(a, 2)[0] + 1e-9


def test_op_norm_oracle_guards_dimension():
    with pytest.raises(ParameterError):
        sparse_op_norm_oracle(np.eye(15), 2)


def test_greedy_diagonal_example():
    dec = greedy_decomposition(np.diag([5.0, 4.0, 3.0, 2.0]), 1, 2)
    assert dec.scores == [5.0, 4.0]
    assert dec.supports == [frozenset({0}), frozenset({1})]
    assert dec.g_value == 9.0


def test_greedy_zero_matrix():
    dec = greedy_decomposition(np.zeros((5, 5)), 2, 3)
    assert dec.r_produced == 0
    assert dec.g_value == 0.0


def test_greedy_invariants_random_symmetric():
    for _ in range(40):
        m = RNG.standard_normal((8, 8))
        b = 0.5 * (m + m.T)
        dec = greedy_decomposition(b, 2, 2)
        # disjoint supports
        seen = set()
        for s in dec.supports:
            assert not (seen & s)
            seen |= s
        # composite norms
        rp = dec.r_produced
        assert abs(np.linalg.norm(dec.composite) - np.sqrt(rp)) < 1e-6
        assert np.linalg.svd(dec.composite, compute_uv=False)[0] <= 1 + 1e-6
        # h_i decreasing
        hs = dec.scores
        assert all(hs[i] >= hs[i + 1] - 1e-12 for i in range(len(hs) - 1))
        # each h_i matches brute force on the correspondingly restricted matrix
        restricted = b.copy()
        for i, direction in enumerate(dec.directions):
            assert abs(hs[i] - fkk_norm_bruteforce(restricted, 2)) < 1e-9
            idx = sorted(dec.supports[i])
            restricted[idx, :] = 0.0
            restricted[:, idx] = 0.0


def test_greedy_support_size_bound():
    for _ in range(20):
        b = RNG.standard_normal((12, 12))
        k, r = 3, 3
        dec = greedy_decomposition(b, k, r)
        assert len(dec.support_union()) <= r * k * (k + 1)


def test_bilinear_bound():
    # equality case
    a = np.zeros((3, 3))
    a[0, 0] = 1.0
    e1 = np.array([1.0, 0.0, 0.0])
    assert sparse_bilinear_bound_check(a, e1, e1, 1, 1)
    assert sparse_bilinear_bound_check(a, np.zeros(3), np.zeros(3), 1, 1)
    for _ in range(1000):
        d, k, r = 10, 2, 3
        b = RNG.standard_normal((d, d))
        dec = greedy_decomposition(b, k, r)
        u = RNG.standard_normal(d) * RNG.uniform(0.1, 5.0)
        v = RNG.standard_normal(d) * RNG.uniform(0.1, 5.0)
        assert sparse_bilinear_bound_check(dec.composite, u, v, k, dec.r_produced)


def test_projector_distance_identity():
    # ||ww' - vv'||_F^2 == 2 - 2 (w.v)^2, and the two-sided euclidean relation
    for _ in range(1000):
        w = RNG.standard_normal(6)
        w /= np.linalg.norm(w)
        v = RNG.standard_normal(6)
        v /= np.linalg.norm(v)
        fro = np.linalg.norm(np.outer(w, w) - np.outer(v, v))
        assert abs(fro ** 2 - (2 - 2 * (w @ v) ** 2)) < 1e-10
        dist = np.linalg.norm(w - v)
        c1 = 0.99 * min(np.sqrt(2.0) * np.sqrt(max(1 - dist ** 2 / 4, 0.0)), 1.0)
        assert fro >= c1 * dist - 1e-9
        assert fro <= np.sqrt(2.0) * dist + 1e-9
