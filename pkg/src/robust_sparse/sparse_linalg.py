"""Sparse vector/matrix norms, the (F,k,k) variational maximizer, and the
greedy orthogonal-support direction decomposition.

The central objects:

* ``sparse_norm_2k(x, k)``: max of v.x over k-sparse unit v, i.e. the root
  sum of the k largest squared entries.
* ``fkk_norm(A, k)``: the tractable relaxation of the k-sparse operator
  norm.  Pick the k rows whose (2,k) row norms are largest; the value is
  the Frobenius norm of the witnessing k x (<=k per row) mask, and the
  maximizer is the masked matrix rescaled to unit Frobenius norm.
* ``greedy_decomposition(B, k, r)``: repeatedly take the (F,k,k)
  maximizer, delete (zero out) the rows and columns it touched, and
  recurse.  The r maximizers have pairwise disjoint supports, so their
  sum is block diagonal after relabeling: Frobenius norm sqrt(r), operator
  norm at most 1.

All top-k selections break ties by lowest index so results are
reproducible across platforms.

Exponential-time oracles for small dimensions live here too; they guard
their input size and exist to cross-check the polynomial-time paths.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import ParameterError

OP_NORM_ORACLE_MAX_DIM = 14


def _check_k(k: int, d: int) -> None:
    if not 1 <= k <= d:
        raise ParameterError(f"sparsity k={k} must be in [1, {d}]")


def top_k_indices(magnitudes: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest entries, ties broken by lowest index."""
    m = np.asarray(magnitudes, dtype=float)
    order = np.lexsort((np.arange(m.size), -m))
    return order[:k]


def sparse_norm_2k(x: np.ndarray, k: int) -> float:
    """(2,k) norm: root sum of the k largest squared entries of x."""
    x = np.asarray(x, dtype=float).ravel()
    _check_k(k, x.size)
    sq = np.square(x)
    if k == x.size:
        return float(np.sqrt(sq.sum()))
    part = np.partition(sq, x.size - k)[x.size - k:]
    return float(np.sqrt(part.sum()))


def truncate_top_k(x: np.ndarray, k: int) -> np.ndarray:
    """Zero all but the k largest-magnitude entries (lowest index wins ties)."""
    x = np.asarray(x, dtype=float).ravel()
    _check_k(k, x.size)
    keep = top_k_indices(np.abs(x), k)
    out = np.zeros_like(x)
    out[keep] = x[keep]
    return out


@dataclass
class SparseDirection:
    """A unit-Frobenius matrix with at most k nonzero rows, each holding at
    most k nonzero entries; the witness of one (F,k,k) maximization."""

    matrix: np.ndarray
    row_support: tuple[int, ...]
    col_support_per_row: dict[int, tuple[int, ...]]
    score: float
    is_null: bool = False

    def support(self) -> frozenset[int]:
        """Rows and columns in which the matrix has nonzero entries."""
        cols: set[int] = set()
        for c in self.col_support_per_row.values():
            cols.update(c)
        return frozenset(set(self.row_support) | cols)


def _null_direction(d: int) -> SparseDirection:
    m = np.zeros((d, d))
    m[0, 0] = 1.0
    return SparseDirection(matrix=m, row_support=(), col_support_per_row={},
                           score=0.0, is_null=True)


def fkk_norm(A: np.ndarray, k: int) -> tuple[float, SparseDirection]:
    """(F,k,k) norm of a square matrix with its maximizing direction.

    Value: sqrt of the max over k-row subsets S of sum_{i in S} of the
    squared (2,k) norm of row i.  The maximizer is the witnessing masked
    matrix divided by its Frobenius norm, so <A, maximizer> equals the
    value.  An all-zero matrix gets value 0 and a flagged null direction.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ParameterError("fkk_norm expects a square matrix")
    d = A.shape[0]
    _check_k(k, d)

    mag = np.abs(A)
    row_cols: list[np.ndarray] = []
    row_vals = np.zeros(d)
    for i in range(d):
        ci = top_k_indices(mag[i], k)
        ci = ci[mag[i, ci] > 0]          # keep supports minimal
        row_cols.append(ci)
        row_vals[i] = float(np.square(A[i, ci]).sum())

    rows = top_k_indices(row_vals, k)
    rows = rows[row_vals[rows] > 0]
    value = float(np.sqrt(row_vals[rows].sum()))
    if value == 0.0:
        return 0.0, _null_direction(d)

    B = np.zeros_like(A)
    col_support: dict[int, tuple[int, ...]] = {}
    for i in rows:
        ci = row_cols[i]
        B[i, ci] = A[i, ci]
        col_support[int(i)] = tuple(int(c) for c in ci)
    B /= value
    direction = SparseDirection(matrix=B,
                                row_support=tuple(int(i) for i in rows),
                                col_support_per_row=col_support,
                                score=value)
    return value, direction


def fkk_norm_bruteforce(A: np.ndarray, k: int) -> float:
    """Exhaustive (F,k,k) value: enumerate every k-row subset and, per row,
    every k-column subset.  Test oracle, exponential in d."""
    A = np.asarray(A, dtype=float)
    d = A.shape[0]
    _check_k(k, d)
    if d > 10:
        raise ParameterError("brute-force oracle limited to d <= 10")
    best_row = np.zeros(d)
    for i in range(d):
        best = 0.0
        for cols in combinations(range(d), k):
            best = max(best, float(np.square(A[i, list(cols)]).sum()))
        best_row[i] = best
    best_total = 0.0
    for rows in combinations(range(d), k):
        best_total = max(best_total, float(best_row[list(rows)].sum()))
    return float(np.sqrt(best_total))


def sparse_op_norm_oracle(A: np.ndarray, k: int) -> float:
    """k-sparse operator norm by support enumeration: max over k-subsets S
    of the largest singular value of the principal submatrix A[S, S].

    Exponential in d; refuses d > OP_NORM_ORACLE_MAX_DIM.
    """
    A = np.asarray(A, dtype=float)
    d = A.shape[0]
    _check_k(k, d)
    if d > OP_NORM_ORACLE_MAX_DIM:
        raise ParameterError(
            f"op-norm oracle refuses d={d} > {OP_NORM_ORACLE_MAX_DIM}")
    best = 0.0
    for sub in combinations(range(d), k):
        idx = list(sub)
        s = np.linalg.svd(A[np.ix_(idx, idx)], compute_uv=False)
        best = max(best, float(s[0]))
    return best


@dataclass
class SparseDirectionSet:
    """Greedy maximizers A_1..A_r with disjoint supports H_1..H_r."""

    directions: list[SparseDirection] = field(default_factory=list)
    supports: list[frozenset[int]] = field(default_factory=list)
    g_value: float = 0.0
    composite: np.ndarray | None = None

    @property
    def scores(self) -> list[float]:
        return [dd.score for dd in self.directions]

    @property
    def r_produced(self) -> int:
        return len(self.directions)

    def support_union(self) -> list[int]:
        out: set[int] = set()
        for s in self.supports:
            out.update(s)
        return sorted(out)


def greedy_decomposition(B: np.ndarray, k: int, r: int) -> SparseDirectionSet:
    """Iterated (F,k,k) maximizers of B on disjoint supports.

    Direction i maximizes over B with the rows AND columns of
    H_1 | ... | H_{i-1} zeroed out.  Stops early when the restricted
    matrix is all zero.  When fewer than k unused rows remain the
    sparsity is clamped to what is left.
    """
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise ParameterError("greedy_decomposition expects a square matrix")
    d = B.shape[0]
    _check_k(k, d)
    if r < 1:
        raise ParameterError("r must be >= 1")

    residual = B.copy()
    used = np.zeros(d, dtype=bool)
    out = SparseDirectionSet(composite=np.zeros((d, d)))
    for _ in range(r):
        remaining = d - int(used.sum())
        if remaining == 0:
            break
        k_eff = min(k, remaining)
        value, direction = fkk_norm(residual, k_eff)
        if direction.is_null:
            break
        h = direction.support()
        out.directions.append(direction)
        out.supports.append(h)
        out.g_value += value
        out.composite += direction.matrix
        idx = list(h)
        used[idx] = True
        residual[idx, :] = 0.0
        residual[:, idx] = 0.0
    return out


def sparse_bilinear_bound_check(composite: np.ndarray, u: np.ndarray,
                                v: np.ndarray, k: int, r: int,
                                tol: float = 1e-9) -> bool:
    """Whether |u' A v| <= r * ||u||_{2,k} * ||v||_{2,k} + tol for a
    composite A made of r unit-Frobenius blocks with k-row/k-entry supports.
    Always true for composites built by greedy_decomposition; exposed as a
    test utility."""
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    lhs = abs(float(u @ composite @ v))
    if not np.any(u) or not np.any(v):
        return lhs <= tol
    rhs = r * sparse_norm_2k(u, k) * sparse_norm_2k(v, k)
    return lhs <= rhs + tol
