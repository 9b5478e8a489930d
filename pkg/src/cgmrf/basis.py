"""Orthonormal constraint basis construction.

Given a sparse k x n constraint matrix A of full row rank, builds an n x n
orthonormal change-of-basis T whose first k rows span the row space of A.
In the transformed coordinates x* = T x the constraints become axis-aligned:
A x = b is equivalent to x*_C = b* with C = {1..k}.

Two constructions are provided: a single SVD over the nonzero columns of A,
and a blocked variant that runs one small SVD per group of constraints with
mutually disjoint column support.  Block detection is connected components
on the bipartite row-column nonzero graph, which computes the same partition
as the fixed-point sweep over rows but in O(nnz).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import DimensionMismatch, RankDeficient
from .gmrf import Gmrf
from .policy import DEFAULT_POLICY, NumericPolicy
from .sparse_linalg import (NullSpaceBasis, as_csc, max_abs, svd_small,
                            triple_product)

__all__ = [
    "ConstraintSet",
    "ConstraintBasis",
    "BlockFactor",
    "find_blocks",
    "build_basis_svd",
    "build_basis_blocked",
    "identity_basis",
    "transform",
]


@dataclass
class ConstraintSet:
    """Sparse constraints A x = b with A of size k x n and full row rank.

    Row rank is enforced where every consumer passes through: basis
    construction raises RankDeficient per block.
    """

    A: sp.csc_matrix
    b: np.ndarray

    def __post_init__(self):
        self.A = as_csc(self.A)
        self.b = np.asarray(self.b, dtype=np.float64).reshape(-1)
        if self.b.shape[0] != self.A.shape[0]:
            raise DimensionMismatch(
                f"b has length {self.b.shape[0]}, A has {self.A.shape[0]} rows")

    @property
    def k(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]


def find_blocks(A) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split the rows of A into groups with pairwise disjoint column support.

    Returns a list of (row_indices, column_indices) pairs, one per connected
    component of the bipartite nonzero-pattern graph, ordered by smallest row
    index.  Column sets are pairwise disjoint and the row sets partition all
    rows; a single block is a valid outcome.
    """
    A = as_csc(A)
    k, n = A.shape
    csr = A.tocsr()
    row_nnz = np.diff(csr.indptr)
    if np.any(row_nnz == 0):
        raise RankDeficient("constraint matrix has an all-zero row")
    cols_used = np.unique(csr.indices)
    d = cols_used.size
    col_rank = np.full(n, -1, dtype=np.int64)
    col_rank[cols_used] = np.arange(d)
    # bipartite adjacency on k row-nodes + d column-nodes
    rows_of = np.repeat(np.arange(k), row_nnz)
    cols_of = col_rank[csr.indices] + k
    ones = np.ones(rows_of.size, dtype=np.int8)
    G = sp.coo_matrix((ones, (rows_of, cols_of)), shape=(k + d, k + d))
    ncomp, labels = connected_components(G.tocsr(), directed=False)
    blocks = {}
    for r in range(k):
        blocks.setdefault(labels[r], [[], []])[0].append(r)
    for j, c in enumerate(cols_used):
        blocks.setdefault(labels[k + j], [[], []])[1].append(c)
    out = []
    for lab, (rows, cols) in blocks.items():
        if rows:  # isolated column nodes cannot occur; guard anyway
            out.append((np.asarray(rows, dtype=np.int64),
                        np.asarray(cols, dtype=np.int64)))
    out.sort(key=lambda rc: rc[0][0])
    return out


@dataclass
class BlockFactor:
    """Per-block SVD of the restriction of A to one column group.

    rows/cols index into A; c_pos/u_pos are the destinations of the block's
    image and null rows inside T.  A[rows][:, cols] = U diag(S) Vt[:len(rows)].
    """

    rows: np.ndarray
    cols: np.ndarray
    c_pos: np.ndarray
    u_pos: np.ndarray
    U: np.ndarray
    S: np.ndarray


@dataclass
class ConstraintBasis:
    """Orthonormal T with index sets C = {0..k-1}, U = {k..n-1}.

    H = (A T^T)_CC is kept sparse (it is block structured) so that bases
    with tens of thousands of constraints stay cheap; b* = H^-1 b is solved
    blockwise through the stored SVD factors.
    """

    T: sp.csc_matrix
    k: int
    n: int
    H: sp.csc_matrix
    blocks: list[BlockFactor]
    method: str
    bstar: np.ndarray | None = None
    _T_csr: sp.csr_matrix | None = field(repr=False, default=None, compare=False)

    @property
    def c_idx(self) -> np.ndarray:
        return np.arange(self.k)

    @property
    def u_idx(self) -> np.ndarray:
        return np.arange(self.k, self.n)

    def _csr(self) -> sp.csr_matrix:
        if self._T_csr is None:
            self._T_csr = self.T.tocsr()
        return self._T_csr

    @property
    def T_C(self) -> sp.csr_matrix:
        return self._csr()[: self.k]

    @property
    def T_U(self) -> sp.csr_matrix:
        return self._csr()[self.k:]

    def solve_bstar(self, b: np.ndarray) -> np.ndarray:
        """b* = H^-1 b via the per-block factors H_block = U diag(S)."""
        b = np.asarray(b, dtype=np.float64).reshape(-1)
        if b.shape[0] != self.k:
            raise DimensionMismatch(f"b has length {b.shape[0]}, k = {self.k}")
        out = np.empty(self.k)
        for blk in self.blocks:
            out[blk.c_pos] = (blk.U.T @ b[blk.rows]) / blk.S
        return out

    def validate(self, A=None, policy: NumericPolicy = DEFAULT_POLICY) -> dict:
        """Orthonormality and alignment residuals; raises on violation."""
        G = self.T @ self.T.T - sp.identity(self.n, format="csc")
        orth = max_abs(G)
        res = {"orth": orth}
        if A is not None:
            A = as_csc(A)
            AT = (A @ self.T.T).tocsc()
            ualign = max_abs(AT[:, self.k:]) if self.k < self.n else 0.0
            res["u_align"] = ualign
            scale = max(max_abs(A), 1.0)
            if ualign > policy.orth_tol * scale:
                raise RankDeficient(f"A T^T not zero on U columns: {ualign:.3e}")
        if orth > policy.orth_tol:
            raise RankDeficient(f"T T^T deviates from identity by {orth:.3e}")
        return res


def _assemble(A: sp.csc_matrix, blocks, method: str,
              b: np.ndarray | None, policy: NumericPolicy) -> ConstraintBasis:
    k, n = A.shape
    csr = A.tocsr()
    trows, tcols, tvals = [], [], []
    hrows, hcols, hvals = [], [], []
    factors = []
    h = 0
    l = k
    for rows, cols in blocks:
        ki, di = rows.size, cols.size
        if di < ki:
            raise RankDeficient(
                f"block with rows {rows[:4]}... has {ki} rows but only {di} columns")
        Ad = csr[rows][:, cols].toarray()
        U, S, Vt = svd_small(Ad, policy=policy)
        if S[ki - 1] <= policy.rank_tol * S[0]:
            raise RankDeficient(
                f"block with rows {rows[:4]}... is rank deficient "
                f"(sigma_min/sigma_max = {S[ki-1]/S[0]:.3e})")
        c_pos = np.arange(h, h + ki)
        u_pos = np.arange(l, l + di - ki)
        pos = np.concatenate([c_pos, u_pos])
        trows.append(np.repeat(pos, di))
        tcols.append(np.tile(cols, di))
        tvals.append(Vt[:di].ravel())
        US = U * S[np.newaxis, :]
        hrows.append(np.repeat(rows, ki))
        hcols.append(np.tile(c_pos, ki))
        hvals.append(US.ravel())
        factors.append(BlockFactor(rows=rows, cols=cols, c_pos=c_pos,
                                   u_pos=u_pos, U=U, S=S[:ki]))
        h += ki
        l += di - ki
    # untouched variables keep their unit vectors
    d_full = np.concatenate([blk.cols for blk in factors]) if factors else np.array([], int)
    rest = np.setdiff1d(np.arange(n), d_full, assume_unique=False)
    if rest.size:
        trows.append(np.arange(l, l + rest.size))
        tcols.append(rest)
        tvals.append(np.ones(rest.size))
    T = sp.coo_matrix(
        (np.concatenate(tvals), (np.concatenate(trows), np.concatenate(tcols))),
        shape=(n, n)).tocsc()
    H = sp.coo_matrix(
        (np.concatenate(hvals), (np.concatenate(hrows), np.concatenate(hcols))),
        shape=(k, k)).tocsc()
    cb = ConstraintBasis(T=T, k=k, n=n, H=H, blocks=factors, method=method)
    if b is not None:
        cb.bstar = cb.solve_bstar(b)
    return cb


def _unpack(A, b):
    if isinstance(A, ConstraintSet):
        return A.A, A.b if b is None else np.asarray(b, float)
    return as_csc(A), b


def build_basis_svd(A, b=None, policy: NumericPolicy = DEFAULT_POLICY) -> ConstraintBasis:
    """Basis from one SVD over the nonzero columns of A.

    Accepts a ConstraintSet or a bare matrix; when a right-hand side is
    available b* = H^-1 b is computed once and stored.
    """
    A, b = _unpack(A, b)
    if A.nnz == 0:
        raise RankDeficient("constraint matrix is all zeros")
    rows = np.arange(A.shape[0])
    csr = A.tocsr()
    if np.any(np.diff(csr.indptr) == 0):
        raise RankDeficient("constraint matrix has an all-zero row")
    cols = np.unique(A.tocoo().col)
    return _assemble(A, [(rows, cols)], "svd", b, policy)


def build_basis_blocked(A, b=None, policy: NumericPolicy = DEFAULT_POLICY) -> ConstraintBasis:
    """Basis from one SVD per non-overlapping constraint group.

    Produces conditional distributions identical to build_basis_svd (the
    basis itself may differ); cost is the sum of the per-block SVD costs.
    """
    A, b = _unpack(A, b)
    if A.nnz == 0:
        raise RankDeficient("constraint matrix is all zeros")
    blocks = find_blocks(A)
    return _assemble(A, blocks, "blocked", b, policy)


def identity_basis(n: int) -> ConstraintBasis:
    """Degenerate k = 0 basis (no hard constraints): T = I."""
    T = sp.identity(n, format="csc")
    H = sp.csc_matrix((0, 0))
    return ConstraintBasis(T=T, k=0, n=n, H=H, blocks=[], method="identity",
                           bstar=np.zeros(0))


def transform(g: Gmrf, cb: ConstraintBasis, policy: NumericPolicy = DEFAULT_POLICY) -> Gmrf:
    """Map a field into the constraint basis: Q* = T Q T^T, mu* = T mu.

    The null-space basis (intrinsic fields) is carried along as T E, which
    stays orthonormal because T is.
    """
    if g.n != cb.n:
        raise DimensionMismatch(f"field has n = {g.n}, basis has n = {cb.n}")
    Q_star = triple_product(cb.T, g.Q, policy=policy)
    mu = None if g.mu is None else cb.T @ g.mu
    mu_c = None if g.mu_c is None else cb.T @ g.mu_c
    ns = None
    if g.nullspace is not None and g.nullspace.s:
        ns = NullSpaceBasis(cb.T @ g.nullspace.E)
    return Gmrf(Q=Q_star, mu=mu, mu_c=mu_c, nullspace=ns)
