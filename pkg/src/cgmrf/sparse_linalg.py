"""Sparse and small-dense linear-algebra kernels.

Everything downstream builds on the routines here: sparse symmetric
factorization (SuperLU run in symmetric no-pivot mode, so the factor is a
genuine Cholesky factor of the permuted matrix), triangular solves,
log-(pseudo-)determinants, a deterministic small dense SVD, and
null-space-aware semi-definite solves.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import reverse_cuthill_mckee
from scipy.sparse.linalg import splu, spsolve_triangular

from .errors import ConvergenceFailure, DimensionMismatch, NotPositiveDefinite
from .policy import DEFAULT_POLICY, NumericPolicy

__all__ = [
    "CholFactor",
    "NullSpaceBasis",
    "as_csc",
    "cholesky",
    "tri_solve",
    "svd_small",
    "pseudo_solve",
    "log_pseudo_det",
    "triple_product",
    "symmetrize",
]


def as_csc(M) -> sp.csc_matrix:
    """Coerce array-like / any sparse format to csc with float64 values."""
    if sp.issparse(M):
        out = M.tocsc()
    else:
        out = sp.csc_matrix(np.atleast_2d(np.asarray(M, dtype=np.float64)))
    if out.dtype != np.float64:
        out = out.astype(np.float64)
    out.sum_duplicates()
    return out


def symmetrize(M: sp.spmatrix) -> sp.csc_matrix:
    """Return (M + M^T)/2; makes roundoff-level asymmetry exactly zero."""
    M = as_csc(M)
    return ((M + M.T) * 0.5).tocsc()


def max_abs(M) -> float:
    if sp.issparse(M):
        return 0.0 if M.nnz == 0 else float(abs(M).max())
    M = np.asarray(M)
    return 0.0 if M.size == 0 else float(np.abs(M).max())


@dataclass
class CholFactor:
    """Upper-triangular factor R with Q[perm][:, perm] = R^T R.

    logdet is log det(Q) = 2 * sum(log diag(R)).  The SuperLU object is kept
    for fast full solves; R itself is used for half solves.
    """

    R: sp.csr_matrix
    perm: np.ndarray
    logdet: float
    n: int
    _lu: object = field(repr=False, default=None)
    _iperm: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self._iperm is None:
            self._iperm = np.argsort(self.perm)

    def solve(self, v: np.ndarray) -> np.ndarray:
        """Full solve Q x = v (accepts a matrix of right-hand sides)."""
        v = np.asarray(v, dtype=np.float64)
        if v.shape[0] != self.n:
            raise DimensionMismatch(f"rhs has leading dim {v.shape[0]}, factor is {self.n}")
        return self._lu.solve(v)


def cholesky(Q, ordering: str = "mmd", policy: NumericPolicy = DEFAULT_POLICY) -> CholFactor:
    """Sparse Cholesky of a symmetric positive definite matrix.

    ordering: "mmd" (minimum degree, default), "rcm", or "natural".  The
    ordering is pluggable because downstream cost claims depend only on
    sparsity, not on one specific fill-reducing heuristic.

    Raises NotPositiveDefinite on a zero/negative pivot (relative tolerance
    policy.pivot_tol), which is the signature of an intrinsic precision
    passed where a proper one is required.
    """
    Q = as_csc(Q)
    n, m = Q.shape
    if n != m:
        raise DimensionMismatch(f"matrix is {n}x{m}, expected square")
    diag = Q.diagonal()
    pivot_floor = policy.pivot_tol * max(diag.max(initial=0.0), 0.0)

    if ordering == "rcm":
        pre = np.asarray(reverse_cuthill_mckee(Q.tocsr(), symmetric_mode=True))
        Qw = Q[pre][:, pre].tocsc()
        spec = "NATURAL"
    elif ordering == "natural":
        pre = np.arange(n)
        Qw = Q
        spec = "NATURAL"
    elif ordering == "mmd":
        pre = np.arange(n)
        Qw = Q
        spec = "MMD_AT_PLUS_A"
    else:
        raise ValueError(f"unknown ordering {ordering!r}")

    try:
        lu = splu(Qw, permc_spec=spec, diag_pivot_thresh=0.0,
                  options=dict(SymmetricMode=True))
    except RuntimeError as exc:  # "Factor is exactly singular"
        raise NotPositiveDefinite(str(exc)) from exc

    d = lu.U.diagonal()
    if np.any(d <= pivot_floor):
        bad = int(np.argmax(d <= pivot_floor))
        raise NotPositiveDefinite(
            f"pivot {d[bad]:.3e} at position {bad} below tolerance {pivot_floor:.3e}")

    # L U = Qw[q][:, q] with q = argsort(perm_c); compose with the pre-permutation
    q = np.argsort(lu.perm_c)
    perm = pre[q]
    R = (sp.diags(1.0 / np.sqrt(d)) @ lu.U).tocsr()
    logdet = float(np.log(d).sum())
    return CholFactor(R=R, perm=perm, logdet=logdet, n=n, _lu=lu)


def tri_solve(F: CholFactor, v: np.ndarray, side: str = "R") -> np.ndarray:
    """Triangular solve against one half of the factor, permutation included.

    side "Rt": returns R^-T (P v)    (whitening direction)
    side "R" : returns P^T (R^-1 v)  (coloring direction)

    Composing `tri_solve(F, tri_solve(F, v, "Rt"), "R")` reproduces Q^-1 v.
    Accepts a matrix of stacked right-hand sides.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.shape[0] != F.n:
        raise DimensionMismatch(f"rhs has leading dim {v.shape[0]}, factor is {F.n}")
    if side in ("Rt", "RT", "rt"):
        return spsolve_triangular(F.R.T.tocsr(), v[F.perm], lower=True)
    if side in ("R", "r"):
        x = spsolve_triangular(F.R, v, lower=False)
        out = np.empty_like(x)
        out[F.perm] = x
        return out
    raise ValueError(f"side must be 'R' or 'Rt', got {side!r}")


def svd_small(M, policy: NumericPolicy = DEFAULT_POLICY):
    """Dense SVD with a deterministic sign convention.

    Each row of V^T gets its largest-magnitude entry positive (first such
    entry on exact ties); the matching column of U is flipped along with it,
    so M = U diag(S) V^T is preserved and the output is a pure function of M.
    """
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    if M.shape[0] > policy.dense_block_cap:
        raise DimensionMismatch(
            f"dense block has {M.shape[0]} rows, cap is {policy.dense_block_cap}")
    try:
        U, S, Vt = np.linalg.svd(M, full_matrices=True)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    r = min(M.shape)
    for i in range(Vt.shape[0]):
        j = int(np.argmax(np.abs(Vt[i])))
        if Vt[i, j] < 0:
            Vt[i] = -Vt[i]
            if i < r:
                U[:, i] = -U[:, i]
    return U, S, Vt


@dataclass
class NullSpaceBasis:
    """Column-orthonormal E with span(E) = ker(Q)."""

    E: np.ndarray

    def __post_init__(self):
        self.E = np.atleast_2d(np.asarray(self.E, dtype=np.float64))
        if self.E.shape[0] < self.E.shape[1]:
            raise DimensionMismatch("null-space basis must be tall (n x s)")

    @property
    def s(self) -> int:
        return self.E.shape[1]

    def project_out(self, v: np.ndarray) -> np.ndarray:
        """(I - E E^T) v."""
        if self.s == 0:
            return np.asarray(v, dtype=np.float64)
        return v - self.E @ (self.E.T @ v)

    def validate(self, Q=None, policy: NumericPolicy = DEFAULT_POLICY):
        g = self.E.T @ self.E - np.eye(self.s)
        if max_abs(g) > 1e-12:
            raise DimensionMismatch("null-space basis is not orthonormal")
        if Q is not None and self.s:
            r = max_abs(as_csc(Q) @ self.E)
            if r > policy.residual_tol * max(max_abs(Q), 1.0):
                raise DimensionMismatch("claimed null space is not annihilated by Q")


def _augmented(Q: sp.csc_matrix, E: NullSpaceBasis):
    """Q + tau E E^T with tau = mean(diag Q); exact rank repair when E spans ker(Q)."""
    tau = float(Q.diagonal().mean())
    if tau <= 0:
        tau = 1.0
    Qa = (Q + tau * sp.csc_matrix(E.E @ E.E.T)).tocsc()
    return Qa, tau


def pseudo_solve(Q, E: NullSpaceBasis | None, v: np.ndarray,
                 policy: NumericPolicy = DEFAULT_POLICY,
                 factor: CholFactor | None = None) -> np.ndarray:
    """x = Q^+ v for symmetric positive semi-definite Q with ker(Q) = span(E).

    Realized as a solve with the null-space-augmented matrix Q + tau E E^T
    applied to the projected right-hand side, followed by projecting the
    result back onto range(Q).  `factor` may carry a precomputed factor of
    the augmented matrix (obtainable from pseudo_factor).
    """
    Q = as_csc(Q)
    v = np.asarray(v, dtype=np.float64)
    if E is None or E.s == 0:
        F = factor if factor is not None else cholesky(Q, policy=policy)
        return F.solve(v)
    if factor is None:
        Qa, _ = _augmented(Q, E)
        factor = cholesky(Qa, policy=policy)
    x = factor.solve(E.project_out(v))
    return E.project_out(x)


def pseudo_factor(Q, E: NullSpaceBasis | None,
                  policy: NumericPolicy = DEFAULT_POLICY) -> CholFactor:
    """Factor reusable across pseudo_solve calls (of Q itself when E is empty)."""
    Q = as_csc(Q)
    if E is None or E.s == 0:
        return cholesky(Q, policy=policy)
    Qa, _ = _augmented(Q, E)
    return cholesky(Qa, policy=policy)


def log_pseudo_det(Q, E: NullSpaceBasis | None,
                   policy: NumericPolicy = DEFAULT_POLICY) -> float:
    """Sum of log of the strictly positive eigenvalues of Q.

    Computed as logdet(Q + tau E E^T) - s * log(tau): the augmentation moves
    the s zero eigenvalues to exactly tau and leaves the rest untouched.
    """
    Q = as_csc(Q)
    if E is None or E.s == 0:
        return cholesky(Q, policy=policy).logdet
    Qa, tau = _augmented(Q, E)
    return cholesky(Qa, policy=policy).logdet - E.s * float(np.log(tau))


def triple_product(T, Q, policy: NumericPolicy = DEFAULT_POLICY) -> sp.csc_matrix:
    """T Q T^T as a sparse symmetric matrix.

    The result is symmetrized exactly and entries below policy.drop_tol in
    absolute value are dropped.
    """
    T = as_csc(T)
    Q = as_csc(Q)
    if T.shape[1] != Q.shape[0] or Q.shape[0] != Q.shape[1]:
        raise DimensionMismatch(f"T is {T.shape}, Q is {Q.shape}")
    M = (T @ Q) @ T.T
    M = symmetrize(M)
    if M.nnz:
        M.data[np.abs(M.data) < policy.drop_tol] = 0.0
        M.eliminate_zeros()
    return M
