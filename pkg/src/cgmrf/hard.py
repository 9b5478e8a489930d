"""Conditioning on hard constraints A x = b.

Contains the two classical routes (closed-form dense conditioning and
conditioning by kriging), the transformed-basis likelihood of the
constrained observations, the conditional law in the transformed basis,
and the sampler that enforces the constraints exactly.  The transformed
route works for intrinsic fields as well, where the classical formulas
break down because Q has no inverse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .basis import ConstraintBasis, ConstraintSet, transform
from .errors import (DenseConstraintGram, DimensionMismatch,
                     NotPositiveDefinite, RankAssumptionViolated)
from .gmrf import Gmrf, make_rng, sample
from .policy import DEFAULT_POLICY, NumericPolicy
from .sparse_linalg import (CholFactor, NullSpaceBasis, log_pseudo_det,
                            pseudo_factor, pseudo_solve, tri_solve)

__all__ = [
    "ConditionalGmrf",
    "oracle_conditional",
    "krige_sample",
    "loglik_standard",
    "loglik_transformed",
    "conditional",
    "sample_conditional",
]

LOG_2PI = math.log(2.0 * math.pi)


# ---------------------------------------------------------------- baselines

def oracle_conditional(g: Gmrf, cs: ConstraintSet, dense_cap: int = 2000):
    """Dense closed-form conditional law (the test oracle for everything else).

    mu_hat = mu - Q^-1 A^T (A Q^-1 A^T)^-1 (A mu - b)
    Sigma_hat = Q^-1 - Q^-1 A^T (A Q^-1 A^T)^-1 A Q^-1
    """
    if g.n > dense_cap:
        raise DimensionMismatch(f"n = {g.n} exceeds dense cap {dense_cap}")
    if g.is_intrinsic:
        raise NotPositiveDefinite("dense oracle requires a proper precision")
    Qd = g.Q.toarray()
    try:
        c = sla.cho_factor(Qd)
    except sla.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    Sigma = sla.cho_solve(c, np.eye(g.n))
    A = cs.A.toarray()
    W = Sigma @ A.T
    M = A @ W
    mu = g.natural_mean()
    sol = np.linalg.solve(M, np.column_stack([A @ mu - cs.b]))
    mu_hat = mu - W @ sol[:, 0]
    Sigma_hat = Sigma - W @ np.linalg.solve(M, W.T)
    return mu_hat, 0.5 * (Sigma_hat + Sigma_hat.T)


def krige_sample(g: Gmrf, cs: ConstraintSet, z,
                 factor: CholFactor | None = None,
                 policy: NumericPolicy = DEFAULT_POLICY) -> np.ndarray:
    """Conditioning by kriging: sample x, then project onto {A x = b}.

    x* = x - Q^-1 A^T (A Q^-1 A^T)^-1 (A x - b).  One sparse factorization,
    k + 2 solves, one dense k x k factorization.
    """
    F = factor if factor is not None else g.factor(policy)
    if isinstance(z, (int, np.integer, np.random.Generator)):
        z = make_rng(z).standard_normal(g.n)
    z = np.asarray(z, dtype=np.float64)
    x = tri_solve(F, z, "R")
    mu = g.natural_mean(policy)
    x = x + (mu if x.ndim == 1 else mu[:, None])
    W = F.solve(cs.A.T.toarray())
    M = cs.A @ W
    try:
        c = sla.cho_factor(0.5 * (M + M.T))
    except sla.LinAlgError as exc:
        raise DenseConstraintGram(str(exc)) from exc
    b = cs.b if x.ndim == 1 else cs.b[:, None]
    # one refinement pass keeps the residual near machine precision for
    # large k, where a single correction accumulates O(k) roundoff
    for _ in range(2):
        x = x - W @ sla.cho_solve(c, cs.A @ x - b)
    return x


def loglik_standard(g: Gmrf, cs: ConstraintSet, x: np.ndarray | None = None,
                    factor: CholFactor | None = None,
                    policy: NumericPolicy = DEFAULT_POLICY) -> float:
    """Log-likelihood of the constrained observations by the classical route.

    Returns log pi_{AX}(b) for A X ~ N(A mu, A Q^-1 A^T).  When a feasible x
    is supplied, returns the full conditional log-density
    log pi(x | Ax = b) = -1/2 log|A A^T| + log pi(x) - log pi_{AX}(b)
    (-inf when x violates the constraints beyond policy.residual_tol).
    """
    if g.is_intrinsic:
        raise NotPositiveDefinite("standard route requires a proper precision")
    F = factor if factor is not None else g.factor(policy)
    A = cs.A
    W = F.solve(A.T.toarray())
    M = 0.5 * ((A @ W) + (A @ W).T)
    try:
        c = sla.cho_factor(M)
    except sla.LinAlgError as exc:
        raise DenseConstraintGram(str(exc)) from exc
    logdet_M = 2.0 * float(np.log(np.diag(c[0])).sum())
    mu = g.natural_mean(policy)
    r = cs.b - A @ mu
    quad = float(r @ sla.cho_solve(c, r))
    lp_b = -0.5 * cs.k * LOG_2PI - 0.5 * logdet_M - 0.5 * quad
    if x is None:
        return lp_b
    x = np.asarray(x, dtype=np.float64)
    viol = np.max(np.abs(A @ x - cs.b), initial=0.0)
    if viol > policy.residual_tol * max(1.0, float(np.max(np.abs(cs.b), initial=0.0))):
        return -math.inf
    G = (A @ A.T).toarray()
    logdet_AAt = 2.0 * float(np.log(np.diag(sla.cho_factor(G)[0])).sum())
    from .gmrf import log_density
    return -0.5 * logdet_AAt + log_density(g, x, policy) - lp_b


# -------------------------------------------------- transformed-basis route

def _logdet_AAt(cb: ConstraintBasis) -> float:
    """log |A A^T| = 2 sum(log sigma) over all block singular values."""
    return 2.0 * sum(float(np.log(blk.S).sum()) for blk in cb.blocks)


def _null_basis_U(g: Gmrf, cb: ConstraintBasis, policy: NumericPolicy):
    """k0 = rank(T_C E) and an orthonormal basis of ker(Q*_UU).

    rank(A E) equals rank(T_C E) because A = H T_C with H invertible.  The
    kernel of Q*_UU is T_U E N where N spans ker(A E): exactly the null
    directions of Q that are orthogonal to the constraint rows survive the
    restriction to the U block (T_U maps them isometrically, so the result
    is already orthonormal).
    """
    if not g.is_intrinsic:
        return 0, None
    E = g.nullspace.E
    s = E.shape[1]
    # T and E are both orthonormal, so all singular values below are in [0, 1]
    # and the rank threshold is absolute
    TCE = cb.T_C @ E if cb.k else np.zeros((0, s))
    if TCE.size:
        _, sv, Vt = np.linalg.svd(TCE, full_matrices=True)
        k0 = int(np.sum(sv > policy.rank_tol))
        N = Vt[k0:].T
    else:
        k0 = 0
        N = np.eye(s)
    if N.shape[1] == 0:
        return k0, None
    E_U = np.asarray(cb.T_U @ (E @ N))
    gram = E_U.T @ E_U - np.eye(E_U.shape[1])
    if np.abs(gram).max() > 1e-8:
        raise RankAssumptionViolated(
            "null directions orthogonal to the constraints did not map "
            "isometrically into the U block")
    return k0, NullSpaceBasis(E_U)


def loglik_transformed_parts(*, k: int, b_star, mu_star_C,
                             Q_CC, Q_UC, Q_UU, logdet_Q: float,
                             logdet_AAt: float,
                             E_star_U: NullSpaceBasis | None = None,
                             policy: NumericPolicy = DEFAULT_POLICY) -> float:
    """Likelihood of {A X = b} from pre-sliced transformed pieces.

    log pi_{AX}(b) = -k/2 log 2pi - 1/2 log|A A^T| + 1/2 log|Q|+
                     - 1/2 log|Q*_UU|+ - 1/2 (b*-mu*_C)^T Q*_{C|U} (b*-mu*_C)

    with Q*_{C|U} applied implicitly through one solve against Q*_UU.
    Separated from loglik_transformed so callers that assemble Q* slices
    incrementally (parameter sweeps) skip the triple product.
    """
    v = np.asarray(b_star, dtype=np.float64) - np.asarray(mu_star_C, dtype=np.float64)
    quad = float(v @ (Q_CC @ v)) if k else 0.0
    if Q_UU.shape[0]:
        w = Q_UC @ v
        u = pseudo_solve(Q_UU, E_star_U, w, policy=policy)
        quad -= float(w @ u)
        ld_UU = log_pseudo_det(Q_UU, E_star_U, policy=policy)
    else:
        ld_UU = 0.0
    return (-0.5 * k * LOG_2PI - 0.5 * logdet_AAt
            + 0.5 * logdet_Q - 0.5 * ld_UU - 0.5 * quad)


def _transformed_slices(g: Gmrf, cb: ConstraintBasis, policy: NumericPolicy):
    gt = transform(g, cb, policy)
    k = cb.k
    Qs = gt.Q.tocsr()
    Q_CC = Qs[:k, :k].tocsc()
    Q_UC = Qs[k:, :k].tocsc()
    Q_UU = Qs[k:, k:].tocsc()
    mu_star = gt.natural_mean(policy) if gt.mu is not None else None
    if mu_star is None:
        # canonical-only intrinsic field: recover a representative mean
        mu = g.natural_mean(policy)
        mu_star = cb.T @ mu
    return Q_CC, Q_UC, Q_UU, mu_star


def loglik_transformed(g: Gmrf, cb: ConstraintBasis, b,
                       policy: NumericPolicy = DEFAULT_POLICY) -> float:
    """Log pi_{AX}(b) through the constraint basis (proper or intrinsic Q)."""
    b_star = cb.solve_bstar(b)
    Q_CC, Q_UC, Q_UU, mu_star = _transformed_slices(g, cb, policy)
    k0, E_U = _null_basis_U(g, cb, policy)
    logdet_Q = (log_pseudo_det(g.Q, g.nullspace, policy=policy)
                if g.is_intrinsic else g.factor(policy).logdet)
    return loglik_transformed_parts(
        k=cb.k, b_star=b_star, mu_star_C=mu_star[:cb.k],
        Q_CC=Q_CC, Q_UC=Q_UC, Q_UU=Q_UU, logdet_Q=logdet_Q,
        logdet_AAt=_logdet_AAt(cb), E_star_U=E_U, policy=policy)


# ----------------------------------------------------------- conditional law

@dataclass
class ConditionalGmrf:
    """Law of X | A X = b in the transformed basis.

    Carries what repeated sampling needs: the factor of Q*_UU (or of its
    null-space-augmented repair for intrinsic fields), the canonical
    conditional mean of X*_U, and the basis.  The full-size precision
    Q_cond = T_U^T Q*_UU T_U (rank n - s - (k - k0)) is materialized lazily.
    """

    basis: ConstraintBasis
    b_star: np.ndarray
    mu_tilde: np.ndarray
    mu_tilde_star_U: np.ndarray
    k0: int
    Q_UU: sp.csc_matrix
    canon_U: np.ndarray
    factor_UU: CholFactor
    E_star_U: NullSpaceBasis | None = None
    _Q_cond: sp.csc_matrix | None = field(repr=False, default=None, compare=False)

    @property
    def n(self) -> int:
        return self.basis.n

    @property
    def Q_cond(self) -> sp.csc_matrix:
        if self._Q_cond is None:
            TU = self.basis.T_U.tocsc()
            self._Q_cond = (TU.T @ self.Q_UU @ TU).tocsc()
        return self._Q_cond

    def dense_covariance(self) -> np.ndarray:
        """T_U^T (Q*_UU)^-1 T_U (dense; small-n diagnostics and tests)."""
        TU = self.basis.T_U.toarray()
        if self.Q_UU.shape[0] == 0:
            return np.zeros((self.n, self.n))
        if self.E_star_U is not None:
            inv = np.column_stack([
                pseudo_solve(self.Q_UU, self.E_star_U, e, factor=self.factor_UU)
                for e in np.eye(self.Q_UU.shape[0])])
        else:
            inv = self.factor_UU.solve(np.eye(self.Q_UU.shape[0]))
        return TU.T @ inv @ TU

    @classmethod
    def from_parts(cls, basis: ConstraintBasis, b_star, mu_star,
                   Q_UC, Q_UU, k0: int = 0,
                   E_star_U: NullSpaceBasis | None = None,
                   policy: NumericPolicy = DEFAULT_POLICY) -> "ConditionalGmrf":
        k = basis.k
        mu_star_C = mu_star[:k]
        mu_star_U = mu_star[k:]
        d = b_star - mu_star_C
        canon_U = Q_UU @ mu_star_U - (Q_UC @ d if k else 0.0)
        F = pseudo_factor(Q_UU, E_star_U, policy=policy)
        if E_star_U is not None:
            mt_U = E_star_U.project_out(F.solve(E_star_U.project_out(canon_U)))
            # the improper directions keep the prior mean's component
            mt_U = mt_U + E_star_U.E @ (E_star_U.E.T @ mu_star_U)
        else:
            mt_U = F.solve(canon_U)
        mu_tilde = basis.T.T @ np.concatenate([b_star, mt_U])
        return cls(basis=basis, b_star=np.asarray(b_star, float),
                   mu_tilde=mu_tilde, mu_tilde_star_U=mt_U, k0=k0,
                   Q_UU=Q_UU, canon_U=canon_U, factor_UU=F, E_star_U=E_star_U)


def conditional(g: Gmrf, cb: ConstraintBasis, b,
                policy: NumericPolicy = DEFAULT_POLICY) -> ConditionalGmrf:
    """Conditional law X | A X = b via the constraint basis.

    mu_tilde = T^T [b*; mu*_U - (Q*_UU)^+ Q*_UC (b* - mu*_C)]; the proper
    case uses a plain inverse.
    """
    b_star = cb.solve_bstar(b)
    _, Q_UC, Q_UU, mu_star = _transformed_slices(g, cb, policy)
    k0, E_U = _null_basis_U(g, cb, policy)
    return ConditionalGmrf.from_parts(cb, b_star, mu_star, Q_UC, Q_UU,
                                      k0=k0, E_star_U=E_U, policy=policy)


def sample_conditional(cg: ConditionalGmrf, z,
                       policy: NumericPolicy = DEFAULT_POLICY) -> np.ndarray:
    """Draw X | A X = b: factor Q*_UU, whiten the canonical mean, color z,
    prepend b*, and rotate back with T^T.  A X = b holds exactly; z = 0
    returns mu_tilde.  z may be an (n-k,) vector, an (n-k, m) matrix of
    draws, a seed, or a Generator.
    """
    nu = cg.Q_UU.shape[0]
    if isinstance(z, (int, np.integer, np.random.Generator)):
        z = make_rng(z).standard_normal(nu)
    z = np.asarray(z, dtype=np.float64)
    if z.shape[0] != nu:
        raise DimensionMismatch(f"z has leading dim {z.shape[0]}, need {nu}")
    single = z.ndim == 1
    F = cg.factor_UU
    if nu:
        m_star = tri_solve(F, cg.canon_U, "Rt")
        xu = tri_solve(F, (m_star if single else m_star[:, None]) + z, "R")
        if cg.E_star_U is not None:
            # intrinsic: keep only the proper component of the fluctuation,
            # pinning the improper directions at the conditional mean
            mt = cg.mu_tilde_star_U
            fluct = cg.E_star_U.project_out(xu - (mt if single else mt[:, None]))
            xu = fluct + (mt if single else mt[:, None])
    else:
        xu = z[:0] if single else z[:0, :]
    bs = cg.b_star if single else np.repeat(cg.b_star[:, None], z.shape[1], axis=1)
    x_star = np.concatenate([bs, xu], axis=0)
    return cg.basis.T.T @ x_star
