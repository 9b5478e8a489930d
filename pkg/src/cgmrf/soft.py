"""Hard constraints plus noisy linear observations.

Hierarchical model: X is a (possibly intrinsic) GMRF subject to A X = b,
observed through Y ~ N(B X, sigma2 * I).  Provides the marginal
log-likelihood of Y given the hard constraints, the Gaussian posterior of X
given both, and a posterior sampler that keeps A X = b exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .basis import ConstraintBasis
from .errors import DimensionMismatch
from .gmrf import Gmrf, make_rng
from .hard import _null_basis_U, _transformed_slices, LOG_2PI
from .policy import DEFAULT_POLICY, NumericPolicy
from .sparse_linalg import (CholFactor, NullSpaceBasis, as_csc,
                            log_pseudo_det, pseudo_factor, pseudo_solve,
                            tri_solve)

__all__ = ["SoftObservations", "PosteriorGmrf", "posterior", "loglik_soft",
           "sample_posterior"]


@dataclass
class SoftObservations:
    """Observations y of B x under iid Gaussian noise with variance sigma2."""

    B: sp.csc_matrix
    y: np.ndarray
    sigma2: float

    def __post_init__(self):
        self.B = as_csc(self.B)
        self.y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        if self.y.shape[0] != self.B.shape[0]:
            raise DimensionMismatch(
                f"y has length {self.y.shape[0]}, B has {self.B.shape[0]} rows")
        if self.B.shape[0] > self.B.shape[1]:
            raise DimensionMismatch("more observations than variables (m > n)")
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")

    @property
    def m(self) -> int:
        return self.B.shape[0]


@dataclass
class _SoftParts:
    """Shared intermediates of the marginal-likelihood and posterior paths."""

    k: int
    b_star: np.ndarray
    y_star: np.ndarray
    B_U: sp.csc_matrix
    Q_UU: sp.csc_matrix
    Qhat_UU: sp.csc_matrix
    canon_tilde: np.ndarray      # Q*_UU mu~*_U, computed without any pseudo-solve
    canon_hat: np.ndarray
    E_U: NullSpaceBasis | None   # ker(Q*_UU)
    E_hat: NullSpaceBasis | None  # ker(Qhat*_UU)
    k0: int
    rank_BE: int


def _soft_parts(g: Gmrf, cb: ConstraintBasis, b, so: SoftObservations,
                policy: NumericPolicy) -> _SoftParts:
    if so.B.shape[1] != g.n:
        raise DimensionMismatch(f"B has {so.B.shape[1]} columns, n = {g.n}")
    k = cb.k
    b_star = cb.solve_bstar(b) if k else np.zeros(0)
    _, Q_UC, Q_UU, mu_star = _transformed_slices(g, cb, policy)
    k0, E_U = _null_basis_U(g, cb, policy)
    B_star = (so.B @ cb.T.T).tocsc()
    B_C = B_star[:, :k]
    B_U = B_star[:, k:]
    y_star = so.y - (B_C @ b_star if k else 0.0)
    d = b_star - mu_star[:k]
    # Q*_UU mu~*_U = Q*_UU mu*_U - Q*_UC (b* - mu*_C) by the projection identity
    canon_tilde = Q_UU @ mu_star[k:] - (Q_UC @ d if k else 0.0)
    Qhat_UU = (Q_UU + (B_U.T @ B_U) / so.sigma2).tocsc()
    Qhat_UU = 0.5 * (Qhat_UU + Qhat_UU.T)
    canon_hat = canon_tilde + (B_U.T @ y_star) / so.sigma2
    E_hat = None
    rank_BE = 0
    if E_U is not None:
        W = np.asarray(B_U @ E_U.E)
        if W.size:
            Uw, sw, Vwt = np.linalg.svd(W, full_matrices=True)
            # scale against B itself: W ~ eps * ||B|| means no genuine overlap
            scale = max(float(abs(B_U).max()) if B_U.nnz else 0.0, 1e-300)
            rank_BE = int(np.sum(sw > policy.rank_tol * max(sw[0], scale)))
            null_W = Vwt[rank_BE:].T
        else:
            null_W = np.eye(E_U.s)
        if null_W.shape[1]:
            E_hat = NullSpaceBasis(E_U.E @ null_W)
    return _SoftParts(k=k, b_star=b_star, y_star=y_star, B_U=B_U,
                      Q_UU=Q_UU, Qhat_UU=Qhat_UU, canon_tilde=canon_tilde,
                      canon_hat=canon_hat, E_U=E_U, E_hat=E_hat, k0=k0,
                      rank_BE=rank_BE)


@dataclass
class PosteriorGmrf:
    """Posterior of X given {A X = b, Y = y} in the transformed basis.

    Qhat*_UU = Q*_UU + sigma2^-1 B*_U^T B*_U; mu_hat = T^T [b*; mu_hat*_U].
    rank(Qhat) = n - s - (k - k0) + rank(B*_U E), so observations can make an
    intrinsic prior proper.
    """

    basis: ConstraintBasis
    Qhat_star_UU: sp.csc_matrix
    muhat_star_U: np.ndarray
    b_star: np.ndarray
    factor_hat: CholFactor
    E_hat: NullSpaceBasis | None
    k0: int
    rank_BE: int
    _Q_hat: sp.csc_matrix | None = field(repr=False, default=None, compare=False)
    _mu_hat: np.ndarray | None = field(repr=False, default=None, compare=False)

    @property
    def n(self) -> int:
        return self.basis.n

    @property
    def mu_hat(self) -> np.ndarray:
        if self._mu_hat is None:
            self._mu_hat = self.basis.T.T @ np.concatenate(
                [self.b_star, self.muhat_star_U])
        return self._mu_hat

    @property
    def Q_hat(self) -> sp.csc_matrix:
        if self._Q_hat is None:
            TU = self.basis.T_U.tocsc()
            self._Q_hat = (TU.T @ self.Qhat_star_UU @ TU).tocsc()
        return self._Q_hat

    def dense_covariance(self) -> np.ndarray:
        TU = self.basis.T_U.toarray()
        nu = self.Qhat_star_UU.shape[0]
        if nu == 0:
            return np.zeros((self.n, self.n))
        if self.E_hat is not None:
            inv = np.column_stack([
                pseudo_solve(self.Qhat_star_UU, self.E_hat, e, factor=self.factor_hat)
                for e in np.eye(nu)])
        else:
            inv = self.factor_hat.solve(np.eye(nu))
        return TU.T @ inv @ TU


def posterior(g: Gmrf, cb: ConstraintBasis, b, so: SoftObservations,
              policy: NumericPolicy = DEFAULT_POLICY) -> PosteriorGmrf:
    """Posterior N(mu_hat, Qhat) of X given A X = b and Y = y."""
    p = _soft_parts(g, cb, b, so, policy)
    F = pseudo_factor(p.Qhat_UU, p.E_hat, policy=policy)
    if p.E_hat is not None:
        mu_U = p.E_hat.project_out(F.solve(p.E_hat.project_out(p.canon_hat)))
    else:
        mu_U = F.solve(p.canon_hat)
    return PosteriorGmrf(basis=cb, Qhat_star_UU=p.Qhat_UU, muhat_star_U=mu_U,
                         b_star=p.b_star, factor_hat=F, E_hat=p.E_hat,
                         k0=p.k0, rank_BE=p.rank_BE)


def loglik_soft(g: Gmrf, cb: ConstraintBasis, b, so: SoftObservations,
                omit_constant: bool = False,
                policy: NumericPolicy = DEFAULT_POLICY) -> float:
    """Marginal log-likelihood log pi_{Y|AX}(y | b).

    exponent = -1/2 [ y*^T y* / sigma2 + mu~*_U^T Q*_UU mu~*_U
                      - mu^*_U^T Qhat*_UU mu^*_U ]
    normalization = sigma^-m |Q*_UU|+^(1/2) / ( (2 pi)^c0 |Qhat*_UU|+^(1/2) )

    The 2-pi power is c0 = m/2 - rank(B*_U E)/2, fixed by matching the dense
    joint-Gaussian density in the proper case and the rank bookkeeping of the
    posterior in the intrinsic case.  With omit_constant=True the
    (2 pi)^-c0 factor is dropped (parameter sweeps only need differences).
    """
    p = _soft_parts(g, cb, b, so, policy)
    m = so.m
    F_hat = pseudo_factor(p.Qhat_UU, p.E_hat, policy=policy)
    if p.E_hat is not None:
        mu_hat_U = p.E_hat.project_out(F_hat.solve(p.E_hat.project_out(p.canon_hat)))
    else:
        mu_hat_U = F_hat.solve(p.canon_hat)
    # mu~*_U^T Q*_UU mu~*_U = canon_tilde^T (Q*_UU)^+ canon_tilde
    if p.Q_UU.shape[0]:
        mt = pseudo_solve(p.Q_UU, p.E_U, p.canon_tilde, policy=policy)
        quad_tilde = float(p.canon_tilde @ mt)
        ld_Q_UU = log_pseudo_det(p.Q_UU, p.E_U, policy=policy)
        ld_Qhat = (log_pseudo_det(p.Qhat_UU, p.E_hat, policy=policy)
                   if p.E_hat is not None else F_hat.logdet)
    else:
        quad_tilde = 0.0
        ld_Q_UU = 0.0
        ld_Qhat = 0.0
    quad_hat = float(mu_hat_U @ (p.Qhat_UU @ mu_hat_U))
    expo = -0.5 * (float(p.y_star @ p.y_star) / so.sigma2 + quad_tilde - quad_hat)
    val = (-0.5 * m * math.log(so.sigma2) + 0.5 * ld_Q_UU - 0.5 * ld_Qhat + expo)
    if not omit_constant:
        c0 = 0.5 * m - 0.5 * p.rank_BE
        val -= c0 * LOG_2PI
    return val


def sample_posterior(pg: PosteriorGmrf, z,
                     policy: NumericPolicy = DEFAULT_POLICY) -> np.ndarray:
    """Draw X | {A X = b, Y = y}; A X = b holds exactly and z = 0 gives mu_hat.

    z may be an (n-k,) vector, an (n-k, m) matrix, a seed, or a Generator.
    """
    nu = pg.Qhat_star_UU.shape[0]
    if isinstance(z, (int, np.integer, np.random.Generator)):
        z = make_rng(z).standard_normal(nu)
    z = np.asarray(z, dtype=np.float64)
    if z.shape[0] != nu:
        raise DimensionMismatch(f"z has leading dim {z.shape[0]}, need {nu}")
    single = z.ndim == 1
    F = pg.factor_hat
    if nu:
        mu = pg.muhat_star_U
        m_star = tri_solve(F, pg.Qhat_star_UU @ mu, "Rt")
        xu = tri_solve(F, (m_star if single else m_star[:, None]) + z, "R")
        if pg.E_hat is not None:
            fluct = pg.E_hat.project_out(xu - (mu if single else mu[:, None]))
            xu = fluct + (mu if single else mu[:, None])
    else:
        xu = z[:0] if single else z[:0, :]
    bs = pg.b_star if single else np.repeat(pg.b_star[:, None], z.shape[1], axis=1)
    return pg.basis.T.T @ np.concatenate([bs, xu], axis=0)
