"""GMRF representation, unconditional sampling, and log-density evaluation.

A field is specified by its sparse precision Q together with either the
natural mean mu or the canonical mean mu_c = Q mu.  The canonical form stays
well-defined for intrinsic fields (rank-deficient Q), whose null space is
carried explicitly as a NullSpaceBasis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, IntrinsicNotSamplable
from .policy import DEFAULT_POLICY, NumericPolicy
from .sparse_linalg import (CholFactor, NullSpaceBasis, as_csc, cholesky,
                            log_pseudo_det, pseudo_solve, tri_solve)

__all__ = ["Gmrf", "sample", "log_density", "make_rng"]


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator (Philox) so seeded streams replay exactly.

    `seed` may be an int or a sequence of ints (e.g. (seed, cell_index) for
    per-worker streams).
    """
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


@dataclass
class Gmrf:
    """Gaussian vector with sparse precision Q.

    Exactly one of `mu` (natural mean) or `mu_c` (canonical mean Q mu) must
    be supplied; intrinsic fields may only store `mu_c`.
    """

    Q: sp.csc_matrix
    mu: np.ndarray | None = None
    mu_c: np.ndarray | None = None
    nullspace: NullSpaceBasis | None = None
    _factor: CholFactor | None = field(repr=False, default=None, compare=False)

    def __post_init__(self):
        self.Q = as_csc(self.Q)
        n = self.Q.shape[0]
        if self.Q.shape[1] != n:
            raise DimensionMismatch("precision must be square")
        if self.mu is None and self.mu_c is None:
            self.mu = np.zeros(n)
        for name in ("mu", "mu_c"):
            v = getattr(self, name)
            if v is not None:
                v = np.asarray(v, dtype=np.float64).reshape(-1)
                if v.shape[0] != n:
                    raise DimensionMismatch(f"{name} has length {v.shape[0]}, n = {n}")
                setattr(self, name, v)
        if self.nullspace is not None and self.nullspace.s:
            if self.nullspace.E.shape[0] != n:
                raise DimensionMismatch("null-space basis does not match n")
            self.nullspace.validate(self.Q)

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def s(self) -> int:
        return 0 if self.nullspace is None else self.nullspace.s

    @property
    def is_intrinsic(self) -> bool:
        return self.s > 0

    @property
    def parametrization(self) -> str:
        return "natural" if self.mu is not None else "canonical"

    def factor(self, policy: NumericPolicy = DEFAULT_POLICY) -> CholFactor:
        """Cholesky of Q (proper fields only); cached."""
        if self._factor is None:
            self._factor = cholesky(self.Q, policy=policy)
        return self._factor

    def natural_mean(self, policy: NumericPolicy = DEFAULT_POLICY) -> np.ndarray:
        """mu, solving Q mu = mu_c when only the canonical mean is stored.

        For intrinsic fields the returned representative is the one in
        range(Q); the mean is only defined up to shifts within span(E).
        """
        if self.mu is not None:
            return self.mu
        if self.is_intrinsic:
            self.mu = pseudo_solve(self.Q, self.nullspace, self.mu_c, policy=policy)
        else:
            self.mu = self.factor(policy).solve(self.mu_c)
        return self.mu

    def canonical_mean(self) -> np.ndarray:
        if self.mu_c is None:
            self.mu_c = self.Q @ self.mu
        return self.mu_c


def sample(g: Gmrf, z, policy: NumericPolicy = DEFAULT_POLICY) -> np.ndarray:
    """Draw x = mu + R^-1 z with Q = R^T R.

    `z` is either a standard-normal vector (or (n, m) matrix for m draws),
    an integer seed, or a Generator.  Given a fixed z the output is
    deterministic.
    """
    if g.is_intrinsic:
        raise IntrinsicNotSamplable(
            "precision has a null space; condition on constraints first")
    F = g.factor(policy)
    if isinstance(z, (int, np.integer, np.random.Generator)):
        z = make_rng(z).standard_normal(g.n)
    z = np.asarray(z, dtype=np.float64)
    if z.shape[0] != g.n:
        raise DimensionMismatch(f"z has leading dim {z.shape[0]}, n = {g.n}")
    x = tri_solve(F, z, "R")
    mu = g.natural_mean(policy)
    return x + (mu if x.ndim == 1 else mu[:, None])


def log_density(g: Gmrf, x: np.ndarray, policy: NumericPolicy = DEFAULT_POLICY) -> float:
    """Normalized log-density at x.

    Proper Q: the usual multivariate normal value.  Intrinsic Q: density with
    respect to Lebesgue measure on range(Q), i.e. (n - s)/2 powers of 2*pi
    and the pseudo-determinant |Q|+; the value is invariant to shifts of x
    along span(E).
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != g.n:
        raise DimensionMismatch(f"x has length {x.shape[0]}, n = {g.n}")
    r = x - g.natural_mean(policy)
    quad = float(r @ (g.Q @ r))
    if g.is_intrinsic:
        ld = log_pseudo_det(g.Q, g.nullspace, policy=policy)
        dim = g.n - g.s
    else:
        ld = g.factor(policy).logdet
        dim = g.n
    return -0.5 * dim * math.log(2.0 * math.pi) + 0.5 * ld - 0.5 * quad
