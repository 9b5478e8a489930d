"""Shared instance generators and dense oracles for the test suite."""

import numpy as np
import pytest
import scipy.sparse as sp

from cgmrf import ConstraintSet, Gmrf, NullSpaceBasis

# hard-constraint exactness bound asserted on every drawn sample
CONSTRAINT_TOL = 1e-9


def rand_spd(n, rng, density=None, shift=2.0):
    """Random sparse symmetric positive definite matrix."""
    density = density if density is not None else min(4.0 / n, 1.0)
    M = sp.random(n, n, density=density, random_state=int(rng.integers(2**31)),
                  format="csc")
    return (M @ M.T + sp.identity(n) * shift).tocsc()


def rand_constraints(n, k, rng, overlap=True, max_extra=2):
    """Random sparse k x n constraint set of full row rank.

    Each row owns a distinct anchor column, plus up to `max_extra` shared
    columns when overlap=True (overlapping supports merge blocks).
    """
    anchors = rng.choice(n, size=k, replace=False)
    rows, cols, vals = [], [], []
    for i in range(k):
        c = [int(anchors[i])]
        if overlap and max_extra:
            extra = rng.choice(n, size=int(rng.integers(0, max_extra + 1)),
                               replace=False)
            c += [int(e) for e in extra if e not in c]
        rows += [i] * len(c)
        cols += c
        v = rng.standard_normal(len(c))
        v += np.where(v >= 0, 1.0, -1.0)  # keep entries away from zero
        vals += list(v)
    A = sp.csc_matrix((vals, (rows, cols)), shape=(k, n))
    return ConstraintSet(A, rng.standard_normal(k))


def rand_gmrf(n, rng, mu=None):
    mu = rng.standard_normal(n) if mu is None else mu
    return Gmrf(Q=rand_spd(n, rng), mu=mu)


def rw1_precision(n):
    """First-order random walk: rank n-1, null space = constants."""
    D = sp.diags([np.ones(n - 1), -np.ones(n - 1)], [0, 1],
                 shape=(n - 1, n)).tocsc()
    E = NullSpaceBasis(np.ones((n, 1)) / np.sqrt(n))
    return (D.T @ D).tocsc(), E


def rw2_precision(n):
    """Second-order random walk: rank n-2, null space = constants + linear."""
    D = sp.diags([np.ones(n - 2), -2 * np.ones(n - 2), np.ones(n - 2)],
                 [0, 1, 2], shape=(n - 2, n)).tocsc()
    t = np.arange(n, dtype=float)
    E = np.column_stack([np.ones(n), t])
    Eo, _ = np.linalg.qr(E)
    return (D.T @ D).tocsc(), NullSpaceBasis(Eo)


def joint_gaussian_oracle(g, cs, so):
    """Dense conditioning of [X; Y] on {A X = b, Y = y}.

    Returns (posterior mean, posterior covariance, log pi(y | A X = b)); the
    independent check for the transformed-basis soft-constraint results.
    """
    Q = g.Q.toarray()
    Sigma = np.linalg.inv(Q)
    mu = g.natural_mean()
    A = cs.A.toarray()
    B = so.B.toarray()
    k, m = cs.k, so.m
    top = np.vstack([A, B])
    mu_L = top @ mu
    C_XL = Sigma @ top.T
    C_LL = top @ Sigma @ top.T
    C_LL[k:, k:] += so.sigma2 * np.eye(m)
    obs = np.concatenate([cs.b, so.y])
    sol = np.linalg.solve(C_LL, obs - mu_L)
    mu_post = mu + C_XL @ sol
    Sigma_post = Sigma - C_XL @ np.linalg.solve(C_LL, C_XL.T)
    S_AA = C_LL[:k, :k]
    S_AY = C_LL[:k, k:]
    S_YY = C_LL[k:, k:]
    if k:
        mu_y = B @ mu + S_AY.T @ np.linalg.solve(S_AA, cs.b - A @ mu)
        S_y = S_YY - S_AY.T @ np.linalg.solve(S_AA, S_AY)
    else:
        mu_y = B @ mu
        S_y = S_YY
    r = so.y - mu_y
    _, ld = np.linalg.slogdet(S_y)
    ll = (-0.5 * m * np.log(2 * np.pi) - 0.5 * ld
          - 0.5 * r @ np.linalg.solve(S_y, r))
    return mu_post, 0.5 * (Sigma_post + Sigma_post.T), float(ll)


def assert_hard_exact(A, x, b, tol=CONSTRAINT_TOL):
    """Constraint exactness asserted on every sample, suite-wide."""
    r = A @ x - (b if np.ndim(x) == 1 else np.asarray(b)[:, None])
    assert np.max(np.abs(r)) <= tol, f"constraint residual {np.max(np.abs(r)):.3e}"


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)
