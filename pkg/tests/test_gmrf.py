"""GMRF sampling, densities, parametrizations."""

import math

import numpy as np
import pytest
import scipy.sparse as sp

from cgmrf import (DimensionMismatch, Gmrf, IntrinsicNotSamplable, log_density,
                   make_rng, sample)

from conftest import rand_spd, rw1_precision


def dense_normal_logpdf(x, mu, Q):
    """Independent dense multivariate-normal oracle."""
    n = x.size
    sign, ld = np.linalg.slogdet(Q)
    r = x - mu
    return -0.5 * n * math.log(2 * math.pi) + 0.5 * ld - 0.5 * r @ Q @ r


class TestSample:
    def test_whitened_identity(self):
        g = Gmrf(Q=sp.identity(3, format="csc"))
        z = np.array([0.4, -1.0, 2.2])
        assert np.array_equal(sample(g, z), z)

    def test_scalar_case(self):
        g = Gmrf(Q=sp.csc_matrix(np.array([[4.0]])), mu=np.array([1.0]))
        assert sample(g, np.array([2.0])) == pytest.approx(2.0)

    def test_covariance_against_dense_inverse(self):
        # Q = [[2,-1],[-1,2]] has covariance [[2/3,1/3],[1/3,2/3]]
        Q = np.array([[2.0, -1.0], [-1.0, 2.0]])
        g = Gmrf(Q=sp.csc_matrix(Q))
        N = 100_000
        z = make_rng(11).standard_normal((2, N))
        X = sample(g, z)
        S = np.cov(X)
        Sigma = np.linalg.inv(Q)
        se = np.sqrt((np.outer(np.diag(Sigma), np.diag(Sigma)) + Sigma**2) / N)
        assert np.all(np.abs(S - Sigma) <= 3 * se)

    def test_reproducible_given_z(self, rng):
        g = Gmrf(Q=rand_spd(25, rng), mu=rng.standard_normal(25))
        z = rng.standard_normal(25)
        assert np.array_equal(sample(g, z), sample(g, z.copy()))

    def test_seeded_stream_reproducible(self, rng):
        g = Gmrf(Q=rand_spd(10, rng))
        assert np.array_equal(sample(g, 42), sample(g, 42))

    def test_intrinsic_not_samplable(self):
        Q, E = rw1_precision(4)
        g = Gmrf(Q=Q, mu=np.zeros(4), nullspace=E)
        with pytest.raises(IntrinsicNotSamplable):
            sample(g, 0)


class TestLogDensity:
    def test_standard_normal_at_zero(self):
        g = Gmrf(Q=sp.identity(1, format="csc"))
        assert log_density(g, [0.0]) == pytest.approx(-0.5 * math.log(2 * math.pi))

    def test_diagonal_closed_form(self):
        g = Gmrf(Q=sp.diags([2.0, 3.0]).tocsc())
        expect = -math.log(2 * math.pi) + 0.5 * math.log(6.0)
        assert log_density(g, [0.0, 0.0]) == pytest.approx(expect, abs=1e-12)

    def test_matches_dense_oracle(self, rng):
        for _ in range(5):
            n = int(rng.integers(5, 200))
            Q = rand_spd(n, rng)
            mu = rng.standard_normal(n)
            x = rng.standard_normal(n)
            g = Gmrf(Q=Q, mu=mu)
            ref = dense_normal_logpdf(x, mu, Q.toarray())
            assert log_density(g, x) == pytest.approx(ref, rel=1e-9, abs=1e-9)

    def test_intrinsic_shift_invariance(self, rng):
        Q, E = rw1_precision(3)
        g = Gmrf(Q=Q, mu=np.zeros(3), nullspace=E)
        x = rng.standard_normal(3)
        for c in (0.5, -3.0, 100.0):
            assert log_density(g, x + c) == pytest.approx(log_density(g, x),
                                                          rel=1e-10, abs=1e-8)

    def test_dimension_mismatch(self, rng):
        g = Gmrf(Q=rand_spd(5, rng))
        with pytest.raises(DimensionMismatch):
            log_density(g, np.zeros(4))


class TestParametrization:
    def test_canonical_roundtrip(self, rng):
        Q = rand_spd(12, rng)
        mu = rng.standard_normal(12)
        g_nat = Gmrf(Q=Q, mu=mu)
        g_can = Gmrf(Q=Q, mu_c=Q @ mu)
        assert np.allclose(g_can.natural_mean(), mu, atol=1e-9)
        assert np.allclose(g_nat.canonical_mean(), Q @ mu)
        x = rng.standard_normal(12)
        assert log_density(g_can, x) == pytest.approx(log_density(g_nat, x),
                                                      rel=1e-10)

    def test_intrinsic_canonical_only(self):
        Q, E = rw1_precision(5)
        mu_c = Q @ np.arange(5.0)  # canonical mean is always in range(Q)
        g = Gmrf(Q=Q, mu_c=mu_c, nullspace=E)
        assert g.parametrization == "canonical"
        m = g.natural_mean()
        assert np.linalg.norm(Q @ m - mu_c) <= 1e-8

    def test_bad_nullspace_rejected(self, rng):
        from cgmrf import NullSpaceBasis
        Q = rand_spd(6, rng)
        with pytest.raises(DimensionMismatch):
            Gmrf(Q=Q, nullspace=NullSpaceBasis(np.ones((6, 1)) / math.sqrt(6)))
