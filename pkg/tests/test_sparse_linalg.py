"""Kernels: factorization, solves, SVD convention, pseudo-inverse ops."""

import math

import numpy as np
import pytest
import scipy.sparse as sp

from cgmrf import (DEFAULT_POLICY, DimensionMismatch, NotPositiveDefinite,
                   NullSpaceBasis, cholesky, log_pseudo_det, pseudo_solve,
                   svd_small, tri_solve, triple_product)
from cgmrf.policy import NumericPolicy

from conftest import rand_spd


class TestCholesky:
    def test_diagonal(self):
        F = cholesky(sp.diags([4.0, 9.0]).tocsc(), ordering="natural")
        assert np.allclose(F.R.toarray(), np.diag([2.0, 3.0]))
        assert F.logdet == pytest.approx(math.log(36.0))

    def test_2x2_hand_determinant(self):
        # det [[2,-1],[-1,2]] = 3 by hand
        F = cholesky(sp.csc_matrix(np.array([[2.0, -1.0], [-1.0, 2.0]])))
        assert F.logdet == pytest.approx(math.log(3.0), abs=1e-12)

    def test_identity(self):
        F = cholesky(sp.identity(7, format="csc"), ordering="natural")
        assert np.allclose(F.R.toarray(), np.eye(7))
        assert F.logdet == 0.0

    def test_permuted_factor_reproduces_q(self, rng):
        Q = rand_spd(120, rng)
        for ordering in ("mmd", "rcm", "natural"):
            F = cholesky(Q, ordering=ordering)
            Qp = Q[F.perm][:, F.perm]
            resid = abs(F.R.T @ F.R - Qp).max()
            assert resid <= 1e-10 * abs(Q).max()
            assert F.R.diagonal().min() > 0

    def test_orderings_agree_on_logdet(self, rng):
        Q = rand_spd(80, rng)
        lds = [cholesky(Q, ordering=o).logdet for o in ("mmd", "rcm", "natural")]
        assert np.ptp(lds) < 1e-9

    def test_rejects_indefinite(self):
        with pytest.raises(NotPositiveDefinite):
            cholesky(sp.csc_matrix(np.array([[1.0, 2.0], [2.0, 1.0]])))

    def test_rejects_intrinsic(self):
        # RW1 precision is singular: the signature of an intrinsic field
        Q = sp.csc_matrix(np.array([[1.0, -1.0], [-1.0, 1.0]]))
        with pytest.raises(NotPositiveDefinite):
            cholesky(Q)

    def test_rejects_rectangular(self):
        with pytest.raises(DimensionMismatch):
            cholesky(sp.csc_matrix(np.ones((2, 3))))


class TestTriSolve:
    def test_diagonal(self):
        F = cholesky(sp.diags([4.0, 9.0]).tocsc(), ordering="natural")
        x = tri_solve(F, np.array([2.0, 3.0]), "R")
        assert np.allclose(x, [1.0, 1.0])

    def test_identity_passthrough(self, rng):
        F = cholesky(sp.identity(9, format="csc"), ordering="natural")
        v = rng.standard_normal(9)
        assert np.allclose(tri_solve(F, v, "R"), v)
        assert np.allclose(tri_solve(F, v, "Rt"), v)

    def test_full_solve_2x2(self):
        F = cholesky(sp.csc_matrix(np.array([[2.0, -1.0], [-1.0, 2.0]])))
        x = tri_solve(F, tri_solve(F, np.array([1.0, 0.0]), "Rt"), "R")
        assert np.allclose(x, [2.0 / 3.0, 1.0 / 3.0])

    def test_double_solve_matches_dense_inverse(self, rng):
        # spec invariant: two triangular solves reproduce Q^-1 v to 1e-9
        for _ in range(5):
            n = int(rng.integers(20, 200))
            Q = rand_spd(n, rng)
            v = rng.standard_normal(n)
            ref = np.linalg.solve(Q.toarray(), v)
            F = cholesky(Q)
            got = tri_solve(F, tri_solve(F, v, "Rt"), "R")
            assert np.linalg.norm(got - ref) <= 1e-9 * np.linalg.norm(ref)
            assert np.allclose(F.solve(v), ref, rtol=1e-9, atol=1e-12)

    def test_dimension_mismatch(self):
        F = cholesky(sp.identity(3, format="csc"))
        with pytest.raises(DimensionMismatch):
            tri_solve(F, np.ones(4), "R")


class TestSvdSmall:
    def test_rank_one_row(self):
        U, S, Vt = svd_small([[1.0, 1.0]])
        assert S[0] == pytest.approx(math.sqrt(2.0))
        assert np.allclose(Vt[0], [1 / math.sqrt(2)] * 2)

    def test_identity(self):
        U, S, Vt = svd_small(np.eye(2))
        assert np.allclose(S, [1.0, 1.0])
        assert np.allclose(np.abs(Vt), np.eye(2))

    def test_diagonal_singular_values(self):
        _, S, _ = svd_small(np.array([[3.0, 0.0], [0.0, 0.0]]))
        assert np.allclose(S, [3.0, 0.0])

    def test_reconstruction_and_determinism(self, rng):
        for _ in range(10):
            m, n = rng.integers(1, 20, size=2)
            M = rng.standard_normal((m, n))
            U, S, Vt = svd_small(M)
            Smat = np.zeros((m, n))
            Smat[: min(m, n), : min(m, n)] = np.diag(S)
            assert abs(M - U @ Smat @ Vt).max() <= 1e-10 * max(abs(M).max(), 1)
            # pure function of M: identical output on a fresh call
            U2, S2, Vt2 = svd_small(M.copy())
            assert np.array_equal(U, U2) and np.array_equal(Vt, Vt2)
            # sign convention: largest-magnitude entry of each row positive
            for row in Vt:
                assert row[np.argmax(np.abs(row))] >= 0

    def test_dense_cap(self):
        with pytest.raises(DimensionMismatch):
            svd_small(np.zeros((11, 1)), policy=NumericPolicy(dense_block_cap=10))


class TestPseudoOps:
    def test_zero_block(self):
        Q = sp.diags([1.0, 0.0]).tocsc()
        E = NullSpaceBasis(np.array([[0.0], [1.0]]))
        x = pseudo_solve(Q, E, np.array([2.0, 5.0]))
        assert np.allclose(x, [2.0, 0.0])

    def test_rw1_pair_eigen_oracle(self):
        # eigenpairs of [[1,-1],[-1,1]]: (0, (1,1)/sqrt2), (2, (1,-1)/sqrt2)
        Q = sp.csc_matrix(np.array([[1.0, -1.0], [-1.0, 1.0]]))
        E = NullSpaceBasis(np.ones((2, 1)) / math.sqrt(2))
        x = pseudo_solve(Q, E, np.array([1.0, -1.0]))
        assert np.allclose(x, [0.5, -0.5])

    def test_nullspace_input_maps_to_zero(self):
        Q = sp.csc_matrix(np.array([[1.0, -1.0], [-1.0, 1.0]]))
        E = NullSpaceBasis(np.ones((2, 1)) / math.sqrt(2))
        assert np.allclose(pseudo_solve(Q, E, np.array([3.0, 3.0])), 0.0)

    def test_projected_residual(self, rng):
        # Q Q^+ v = (I - E E^T) v to 1e-8 relative
        n = 40
        M = rng.standard_normal((n, n - 2))
        Q = sp.csc_matrix(M @ M.T)
        w, V = np.linalg.eigh(Q.toarray())
        E = NullSpaceBasis(V[:, :2])
        v = rng.standard_normal(n)
        x = pseudo_solve(Q, E, v)
        proj = v - E.E @ (E.E.T @ v)
        assert np.linalg.norm(Q @ x - proj) <= 1e-8 * np.linalg.norm(proj)

    def test_log_pseudo_det_diagonal(self):
        Q = sp.diags([2.0, 3.0, 0.0]).tocsc()
        E = NullSpaceBasis(np.array([[0.0], [0.0], [1.0]]))
        assert log_pseudo_det(Q, E) == pytest.approx(math.log(6.0), abs=1e-10)

    def test_log_pseudo_det_rw1_eigen_oracle(self):
        # dense eigenvalues of the 3-node RW1 precision: 0, 1, 3
        Q = sp.csc_matrix(np.array([[1.0, -1.0, 0.0], [-1.0, 2.0, -1.0],
                                    [0.0, -1.0, 1.0]]))
        ev = np.linalg.eigvalsh(Q.toarray())
        expected = float(np.sum(np.log(ev[ev > 1e-10])))
        E = NullSpaceBasis(np.ones((3, 1)) / math.sqrt(3))
        assert log_pseudo_det(Q, E) == pytest.approx(expected, abs=1e-9)
        assert expected == pytest.approx(math.log(3.0), abs=1e-12)

    def test_empty_nullspace_equals_cholesky(self, rng):
        Q = rand_spd(30, rng)
        assert log_pseudo_det(Q, None) == pytest.approx(
            cholesky(Q).logdet, abs=1e-10)


class TestTripleProduct:
    def test_identity(self, rng):
        Q = rand_spd(15, rng)
        out = triple_product(sp.identity(15, format="csc"), Q)
        assert abs(out - Q).max() < 1e-14

    def test_rotation_isometry(self):
        c, s = math.cos(0.3), math.sin(0.3)
        T = sp.csc_matrix(np.array([[c, -s], [s, c]]))
        out = triple_product(T, sp.identity(2, format="csc"))
        assert abs(out - sp.identity(2)).max() <= 1e-14

    def test_dense_multiply_oracle(self):
        r = 1 / math.sqrt(2)
        T = np.array([[r, r], [-r, r]])
        out = triple_product(T, sp.diags([1.0, 2.0]).tocsc()).toarray()
        assert np.allclose(out, [[1.5, 0.5], [0.5, 1.5]])

    def test_matches_dense_and_drops_tiny(self, rng):
        for _ in range(5):
            n = int(rng.integers(5, 100))
            T = sp.random(n, n, density=0.1, random_state=int(rng.integers(2**31)))
            Q = rand_spd(n, rng)
            out = triple_product(T, Q)
            ref = T.toarray() @ Q.toarray() @ T.toarray().T
            assert abs(out.toarray() - ref).max() <= 1e-12 * max(abs(ref).max(), 1)
            if out.nnz:
                assert np.abs(out.data).min() >= DEFAULT_POLICY.drop_tol

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            triple_product(np.ones((2, 3)), sp.identity(2, format="csc"))
