"""Constraint basis construction: block detection, the two builders, and the
transform into the constraint-aligned coordinates."""

import math

import numpy as np
import pytest
import scipy.sparse as sp

from cgmrf import (ConstraintSet, Gmrf, RankDeficient, build_basis_blocked,
                   build_basis_svd, find_blocks, svd_small, transform)

from conftest import rand_constraints, rand_gmrf, rand_spd


def find_blocks_fixpoint(A):
    """Row-sweep fixed point that repeatedly extracts the first reachable
    sub-matrix; the cross-check oracle for the connected-component version."""
    csr = A.tocsr()
    row_cols = [set(csr.indices[csr.indptr[r]:csr.indptr[r + 1]])
                for r in range(csr.shape[0])]
    remaining = list(range(csr.shape[0]))
    blocks = []
    while remaining:
        U = {remaining[0]}
        d = 0
        while True:
            D = set()
            for r in U:
                D |= row_cols[r]
            U = {r for r in remaining if row_cols[r] & D}
            if len(U) == d:
                break
            d = len(U)
        blocks.append((tuple(sorted(U)), tuple(sorted(D))))
        remaining = [r for r in remaining if r not in U]
    return sorted(blocks)


def planted_blocks(n, m, rng, width=3):
    """Permuted block-diagonal constraint matrix with a known partition."""
    cols_pool = rng.permutation(n)
    rows, cols, vals = [], [], []
    truth = []
    r = 0
    pos = 0
    for _ in range(m):
        w = int(rng.integers(1, width + 1))
        kb = int(rng.integers(1, w + 1))
        block_cols = cols_pool[pos:pos + w]
        pos += w
        block_rows = list(range(r, r + kb))
        # random full-row-rank block: random values, anchor diag
        for i, br in enumerate(block_rows):
            for j, bc in enumerate(block_cols):
                v = rng.standard_normal() + (2.0 if j == i % w else 0.0)
                rows.append(br)
                cols.append(int(bc))
                vals.append(v)
        truth.append((tuple(block_rows), tuple(sorted(int(c) for c in block_cols))))
        r += kb
    A = sp.csc_matrix((vals, (rows, cols)), shape=(r, n))
    perm = rng.permutation(r)
    A = A[perm]
    remap = {int(old): new for new, old in enumerate(perm)}
    truth = [(tuple(sorted(remap[x] for x in rs)), cs) for rs, cs in truth]
    return A, sorted(truth)


class TestFindBlocks:
    def test_visibly_disjoint(self):
        A = sp.csc_matrix(np.array([[1.0, 1, 0, 0], [0, 0, 1, 1]]))
        blocks = find_blocks(A)
        assert len(blocks) == 2
        assert list(blocks[0][1]) == [0, 1]
        assert list(blocks[1][1]) == [2, 3]

    def test_shared_column_merges(self):
        A = sp.csc_matrix(np.array([[1.0, 1, 0], [0, 1, 1]]))
        blocks = find_blocks(A)
        assert len(blocks) == 1
        assert list(blocks[0][0]) == [0, 1]

    def test_recovers_planted_partition(self, rng):
        for _ in range(5):
            A, truth = planted_blocks(60, 5, rng)
            got = sorted((tuple(int(r) for r in rs), tuple(int(c) for c in cs))
                         for rs, cs in find_blocks(A))
            assert got == truth

    def test_agrees_with_fixpoint_oracle(self, rng):
        for _ in range(10):
            cs = rand_constraints(40, int(rng.integers(2, 10)), rng)
            got = sorted((tuple(int(r) for r in rs), tuple(int(c) for c in csx))
                         for rs, csx in find_blocks(cs.A))
            assert got == find_blocks_fixpoint(cs.A)

    def test_permutation_invariance(self, rng):
        A, _ = planted_blocks(40, 4, rng)
        rp = rng.permutation(A.shape[0])
        cp = rng.permutation(A.shape[1])
        Ap = A[rp][:, cp]
        base = find_blocks(A)
        permed = find_blocks(Ap)
        # map the permuted result back and compare as partitions
        rinv = np.argsort(rp)
        back = sorted(tuple(sorted(int(rp[r]) for r in rs)) for rs, _ in permed)
        orig = sorted(tuple(sorted(int(r) for r in rs)) for rs, _ in base)
        assert back == orig

    def test_zero_row_rejected(self):
        A = sp.csc_matrix(np.array([[1.0, 0.0], [0.0, 0.0]]))
        with pytest.raises(RankDeficient):
            find_blocks(A)


class TestBuildBasisSvd:
    def test_axis_constraint(self):
        cb = build_basis_svd(sp.csc_matrix(np.array([[1.0, 0.0, 0.0]])))
        assert np.allclose(np.abs(cb.T.toarray()), np.eye(3))
        assert cb.H.toarray() == pytest.approx(np.array([[1.0]]))

    def test_sum_constraint_matches_svd_small(self):
        A = np.array([[1.0, 1.0]])
        cb = build_basis_svd(sp.csc_matrix(A), b=[0.0])
        _, S, Vt = svd_small(A)
        assert np.allclose(cb.T.toarray(), Vt)
        assert cb.H.toarray()[0, 0] == pytest.approx(math.sqrt(2.0))
        assert np.allclose(cb.bstar, [0.0])

    def test_non_interacting(self):
        A = sp.csc_matrix(np.array([[1.0, 0, 0], [0, 1.0, 0]]))
        cb = build_basis_svd(A)
        T = np.abs(cb.T.toarray())
        assert np.allclose(T[0], [1, 0, 0])
        assert np.allclose(T[1], [0, 1, 0])
        assert np.allclose(T[2], [0, 0, 1])

    def test_rank_deficient_rejected(self):
        A = sp.csc_matrix(np.array([[1.0, 2.0], [2.0, 4.0]]))
        with pytest.raises(RankDeficient):
            build_basis_svd(A)

    def test_invariants_random(self, rng):
        for _ in range(10):
            cs = rand_constraints(50, int(rng.integers(1, 8)), rng)
            cb = build_basis_svd(cs)
            res = cb.validate(cs.A)
            assert res["orth"] <= 1e-10
            assert res["u_align"] <= 1e-10 * max(abs(cs.A).max(), 1.0)


class TestBuildBasisBlocked:
    def test_single_block_equals_svd(self, rng):
        cs = rand_constraints(20, 4, rng, overlap=False)
        # chain the rows into one block by a shared column
        A = cs.A.tolil()
        for i in range(4):
            A[i, 19] = 1.0
        A = A.tocsc()
        b1 = build_basis_svd(A)
        b2 = build_basis_blocked(A)
        assert abs(b1.T - b2.T).max() == 0.0
        assert abs(b1.H - b2.H).max() == 0.0

    def test_two_rotation_blocks(self):
        A = sp.csc_matrix(np.array([[1.0, 1, 0, 0], [0, 0, 1.0, 1]]))
        cb = build_basis_blocked(A, b=np.zeros(2))
        assert len(cb.blocks) == 2
        T = cb.T.toarray()
        r = 1 / math.sqrt(2)
        assert np.allclose(np.abs(T[0, :2]), [r, r])
        assert np.allclose(np.abs(T[1, 2:]), [r, r])
        cb.validate(A)

    def test_many_random_disjoint_blocks(self, rng):
        # 50 disjoint 3-column constraints on n = 300
        n, m = 300, 50
        cols_pool = rng.permutation(n)
        rows, cols, vals = [], [], []
        for i in range(m):
            for j in range(3):
                rows.append(i)
                cols.append(int(cols_pool[3 * i + j]))
                vals.append(rng.standard_normal() + 1.0)
        A = sp.csc_matrix((vals, (rows, cols)), shape=(m, n))
        cb = build_basis_blocked(A)
        assert len(cb.blocks) == m
        res = cb.validate(A)
        assert res["orth"] <= 1e-10
        assert res["u_align"] <= 1e-10 * abs(A).max()

    def test_block_rank_deficiency_rejected(self):
        A = sp.csc_matrix(np.array([[1.0, 1, 0, 0], [2.0, 2, 0, 0],
                                    [0, 0, 1.0, 0]]))
        with pytest.raises(RankDeficient):
            build_basis_blocked(A)

    def test_h_inverse_is_sinv_ut_blockwise(self, rng):
        cs = rand_constraints(30, 6, rng)
        cb = build_basis_blocked(cs)
        Hd = cb.H.toarray()
        Hinv = np.linalg.inv(Hd)
        ref = np.zeros_like(Hd)
        for blk in cb.blocks:
            ref[np.ix_(blk.c_pos, blk.rows)] = (blk.U / blk.S[None, :]).T
        assert np.allclose(Hinv, ref, atol=1e-10)
        b = rng.standard_normal(6)
        assert np.allclose(cb.solve_bstar(b), Hinv @ b, atol=1e-10)

    def test_blocked_cost_bookkeeping(self, rng):
        # the dense work is sum over blocks of r^3 + r^2 |cols|, never the
        # single-SVD k^3 + k^2 |id(A)|
        A, truth = planted_blocks(200, 20, rng)
        cb = build_basis_blocked(A)
        blocked_cost = sum(len(b.rows) ** 3 + len(b.rows) ** 2 * len(b.cols)
                           for b in cb.blocks)
        k = A.shape[0]
        d = len(np.unique(A.tocoo().col))
        assert blocked_cost <= k**3 + k**2 * d
        assert len(cb.blocks) == len(truth)


class TestTransform:
    def test_identity_basis_noop(self, rng):
        from cgmrf import identity_basis
        g = rand_gmrf(10, rng)
        gt = transform(g, identity_basis(10))
        assert abs(gt.Q - g.Q).max() <= 1e-14
        assert np.allclose(gt.mu, g.mu)

    def test_eigenvalues_preserved(self, rng):
        # orthonormal T cannot move the spectrum
        for _ in range(3):
            n = int(rng.integers(6, 50))
            g = rand_gmrf(n, rng)
            cs = rand_constraints(n, int(rng.integers(1, 4)), rng)
            cb = build_basis_svd(cs)
            gt = transform(g, cb)
            ev0 = np.linalg.eigvalsh(g.Q.toarray())
            ev1 = np.linalg.eigvalsh(gt.Q.toarray())
            assert np.allclose(ev0, ev1, rtol=1e-10, atol=1e-10)

    def test_sparsity_outside_constraint_support(self, rng):
        # rows of Q* at positions carrying untouched unit vectors keep the
        # original sparsity pattern of Q
        n = 40
        g = Gmrf(Q=rand_spd(n, rng), mu=np.zeros(n))
        cs = rand_constraints(n, 3, rng, overlap=False)
        cb = build_basis_blocked(cs)
        gt = transform(g, cb)
        touched = set()
        for blk in cb.blocks:
            touched.update(int(c) for c in blk.cols)
        Tcsr = cb.T.tocsr()
        Qd = abs(g.Q.toarray()) > 0
        Qs = abs(gt.Q.toarray()) > 1e-13
        # map identity rows of T to their original variable
        for p in range(cb.k, n):
            row = Tcsr[p]
            if row.nnz == 1 and row.data[0] == 1.0:
                j = int(row.indices[0])
                assert j not in touched
                for p2 in range(cb.k, n):
                    row2 = Tcsr[p2]
                    if row2.nnz == 1 and row2.data[0] == 1.0:
                        j2 = int(row2.indices[0])
                        assert Qs[p, p2] == Qd[j, j2]

    def test_intrinsic_nullspace_carried(self):
        from conftest import rw1_precision
        Q, E = rw1_precision(6)
        g = Gmrf(Q=Q, mu=np.zeros(6), nullspace=E)
        cs = ConstraintSet(sp.csc_matrix(np.array([[1.0, -1.0, 0, 0, 0, 0]])),
                           np.zeros(1))
        gt = transform(g, build_basis_svd(cs))
        assert gt.nullspace is not None
        assert abs(gt.Q @ gt.nullspace.E).max() <= 1e-8 * abs(gt.Q).max()
