import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blockspec.ensembles import (
    BlockCovariance,
    Dims,
    GaussianBlockSample,
    b1b2,
    centered_covariance,
    fisher_matrix,
    fisher_ratio_eigvals,
    gram_blocks,
    offdiag_C,
    projector,
    rescaled_sym,
    sample,
    upsilon,
)
from blockspec.errors import ConfigError, DegenerateData, NotPositiveDefinite
from blockspec.linalg import eig_tol, sym_eig, sym_eigvals, trace_power


def small_instance(seed):
    rng = np.random.default_rng(seed)
    p, q = int(rng.integers(1, 6)), int(rng.integers(1, 6))
    n = int(rng.integers(p + q + 2, 31))
    return gram_blocks(sample(Dims(n=n, p=p, q=q), seed=seed, replicate_id=0))


instances = st.integers(0, 10_000).map(small_instance)


class TestDims:
    def test_derived_quantities(self):
        d = Dims(n=20, p=6, q=4)
        assert d.d == 10
        assert d.alpha == d.s / d.t
        assert d.c == pytest.approx(0.5)
        assert d.t == pytest.approx(4 / 13)

    @pytest.mark.parametrize("kw", [dict(n=3, p=1), dict(n=10, p=0), dict(n=10, p=4, q=5), dict(n=10, p=1.5)])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            Dims(**kw)

    def test_default_q(self):
        assert Dims(n=10, p=3).q == 3


class TestSample:
    def test_deterministic(self):
        a = sample(Dims(n=8, p=2, q=2), seed=1, replicate_id=0)
        b = sample(Dims(n=8, p=2, q=2), seed=1, replicate_id=0)
        assert np.array_equal(a.X, b.X) and np.array_equal(a.Y, b.Y)

    def test_streams_are_distinct(self):
        a = sample(Dims(n=8, p=2, q=2), seed=1, replicate_id=0)
        b = sample(Dims(n=8, p=2, q=2), seed=1, replicate_id=1)
        assert not np.array_equal(a.X, b.X)
        assert not np.array_equal(a.X, a.Y)

    def test_replicate_independent_of_order(self):
        dims = Dims(n=12, p=3)
        forward = [sample(dims, 5, r).X for r in range(3)]
        backward = [sample(dims, 5, r).X for r in reversed(range(3))][::-1]
        assert all(np.array_equal(f, b) for f, b in zip(forward, backward))

    def test_standard_normal_moments(self):
        # 1000 x 1001 ~ 1e6 entries; CLT oracle 3.3 sigma / sqrt(N)
        smp = sample(Dims(n=2002, p=1000, q=1), seed=7)
        x = smp.X.ravel()
        assert x.size >= 10**6
        assert abs(x.mean()) <= 5e-3
        assert abs(x.var() - 1.0) <= 1e-2


class TestGramBlocks:
    def test_equal_blocks(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((3, 9))
        bc = gram_blocks(GaussianBlockSample(Dims(n=10, p=3, q=3), X, X.copy()))
        assert np.array_equal(bc.Psi, bc.S1) and np.array_equal(bc.S1, bc.S2)

    def test_single_column_is_rank_one(self):
        x = np.array([[1.0], [2.0]])
        bc = BlockCovariance(S1=x @ x.T, S2=np.eye(1), Psi=np.zeros((2, 1)))
        assert np.linalg.matrix_rank(bc.S1) == 1
        np.testing.assert_array_equal(bc.S1, np.outer([1, 2], [1, 2]))

    def test_assembled_matrix_is_psd(self):
        bc = gram_blocks(sample(Dims(n=10, p=3, q=3), seed=3))
        w = sym_eigvals(bc.full())
        assert w[-1] >= -eig_tol(w)


class TestRescaled:
    def test_independent_population_case(self):
        bc = BlockCovariance(S1=np.eye(2), S2=3 * np.eye(3), Psi=np.zeros((2, 3)))
        np.testing.assert_array_equal(rescaled_sym(bc), np.eye(5))

    def test_scalar_blocks_give_sample_correlation(self):
        bc = BlockCovariance(S1=np.array([[4.0]]), S2=np.array([[9.0]]), Psi=np.array([[3.0]]))
        r = 3.0 / math.sqrt(4.0 * 9.0)
        np.testing.assert_allclose(rescaled_sym(bc), [[1, r], [r, 1]], atol=1e-15)

    @settings(max_examples=40, deadline=None)
    @given(bc=instances)
    def test_diagonal_blocks_are_identity(self, bc):
        R = rescaled_sym(bc)
        p = bc.p
        assert np.max(np.abs(R[:p, :p] - np.eye(p))) <= 1e-8
        assert np.max(np.abs(R[p:, p:] - np.eye(bc.q))) <= 1e-8


class TestOffdiagC:
    def test_zero_cross_block(self):
        bc = BlockCovariance(S1=np.eye(2), S2=np.eye(2), Psi=np.zeros((2, 2)))
        assert not np.any(offdiag_C(bc))

    def test_trace_and_cubed_trace(self):
        bc = gram_blocks(sample(Dims(n=20, p=3, q=3), seed=11))
        C = offdiag_C(bc)
        assert np.trace(C) == 0.0
        assert abs(trace_power(C, 3)) <= 1e-10

    @settings(max_examples=40, deadline=None)
    @given(bc=instances)
    def test_similar_to_rescaled(self, bc):
        C = offdiag_C(bc)
        d = bc.p + bc.q
        # I + C is similar to a symmetric matrix, so its spectrum is real
        lam = np.sort(np.linalg.eigvals(np.eye(d) + C).real)
        np.testing.assert_allclose(lam, np.sort(sym_eigvals(rescaled_sym(bc))), atol=1e-6)


class TestProjector:
    def test_unit_row(self):
        np.testing.assert_allclose(projector([[1.0, 0.0, 0.0]]), np.diag([1.0, 0.0, 0.0]), atol=1e-15)

    @pytest.mark.parametrize("seed", range(5))
    def test_projector_contract(self, seed):
        rng = np.random.default_rng(seed)
        r, m = int(rng.integers(1, 6)), int(rng.integers(6, 15))
        P = projector(rng.standard_normal((r, m)))
        assert np.array_equal(P, P.T)
        assert np.max(np.abs(P @ P - P)) <= 1e-8
        assert abs(np.trace(P) - r) <= 1e-6
        w, _ = sym_eig(P)
        assert np.all(np.minimum(np.abs(w), np.abs(w - 1)) <= 1e-7)

    def test_rank_deficient(self):
        with pytest.raises(NotPositiveDefinite):
            projector([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]])


class TestFisher:
    def test_y_orthogonal_to_x(self):
        m = 8
        X = np.zeros((2, m))
        X[0, 0] = X[1, 1] = 1.0
        Y = np.zeros((2, m))
        Y[0, 2:5] = [1.0, 2.0, 0.5]
        Y[1, 4:8] = [1.0, -1.0, 3.0, 1.0]
        F = fisher_matrix(GaussianBlockSample(Dims(n=m + 1, p=2, q=2), X, Y))
        np.testing.assert_allclose(F, np.zeros((2, 2)), atol=1e-14)

    def test_y_inside_row_space_of_x(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((3, 9))
        Y = rng.standard_normal((2, 3)) @ X
        with pytest.raises(NotPositiveDefinite):
            fisher_matrix(GaussianBlockSample(Dims(n=10, p=3, q=2), X, Y))

    def test_fisher_ratio_matches_whitened_cross_block(self):
        smp = sample(Dims(n=30, p=4, q=4), seed=2)
        bc = gram_blocks(smp)
        U = upsilon(bc)
        got = fisher_ratio_eigvals(fisher_matrix(smp), smp.dims.alpha)
        np.testing.assert_allclose(got, sym_eigvals(U @ U.T), atol=1e-6)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_fisher_link_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        p, q = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        n = int(rng.integers(p + q + 2, 31))
        smp = sample(Dims(n=n, p=p, q=q), seed=seed)
        ratio = np.sort(fisher_ratio_eigvals(fisher_matrix(smp), smp.dims.alpha))[::-1]
        brute = np.sort(np.linalg.eigvals(b1b2(gram_blocks(smp))).real)[::-1]
        k = min(p, q)
        np.testing.assert_allclose(ratio[:k], brute[:k], atol=1e-6)
        assert np.all(np.abs(ratio[k:]) <= 1e-6) and np.all(np.abs(brute[k:]) <= 1e-6)


class TestCenteredCovariance:
    def test_constant_columns(self):
        Z = np.tile(np.array([[1.0], [2.0], [3.0]]), (1, 5))
        with pytest.raises(DegenerateData):
            centered_covariance(Z, 1)

    def test_two_points(self):
        # scalar blocks stay nonsingular with two observations
        z1, z2 = np.array([1.0, 2.0]), np.array([0.0, -1.5])
        bc = centered_covariance(np.column_stack([z1, z2]), 1)
        # mean is the midpoint, each deviation is +-(z1 - z2)/2, and the sum is divided by n = 2
        diff = z1 - z2
        oracle = np.outer(diff, diff) / 4.0
        np.testing.assert_allclose(bc.full(), oracle, atol=1e-15)

    def test_law_of_large_numbers(self):
        Z = np.random.default_rng(0).standard_normal((4, 100_000))
        bc = centered_covariance(Z, 2)
        assert np.max(np.abs(bc.S1 - np.eye(2))) <= 0.05
        assert np.max(np.abs(bc.S2 - np.eye(2))) <= 0.05
        assert np.max(np.abs(bc.Psi)) <= 0.05

    def test_bad_split(self):
        with pytest.raises(ConfigError):
            centered_covariance(np.ones((3, 4)), 3)


class TestInvariants:
    @settings(max_examples=60, deadline=None)
    @given(bc=instances)
    def test_spectrum_in_unit_band(self, bc):
        w = sym_eigvals(rescaled_sym(bc))
        assert w[-1] >= -1e-8 and w[0] <= 2 + 1e-8

    @settings(max_examples=60, deadline=None)
    @given(bc=instances)
    def test_exact_first_moment(self, bc):
        d = bc.p + bc.q
        assert abs(np.trace(rescaled_sym(bc)) - d) <= 1e-9 * d

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 10_000), p=st.integers(1, 5))
    def test_balanced_spectrum_symmetric_about_one(self, seed, p):
        bc = gram_blocks(sample(Dims(n=2 * p + 6, p=p), seed=seed))
        w = sym_eigvals(rescaled_sym(bc))
        assert np.max(np.abs(w + w[::-1] - 2.0)) <= 1e-6

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_canonical_correlation_structure(self, seed):
        rng = np.random.default_rng(seed)
        p, q = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        n = int(rng.integers(p + q + 2, p + q + 9))
        smp = sample(Dims(n=n, p=p, q=q), seed=seed)
        bc = gram_blocks(smp)
        U = upsilon(bc)
        k = min(p, q)
        uu = sym_eigvals(U @ U.T)[:k]
        # brute force: principal angles between the row spaces of X and Y
        PP = projector(smp.X) @ projector(smp.Y)
        pp = np.sort(np.linalg.eigvals(PP).real)[::-1][:k]
        np.testing.assert_allclose(uu, pp, atol=1e-6)
        sig = np.sqrt(np.clip(uu, 0, None))
        expected = np.sort(np.concatenate([1 + sig, 1 - sig, np.ones(abs(p - q))]))
        np.testing.assert_allclose(np.sort(sym_eigvals(rescaled_sym(bc))), expected, atol=1e-6)

    @settings(max_examples=40, deadline=None)
    @given(bc=instances)
    def test_trace_powers_of_C(self, bc):
        C = offdiag_C(bc)
        d = bc.p + bc.q
        M = b1b2(bc)
        for ell in (1, 3, 5, 7):
            assert abs(trace_power(C, ell)) <= 1e-10 * d
        for ell in (2, 4, 6, 8):
            assert abs(trace_power(C, ell) - 2 * trace_power(M, ell // 2)) <= 1e-6
