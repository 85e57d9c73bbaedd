import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blockspec.dependence import (
    SUP_CONSTANT,
    StandardizedMatrix,
    adjusted_rv,
    adjusted_rv_from_blocks,
    bures_sq,
    dep_coefficient,
)
from blockspec.ensembles import BlockCovariance, Dims, b1b2, gram_blocks, sample
from blockspec.errors import ConfigError


def random_bc(seed):
    rng = np.random.default_rng(seed)
    p, q = int(rng.integers(1, 6)), int(rng.integers(1, 6))
    n = int(rng.integers(p + q + 3, 40))
    return gram_blocks(sample(Dims(n=n, p=p, q=q), seed=seed))


class TestBures:
    def test_identity(self):
        assert bures_sq(np.eye(3), np.eye(3)) == pytest.approx(0.0, abs=1e-14)

    def test_scaled_identity(self):
        # tr 4I + tr I - 2 tr (2I) = p
        for p in (1, 3, 6):
            assert bures_sq(4 * np.eye(p), np.eye(p)) == pytest.approx(p, abs=1e-12)

    def test_commuting_diagonal(self):
        a, b = np.array([1.0, 4.0, 0.25]), np.array([9.0, 1.0, 1.0])
        oracle = np.sum((np.sqrt(a) - np.sqrt(b)) ** 2)
        assert bures_sq(np.diag(a), np.diag(b)) == pytest.approx(oracle, abs=1e-12)

    def test_rank_one_against_identity(self):
        assert bures_sq(np.ones((2, 2)), np.eye(2)) == pytest.approx(4 - 2 * math.sqrt(2), abs=1e-8)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**31), dim=st.integers(1, 12))
    def test_symmetric_and_nonnegative(self, seed, dim):
        rng = np.random.default_rng(seed)
        X, Y = rng.standard_normal((2, dim, dim + 2))
        A, B = X @ X.T, Y @ Y.T
        ab, ba = bures_sq(A, B), bures_sq(B, A)
        assert ab >= -1e-8
        assert abs(ab - ba) <= 1e-7 * (1 + np.trace(A) + np.trace(B))

    def test_shape_mismatch(self):
        with pytest.raises(ConfigError):
            bures_sq(np.eye(2), np.eye(3))


class TestStandardized:
    def test_R(self):
        sm = StandardizedMatrix(np.array([[0.5, 0.0]]))
        assert (sm.p, sm.q) == (1, 2)
        np.testing.assert_array_equal(sm.R, [[1, 0.5, 0], [0.5, 1, 0], [0, 0, 1]])

    def test_rejects_large_singular_value(self):
        with pytest.raises(ConfigError):
            StandardizedMatrix(np.array([[1.5]]))

    def test_from_full_is_scale_invariant(self):
        rng = np.random.default_rng(1)
        Z = rng.standard_normal((5, 50))
        S = Z @ Z.T / 50
        D = np.diag([1.0, 3.0, 0.2, 5.0, 2.0])
        U1 = StandardizedMatrix.from_full(S, 2).Upsilon
        U2 = StandardizedMatrix.from_full(D @ S @ D, 2).Upsilon
        # diagonal rescaling only rotates within blocks, so singular values match
        np.testing.assert_allclose(np.linalg.svd(U1, compute_uv=False),
                                   np.linalg.svd(U2, compute_uv=False), atol=1e-10)


class TestDepCoefficient:
    def test_zero_cross_block(self):
        assert dep_coefficient(StandardizedMatrix(np.zeros((3, 2)))) == 0.0

    def test_full_correlation_scalar(self):
        sm = StandardizedMatrix(np.array([[1.0]]))
        assert dep_coefficient(sm) == pytest.approx(2.0, abs=1e-7)
        assert dep_coefficient(sm, denominator_doubled=True) == pytest.approx(1.0, abs=1e-7)

    def test_closed_form_per_singular_value(self):
        # each singular value s contributes (sqrt(1+s) - 1)^2 + (sqrt(1-s) - 1)^2
        s = np.array([0.9, 0.4, 0.1])
        U = np.diag(s)
        num = np.sum((np.sqrt(1 + s) - 1) ** 2 + (np.sqrt(1 - s) - 1) ** 2)
        sm = StandardizedMatrix(U)
        assert dep_coefficient(sm) == pytest.approx(num / (SUP_CONSTANT * 3), abs=1e-9)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_doubled_is_half(self, seed):
        sm = StandardizedMatrix.from_covariance(random_bc(seed))
        full = dep_coefficient(sm)
        assert dep_coefficient(sm, denominator_doubled=True) == pytest.approx(full / 2)
        assert 0.0 <= full <= 2.0 + 1e-9


class TestAdjustedRV:
    def test_extremes(self):
        assert adjusted_rv(StandardizedMatrix(np.zeros((2, 3)))) == 0.0
        assert adjusted_rv(StandardizedMatrix(np.eye(3))) == pytest.approx(1.0)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_routes_agree(self, seed):
        bc = random_bc(seed)
        sm = StandardizedMatrix.from_covariance(bc)
        a = adjusted_rv(sm)
        assert abs(a - adjusted_rv_from_blocks(bc)) <= 1e-8
        # (q / p) times the mean eigenvalue of U.T U
        ev = np.linalg.eigvalsh(sm.Upsilon.T @ sm.Upsilon)
        assert a == pytest.approx(bc.q / bc.p * np.mean(ev), abs=1e-10)
        assert a == pytest.approx(np.trace(b1b2(bc)) / bc.p, abs=1e-8)

    def test_population_example(self):
        bc = BlockCovariance(S1=np.eye(2), S2=np.eye(1), Psi=np.array([[0.6], [0.0]]))
        assert adjusted_rv_from_blocks(bc) == pytest.approx(0.18)
