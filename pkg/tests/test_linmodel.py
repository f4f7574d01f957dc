import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from twoset.dataio import TwoSetData, standardize
from twoset.linmodel import (BACKWARD, FORWARD, ModelPair, RankDeficientError, VarianceEstimates,
                             annihilate, fw_fit, grcm_coefficients, ols, pair_designs, pe_grcm,
                             pe_rcm)

from conftest import random_two_set
from oracles import dense_annihilator, dense_pe_grcm


@settings(max_examples=50, deadline=None)
@given(n=st.integers(5, 60), k=st.integers(1, 4), m=st.integers(1, 3), seed=st.integers(0, 2**31))
def test_ols_matches_lstsq(n, k, m, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, k))
    Y = rng.standard_normal((n, m))
    np.testing.assert_allclose(ols(X, Y), np.linalg.lstsq(X, Y, rcond=None)[0], atol=1e-10)


def test_fw_equals_joint_ols_100_instances():
    rng = np.random.default_rng(20240)
    for _ in range(100):
        n = int(rng.integers(8, 80))
        p, k = int(rng.integers(0, 3)), int(rng.integers(1, 4))
        Z = rng.standard_normal((n, p))
        X = rng.standard_normal((n, k)) + (Z @ rng.standard_normal((p, k)) if p else 0)
        y = rng.standard_normal(n)
        alpha, beta = fw_fit(Z, X, y)
        joint = np.linalg.lstsq(np.hstack([Z, X]), y, rcond=None)[0]
        np.testing.assert_allclose(np.r_[alpha, beta], joint, rtol=1e-8, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(6, 50), p=st.integers(1, 3), k=st.integers(1, 3), seed=st.integers(0, 2**31))
def test_annihilated_columns_orthogonal_to_z(n, p, k, seed):
    rng = np.random.default_rng(seed)
    Z, A = rng.standard_normal((n, p)), rng.standard_normal((n, k))
    R = annihilate(Z, A)
    assert np.max(np.abs(Z.T @ R)) < 1e-10 * max(1.0, np.abs(A).max() * n)
    np.testing.assert_allclose(R, dense_annihilator(Z) @ A, atol=1e-10)


def test_rank_deficiency_reports_column():
    X = np.random.default_rng(0).standard_normal((20, 3))
    X = np.column_stack([X, X[:, 0] + X[:, 1]])
    with pytest.raises(RankDeficientError) as info:
        ols(X, np.ones(20))
    assert info.value.column is not None
    with pytest.raises(RankDeficientError):
        ols(np.ones((2, 3)), np.ones(2))


def test_model_pair_validation():
    with pytest.raises(ValueError):
        ModelPair((0, 1), (1,), ())
    with pytest.raises(ValueError):
        ModelPair((0, 0))
    with pytest.raises(ValueError):
        ModelPair((0,), intercept_in_common=False, intercept_random=True)
    pair = ModelPair((2,), (0,), (1,))
    assert pair.swapped().specific0 == (1,) and pair.predictors(1) == (2, 1)
    with pytest.raises(ValueError):
        pair.validate(2)


def test_variances_must_be_nonnegative():
    with pytest.raises(ValueError):
        VarianceEstimates(-1.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        VarianceEstimates(1.0, np.nan, 0.0)


def test_pe_rcm_against_dense_formula():
    rng = np.random.default_rng(3)
    for _ in range(20):
        n0, n1, k = int(rng.integers(10, 60)), int(rng.integers(10, 60)), int(rng.integers(0, 4))
        X0 = np.column_stack([rng.standard_normal((n0, k)), np.ones(n0)])
        X1 = np.column_stack([rng.standard_normal((n1, k)) * 2 + 1, np.ones(n1)])
        v = VarianceEstimates(*rng.uniform(0.1, 2, 3))
        br = pe_rcm(v, X0, X1, FORWARD, k=k)
        t3 = v.sigma0_sq / n1 * np.trace(np.linalg.inv(X0.T @ X0) @ X1.T @ X1)
        np.testing.assert_allclose([br.term1, br.term2, br.term3],
                                   [v.sigma1_sq, k * v.sigma_eta_sq, t3], rtol=1e-12)
        assert br.total == pytest.approx(br.term1 + br.term2 + br.term3, rel=1e-15)
        assert br.label == "S1|S0"


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), K=st.integers(2, 5), intercept_random=st.booleans())
def test_pe_grcm_against_dense_projectors(seed, K, intercept_random):
    rng = np.random.default_rng(seed)
    data = random_two_set(rng, int(rng.integers(12, 40)), int(rng.integers(12, 40)), K)
    cols = rng.permutation(K)
    kc = int(rng.integers(0, K))
    common = tuple(int(c) for c in cols[:kc])
    rest = [int(c) for c in cols[kc:]]
    s0 = tuple(c for c in rest if rng.random() < 0.5)
    s1 = tuple(c for c in rest if rng.random() < 0.5)
    pair = ModelPair(common, s0, s1, intercept_random=intercept_random)
    v = VarianceEstimates(*rng.uniform(0.05, 3, 3))
    for t, s in (FORWARD, BACKWARD):
        W_s, X_s = pair_designs(data, pair, s)
        W_t, X_t = pair_designs(data, pair, t)
        eta_cols = list(range(X_t.shape[1])) if intercept_random else list(range(X_t.shape[1] - 1))
        want = dense_pe_grcm(v, W_s, X_s, W_t, X_t, s, t, eta_cols)
        br = pe_grcm(v, pair, data, (t, s))
        np.testing.assert_allclose([br.term1, br.term2, br.term3], want, rtol=1e-10, atol=1e-14)


def test_pe_grcm_reduces_to_pe_rcm(geyser, diabetes):
    for data in (geyser, diabetes):
        K = data.n_predictors
        for common in [(), (0,), tuple(range(K))]:
            pair = ModelPair(common)
            v = VarianceEstimates(0.3, 0.7, 0.05)
            for t, s in (FORWARD, BACKWARD):
                W_s, X_s = pair_designs(data, pair, s)
                W_t, X_t = pair_designs(data, pair, t)
                a = pe_grcm(v, pair, data, (t, s))
                b = pe_rcm(v, X_s, X_t, (t, s), k=len(common))
                np.testing.assert_allclose([a.term1, a.term2, a.term3, a.total],
                                           [b.term1, b.term2, b.term3, b.total], rtol=1e-12)


def test_orthogonal_design_third_term():
    """With X'X = n I in both datasets the trace is (k + 1) n_t / n_s."""
    rng = np.random.default_rng(9)
    for n0, n1, k in [(40, 30, 2), (25, 60, 3), (100, 100, 1)]:
        def ortho(n):
            A = np.column_stack([np.ones(n), rng.standard_normal((n, k))])
            Q, _ = np.linalg.qr(A)
            return Q * np.sqrt(n) * np.sign(Q[0, 0])
        X0, X1 = ortho(n0), ortho(n1)
        v = VarianceEstimates(0.8, 0.2, 0.1)
        br = pe_rcm(v, X0, X1, FORWARD, k=k)
        assert br.term3 == pytest.approx(k * v.sigma0_sq / n0 + v.sigma0_sq / n0, rel=1e-10)


def test_grcm_coefficients_are_linear(diabetes):
    pair = ModelPair((0, 1, 2), (3,), (4, 5))
    C = grcm_coefficients(pair, diabetes, FORWARD)
    rng = np.random.default_rng(1)
    for _ in range(5):
        v = VarianceEstimates(*rng.uniform(0, 1, 3))
        br = pe_grcm(v, pair, diabetes, FORWARD)
        np.testing.assert_allclose(C @ v.as_array(), [br.term1, br.term2, br.term3], rtol=1e-14)
    # term1 only uses the target variance, term3 only the source variance
    assert C[0, 0] == 0 and C[2, 1] == 0 and C[1, 0] == C[1, 1] == 0


def test_intercept_outside_common_block(diabetes):
    pair = ModelPair((0, 1), (2,), (3,), intercept_in_common=False)
    br = pe_grcm(VarianceEstimates(0.3, 0.2, 0.01), pair, diabetes, BACKWARD)
    n0 = diabetes.n_j(0)
    assert br.term1 == pytest.approx((n0 - 2) / n0 * 0.3)
