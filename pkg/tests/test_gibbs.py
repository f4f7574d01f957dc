import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from twoset.dataio import TwoSetData, standardize
from twoset.gibbs import (ChainState, GibbsData, NoCommonPredictorWarning, SamplerError,
                          batch_means_se, fc_coef_params, fc_g_log_density, fc_sigma2_params,
                          fc_sigma_eta2_params, fc_u_params, gibbs_run, initial_state,
                          mh_log_ratio, pe_posterior, sigma_eta2_conditional, u_conditional)
from twoset.hyperg import hyperg_fit
from twoset.linmodel import FORWARD, ModelPair, VarianceEstimates, pe_grcm

from oracles import dense_coef_conditional, dense_sigma2_conditional


def random_state(rng, p0s, p1s, k):
    return ChainState(
        xi0=rng.normal(), xi1=rng.normal(),
        alpha0=rng.normal(size=p0s), alpha1=rng.normal(size=p1s),
        beta0=rng.normal(size=k), beta1=rng.normal(size=k),
        sigma0_sq=rng.uniform(0.1, 3), sigma1_sq=rng.uniform(0.1, 3),
        g0=rng.uniform(0.5, 100), g1=rng.uniform(0.5, 100),
        sigma_eta_sq=rng.uniform(0.01, 2), u=rng.uniform(0.1, 5),
    )


def random_problem(rng):
    K = int(rng.integers(1, 6))
    n0, n1 = int(rng.integers(K + 4, 40)), int(rng.integers(K + 4, 40))
    X = rng.standard_normal((n0 + n1, K)) * rng.uniform(0.5, 3, K) + rng.normal(0, 2, K)
    y = rng.standard_normal(n0 + n1) + X @ rng.normal(0, 1, K)
    label = np.r_[np.zeros(n0, int), np.ones(n1, int)]
    data = TwoSetData(y, X, label, tuple(f"x{i + 1}" for i in range(K)))
    cols = rng.permutation(K)
    kc = int(rng.integers(0, K + 1))
    rest = [int(c) for c in cols[kc:]]
    pair = ModelPair(tuple(int(c) for c in cols[:kc]),
                     tuple(c for c in rest if rng.random() < 0.5),
                     tuple(c for c in rest if rng.random() < 0.5))
    return data, pair


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_coefficient_conditional_matches_dense(seed):
    rng = np.random.default_rng(seed)
    data, pair = random_problem(rng)
    gds = [GibbsData.from_data(data, pair, j) for j in (0, 1)]
    state = random_state(rng, len(pair.specific0), len(pair.specific1), pair.k)
    for j in (0, 1):
        Xj, yj = data.subset(j)
        D_raw = Xj[:, list(pair.specific(j)) + list(pair.common)]
        mean, cov = fc_coef_params(state, gds[j], j)
        m_ref, c_ref = dense_coef_conditional(
            yj, D_raw, len(pair.specific(j)), state.xi(1 - j), state.beta(1 - j),
            state.sigma_sq(j), state.g(j), state.sigma_eta_sq)
        np.testing.assert_allclose(mean, m_ref, rtol=1e-10, atol=1e-10)
        np.testing.assert_allclose(cov, c_ref, rtol=1e-10, atol=1e-12)
        shape, scale = fc_sigma2_params(state, gds[j], j)
        s_ref = dense_sigma2_conditional(yj, D_raw, state.xi(j), state.theta(j), state.g(j))
        np.testing.assert_allclose([shape, scale], s_ref, rtol=1e-10)


@settings(max_examples=80, deadline=None)
@given(p=st.integers(1, 12), rate=st.floats(1e-3, 1e3), g=st.floats(1e-3, 1e4),
       g_new=st.floats(1e-3, 1e4))
def test_mh_ratio_is_target_over_proposal(p, rate, g, g_new):
    log_target = fc_g_log_density(g_new, p, rate) - fc_g_log_density(g, p, rate)
    q = stats.invgamma(p / 2, scale=rate)
    ref = log_target + q.logpdf(g) - q.logpdf(g_new)
    assert mh_log_ratio(g, g_new) == pytest.approx(ref, rel=1e-9, abs=1e-9)


def test_mh_example_value():
    # g = 1 -> 3 under a = 3: ratio 3 * (4/2)^(-3/2); above one, so always accepted
    assert np.exp(mh_log_ratio(1.0, 3.0)) == pytest.approx(3 * 2 ** -1.5)


def test_variance_conditionals():
    rng = np.random.default_rng(0)
    state = random_state(rng, 1, 2, 3)
    shape, scale = fc_sigma_eta2_params(state)
    d = np.r_[state.xi1 - state.xi0, state.beta1 - state.beta0]
    assert shape == pytest.approx((3 + 2) / 2)
    assert scale == pytest.approx(d @ d / 2 + 1 / state.u)
    assert fc_u_params(state) == pytest.approx((1.0, 1 + 1 / state.sigma_eta_sq))
    assert sigma_eta2_conditional(0.0, 0, 2.0) == (0.5, 0.5)


def test_sigma2_example_without_coefficients():
    # n = 4, e'e = 2, no slopes -> IG(2, 1)
    y = np.array([1.0, -1.0, 0.0, 0.0]) + 5.0
    gd = GibbsData(y, np.zeros((4, 0)), 0, 0)
    st_ = ChainState(5.0, 5.0, np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0),
                     1.0, 1.0, 1.0, 1.0, 1.0, 1.0)
    assert fc_sigma2_params(st_, gd, 0) == pytest.approx((2.0, 1.0))


def test_half_cauchy_prior_recovery():
    """With no data the sigma_eta^2 / U pair must reproduce a half-Cauchy on sigma_eta."""
    rng = np.random.Generator(np.random.Philox(123))
    m = 100_000
    u = np.ones(m)
    for _ in range(40):  # independent chains, keep the last state of each
        shape, scale = sigma_eta2_conditional(0.0, 0, u)
        s2 = scale / rng.standard_gamma(shape, size=m)
        shape, scale = u_conditional(s2)
        u = scale / rng.standard_gamma(shape, size=m)
    p = stats.kstest(np.sqrt(s2), stats.halfcauchy.cdf).pvalue
    assert p > 0.01


def _single_dataset(seed, n=50, k=3):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((2 * n, k))
    y = 1.0 + X @ np.array([0.5, -0.4, 0.3]) + 0.55 * rng.standard_normal(2 * n)
    label = np.r_[np.zeros(n, int), np.ones(n, int)]
    return standardize(TwoSetData(y, X, label, ("a", "b", "c")))


def test_fixed_g_matches_conjugate_posterior():
    data = _single_dataset(7)
    pair = ModelPair((), (0, 1, 2), (0, 1, 2))
    g = 20.0
    draws = gibbs_run(pair, data, iters=30000, burnin=2000, seed=3, fixed_g=(g, g),
                      fixed_sigma_eta_sq=1e8)
    X0, y0 = data.subset(0)
    Xc, yc = X0 - X0.mean(0), y0 - y0.mean()
    b = np.linalg.lstsq(Xc, yc, rcond=None)[0]
    S = yc @ yc
    r2 = 1 - np.sum((yc - Xc @ b) ** 2) / S
    t = g / (1 + g)
    want_beta, want_s2 = t * b, S * (1 - t * r2) / (len(y0) - 3)
    se_b = batch_means_se(draws.alpha0)
    se_s = batch_means_se(draws.sigma_sq[:, 0])
    assert np.all(np.abs(draws.alpha0.mean(0) - want_beta) <= 3 * se_b)
    assert abs(draws.sigma_sq[:, 0].mean() - want_s2) <= 3 * se_s


def test_sampled_g_matches_hyperg_means():
    data = _single_dataset(11)
    pair = ModelPair((), (0, 1, 2), (0, 1, 2))
    draws = gibbs_run(pair, data, iters=40000, burnin=2000, seed=5, fixed_sigma_eta_sq=1e8)
    X0, y0 = data.subset(0)
    fit = hyperg_fit(X0, y0)
    se_b = batch_means_se(draws.alpha0)
    assert np.all(np.abs(draws.alpha0.mean(0) - fit.beta_mean) <= 3 * se_b)
    assert abs(draws.sigma_sq[:, 0].mean() - fit.sigma_sq_mean) <= 3 * batch_means_se(draws.sigma_sq[:, 0])


def test_seeded_runs_are_reproducible(diabetes):
    pair = ModelPair((0, 1, 2, 3), (4,), (5,))
    a = gibbs_run(pair, diabetes, iters=600, burnin=100, seed=42)
    b = gibbs_run(pair, diabetes, iters=600, burnin=100, seed=42)
    c = gibbs_run(pair, diabetes, iters=600, burnin=100, seed=43)
    np.testing.assert_array_equal(a.as_matrix(), b.as_matrix())
    assert not np.array_equal(a.as_matrix(), c.as_matrix())
    assert len(a) == 500 and a.as_matrix().shape[1] == len(a.columns())
    assert np.all((a.acceptance_rate > 0) & (a.acceptance_rate <= 1))


def test_pe_posterior_maps_draws_linearly(diabetes):
    pair = ModelPair((0, 1, 2, 3, 4, 5, 6, 7), (8,), (9,))
    draws = gibbs_run(pair, diabetes, iters=400, burnin=100, seed=1)
    post = pe_posterior(draws, pair, diabetes, FORWARD)
    for i in (0, 150, 299):
        v = VarianceEstimates(draws.sigma_sq[i, 0], draws.sigma_sq[i, 1], draws.sigma_eta_sq[i])
        assert post.samples[i] == pytest.approx(pe_grcm(v, pair, diabetes, FORWARD).total, rel=1e-12)
    both = pe_posterior(draws, pair, diabetes)
    assert both.mean > post.mean and post.sd > 0


def test_draws_csv(tmp_path, diabetes):
    pair = ModelPair((0, 1), (), (2,))
    draws = gibbs_run(pair, diabetes, iters=50, burnin=10, seed=0)
    path = tmp_path / "d.csv"
    draws.to_csv(path)
    lines = path.read_text().splitlines()
    assert len(lines) == 41
    assert lines[0].split(",")[0] == "iteration" and lines[1].split(",")[0] == "11"


def test_errors_and_warnings(diabetes):
    with pytest.raises(ValueError):
        gibbs_run(ModelPair((0,)), diabetes, iters=10, burnin=10)
    with pytest.warns(NoCommonPredictorWarning):
        gibbs_run(ModelPair((), (0,), (1,)), diabetes, iters=20, burnin=5)
    gds = (GibbsData.from_data(diabetes, ModelPair((0,)), 0),
           GibbsData.from_data(diabetes, ModelPair((0,)), 1))
    bad = initial_state(gds)
    bad.sigma0_sq = -1.0
    with pytest.raises(SamplerError):
        gibbs_run(ModelPair((0,)), diabetes, iters=20, burnin=5, init=bad)


def test_degenerate_residuals_do_not_crash():
    """A perfect fit makes e'e = 0; the scale floor keeps the draw finite."""
    x = np.linspace(-1, 1, 12)
    X = x[:, None]
    y = 2 * x + 1
    data = standardize(TwoSetData(y, X, np.r_[np.zeros(6, int), np.ones(6, int)], ("x",)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        draws = gibbs_run(ModelPair((0,)), data, iters=50, burnin=10, seed=0)
    assert np.all(np.isfinite(draws.sigma_sq))


def test_batch_means_se():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(100_000)
    assert batch_means_se(x) == pytest.approx(1 / np.sqrt(x.size), rel=0.3)
    with pytest.raises(ValueError):
        batch_means_se(np.ones(10))
