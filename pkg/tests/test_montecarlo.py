import json

import numpy as np
import pytest

from twoset.linmodel import BACKWARD, FORWARD, ModelPair
from twoset.montecarlo import (SimConfig, _blocks, _draw_responses, closed_form_total, design_data,
                               empirical_pe, load_suite, random_configs, run_suite, simulate_once)


def within(mean, se, target, z=3.0):
    return abs(mean - target) <= z * se


def test_noise_free_data_is_linear():
    cfg = SimConfig(n0=20, n1=15, sigma0_sq=0, sigma1_sq=0, sigma_eta_sq=0, common=(0, 1),
                    specific1=(2,), beta0=[1.0, -2.0], alpha1=[0.5], intercept=3.0)
    data = simulate_once(cfg, np.random.default_rng(0))
    for j in (0, 1):
        X, y = data.subset(j)
        A = np.column_stack([np.ones(len(y)), X])
        resid = y - A @ np.linalg.lstsq(A, y, rcond=None)[0]
        assert np.max(np.abs(resid)) < 1e-10


def test_fixed_seed_reproducible():
    cfg = SimConfig(n0=20, n1=20, sigma0_sq=1, sigma1_sq=1, sigma_eta_sq=0.5, common=(0,))
    a = simulate_once(cfg, np.random.Generator(np.random.Philox(5)))
    b = simulate_once(cfg, np.random.Generator(np.random.Philox(5)))
    np.testing.assert_array_equal(a.y, b.y)
    assert empirical_pe(cfg) == empirical_pe(cfg)


def test_eta_variance_law_of_large_numbers():
    cfg = SimConfig(n0=10, n1=10, sigma0_sq=0, sigma1_sq=0, sigma_eta_sq=0.7, common=(0, 1))
    data = design_data(cfg)
    _, Y1 = _draw_responses(cfg, data, np.random.default_rng(1), 100_000)
    A, _ = _blocks(data, cfg.pair, 1)
    coef = np.linalg.lstsq(A, Y1, rcond=None)[0]
    eta = coef[:2] - np.array(cfg.beta0)[:, None]
    assert np.var(eta) == pytest.approx(0.7, rel=0.02)


def test_intercept_only_classical_variance():
    cfg = SimConfig(n0=30, n1=40, sigma0_sq=1.5, sigma1_sq=1.5, sigma_eta_sq=0.0,
                    n_predictors=1, replications=100_000, seed=2)
    m, se = empirical_pe(cfg, direction=FORWARD)
    assert within(m, se, 1.5 * (1 + 1 / 30))


def test_all_common_instance():
    cfg = SimConfig(n0=50, n1=50, sigma0_sq=0.8, sigma1_sq=0.4, sigma_eta_sq=0.3, common=(0, 1),
                    replications=100_000, seed=3)
    data = design_data(cfg)
    for d in (FORWARD, BACKWARD):
        m, se = empirical_pe(cfg, direction=d, data=data)
        assert within(m, se, closed_form_total(cfg, d, data, formula="rcm"))
        assert closed_form_total(cfg, d, data) == pytest.approx(
            closed_form_total(cfg, d, data, formula="rcm"), rel=1e-12)


def test_specific_predictor_instance():
    cfg = SimConfig(n0=40, n1=30, sigma0_sq=0.5, sigma1_sq=1.0, sigma_eta_sq=0.2, common=(0,),
                    specific0=(1,), specific1=(2,), replications=100_000, seed=4)
    data = design_data(cfg)
    for d in (FORWARD, BACKWARD):
        m, se = empirical_pe(cfg, direction=d, data=data)
        assert within(m, se, closed_form_total(cfg, d, data))


def test_se_shrinks_like_root_r():
    base = dict(n0=30, n1=30, sigma0_sq=1.0, sigma1_sq=1.0, sigma_eta_sq=0.1, common=(0,), seed=6)
    _, se1 = empirical_pe(SimConfig(replications=20_000, **base))
    _, se4 = empirical_pe(SimConfig(replications=80_000, **base))
    assert se1 / se4 == pytest.approx(2.0, rel=0.1)


def test_misspecified_estimation_pair_runs():
    cfg = SimConfig(n0=30, n1=30, sigma0_sq=1.0, sigma1_sq=1.0, sigma_eta_sq=0.0, common=(0,),
                    specific1=(1,), replications=2000)
    m_true, _ = empirical_pe(cfg)
    m_short, _ = empirical_pe(cfg, pair=ModelPair((0,)))
    assert m_short > m_true  # leaving out the target's own predictor costs accuracy


def test_redrawn_designs():
    cfg = SimConfig(n0=30, n1=30, sigma0_sq=1, sigma1_sq=1, sigma_eta_sq=0.1, common=(0,),
                    replications=4000, chunk=1000, redraw_designs=True)
    m, se = empirical_pe(cfg)
    assert np.isfinite(m) and se > 0


def test_config_validation_and_json(tmp_path):
    with pytest.raises(ValueError):
        SimConfig(n0=10, n1=10, sigma0_sq=-1, sigma1_sq=1, sigma_eta_sq=0)
    with pytest.raises(ValueError):
        SimConfig(n0=10, n1=10, sigma0_sq=1, sigma1_sq=1, sigma_eta_sq=0, replications=0)
    with pytest.raises(ValueError):
        SimConfig(n0=10, n1=10, sigma0_sq=1, sigma1_sq=1, sigma_eta_sq=0, common=(0,), beta0=[1, 2])
    cfg = SimConfig(n0=25, n1=20, sigma0_sq=1, sigma1_sq=2, sigma_eta_sq=0.1, common=(0,),
                    specific0=(2,), replications=500)
    path = tmp_path / "suite.json"
    path.write_text(json.dumps({"tolerance_se": 4.0, "configs": [cfg.to_dict()]}))
    configs, tol = load_suite(path)
    assert tol == 4.0 and configs[0] == cfg
    rows = run_suite(configs, tol)
    assert len(rows) == 2 and {r["direction"] for r in rows} == {"S0|S1", "S1|S0"}


def test_random_configs_ranges():
    cfgs = random_configs(30, seed=1, replications=10)
    for c in cfgs:
        assert 20 <= c.n0 <= 200 and 20 <= c.n1 <= 200
        assert 0 <= len(c.common) <= 4
        assert len(c.specific0) <= 2 and len(c.specific1) <= 2
        assert all(0.01 <= v <= 4 for v in (c.sigma0_sq, c.sigma1_sq, c.sigma_eta_sq))
