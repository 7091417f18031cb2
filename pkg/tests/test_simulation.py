import math

import numpy as np
import pytest
from conftest import params_for
from oracles import serving_distance_cdf

from udn_ase import analytic, simulation
from udn_ase.analytic import NetworkParams
from udn_ase.channel import FadingKind, Link, preset_3gpp_case1, preset_single_slope
from udn_ase.errors import DomainError
from udn_ase.simulation import (
    TrialConfig,
    block_rng,
    make_config,
    run_trial,
    run_trials,
    simulate_ase,
    simulate_coverage,
    tail_mean_interference,
    truncation_radius,
)

CASE1 = preset_3gpp_case1()


@pytest.fixture(scope="module")
def dense_run():
    """10^4 trials at lambda=100, L=0, shared by the distribution checks."""
    cfg = make_config(CASE1, params_for(100, height_m=0), 10_000, seed=11)
    return cfg, run_trials(cfg)


def test_config_validation():
    with pytest.raises(DomainError):
        TrialConfig(params_for(10), CASE1, 0.0, 10)
    with pytest.raises(DomainError):
        TrialConfig(params_for(10), CASE1, 1.0, 0)


def test_fixed_seed_is_bit_identical():
    cfg = make_config(CASE1, params_for(50), 600, seed=5, sim_radius=1.0)
    a, b = run_trials(cfg), run_trials(cfg)
    np.testing.assert_array_equal(a.sinr, b.sinr)
    np.testing.assert_array_equal(a.serving_2d_distance, b.serving_2d_distance)
    first = run_trial(cfg, np.random.default_rng(3))
    assert first == run_trial(cfg, np.random.default_rng(3))


def test_parallel_matches_serial():
    cfg = make_config(CASE1, params_for(50), 1000, seed=9, sim_radius=1.0)
    serial = run_trials(cfg, workers=1)
    parallel = run_trials(cfg, workers=3)
    np.testing.assert_array_equal(serial.sinr, parallel.sinr)
    np.testing.assert_array_equal(serial.num_bs, parallel.num_bs)


def test_trial_prefix_is_stable():
    # a trial's outcome depends only on (seed, index), not on the total count
    short = run_trials(make_config(CASE1, params_for(50), 300, seed=2, sim_radius=1.0))
    long = run_trials(make_config(CASE1, params_for(50), 700, seed=2, sim_radius=1.0))
    np.testing.assert_array_equal(short.sinr, long.sinr[:300])


def test_association_invariant():
    cfg = make_config(CASE1, params_for(300), 2000, seed=1, sim_radius=1.0)
    for k in range(4):
        out = simulation._simulate_block(cfg, block_rng(cfg.seed, k), 500)
        assert np.all(out["gain"] >= out["max_other"])
        assert np.all(out["sinr"] > 0)
    outcome = run_trial(cfg, np.random.default_rng(0))
    assert outcome.serving_gain >= outcome.max_interferer_gain


def test_single_bs_has_no_interference():
    # fading fixed to 1 (K -> infinity) so SINR is exactly P * zeta / N0
    fading = FadingKind.rician(k_intercept_db=1e4, k_slope_db_per_m=0.0)
    p = params_for(1.0, fading=fading)
    cfg = TrialConfig(p, CASE1, 0.2, 2000, seed=4)
    res = run_trials(cfg)
    single = res.num_bs == 1
    assert single.sum() > 100
    r = res.serving_2d_distance[single]
    w = np.sqrt(r**2 + p.height_diff**2)
    gain = np.where(res.serving_los[single], CASE1.path_loss(Link.LOS, w), CASE1.path_loss(Link.NLOS, w))
    np.testing.assert_allclose(res.sinr[single], p.tx_power * gain / p.noise, rtol=1e-12)


def test_empty_fields_are_resampled():
    cfg = TrialConfig(params_for(1.0), CASE1, 0.5, 1000, seed=0)
    res = run_trials(cfg)
    assert np.all(res.num_bs >= 1)
    # P[N = 0] = exp(-pi/4) for this disc
    expected = math.exp(-math.pi * 0.25)
    assert res.resample_rate == pytest.approx(expected, abs=0.05)


def test_mean_bs_count(dense_run):
    cfg, res = dense_run
    mean = cfg.expected_bs
    assert abs(res.num_bs.mean() - mean) <= 3 * math.sqrt(mean / res.trials)


def test_serving_distance_ks(dense_run):
    cfg, res = dense_run
    grid = np.concatenate(([0.0], np.geomspace(1e-5, 3.0, 4000)))
    cdf = serving_distance_cdf(CASE1, cfg.params, grid)
    assert cdf[-1] == pytest.approx(1.0, abs=1e-4)
    samples = np.sort(res.serving_2d_distance)
    model_cdf = np.interp(samples, grid, cdf)
    n = len(samples)
    d = max(np.max(np.arange(1, n + 1) / n - model_cdf), np.max(model_cdf - np.arange(n) / n))
    assert d < 1.628 / math.sqrt(n)  # 1% critical value


@pytest.mark.parametrize("link", [Link.LOS, Link.NLOS])
def test_serving_distance_histogram(dense_run, link):
    cfg, res = dense_run
    lo, hi = 0.045, 0.055
    fn = analytic.distance_pdf_los if link == Link.LOS else analytic.distance_pdf_nlos
    r = np.linspace(lo, hi, 101)
    expected = np.trapezoid(fn(CASE1, cfg.params, 0, r), r)
    is_link = res.serving_los if link == Link.LOS else ~res.serving_los
    hits = np.count_nonzero(is_link & (res.serving_2d_distance > lo) & (res.serving_2d_distance <= hi))
    sd = math.sqrt(res.trials * expected * (1 - expected))
    assert abs(hits - res.trials * expected) <= 3 * sd


def test_coverage_monotone_in_threshold(dense_run):
    _, res = dense_run
    values = [res.coverage(g)[0] for g in np.logspace(-3, 3, 25)]
    assert np.all(np.diff(values) <= 0)


def test_coverage_small_threshold_is_one(dense_run):
    _, res = dense_run
    assert res.coverage(1e-12) == (1.0, 0.0)


def test_all_outage_ase_is_zero(dense_run):
    _, res = dense_run
    assert res.ase(1e30) == (0.0, 0.0)


def test_disjoint_seeds_agree():
    p = params_for(100)
    a, ca = simulate_coverage(make_config(CASE1, p, 3000, seed=101), 1.0)
    b, cb = simulate_coverage(make_config(CASE1, p, 3000, seed=202), 1.0)
    assert abs(a - b) <= 3 * math.hypot(ca, cb) / 1.96


def test_estimators_need_enough_trials():
    cfg = make_config(CASE1, params_for(10), 50, sim_radius=1.0)
    with pytest.raises(DomainError):
        simulate_coverage(cfg, 1.0)
    with pytest.raises(DomainError):
        simulate_ase(cfg, 1.0)


def test_simulated_coverage_matches_analytic_small():
    p = params_for(100)
    est, ci = simulate_coverage(make_config(CASE1, p, 4000, seed=3), 1.0)
    exact = analytic.coverage_probability(CASE1, p, 1.0)
    assert abs(est - exact) <= 3 * ci / 1.96


def test_ase_estimator_is_truncated_rate():
    sinr = np.array([0.5, 1.5, 3.0, 10.0])
    res = simulation.SimulationResult(2.0, sinr, np.ones(4), np.zeros(4, bool), np.ones(4, int), 0)
    expected = 2.0 * (math.log2(2.5) + math.log2(4.0) + math.log2(11.0)) / 4
    assert res.ase(1.0)[0] == pytest.approx(expected, rel=1e-15)


# -- truncation ---------------------------------------------------------------

def test_truncation_closed_matches_numeric():
    p = params_for(100)
    R = truncation_radius(CASE1, p, 0.01)
    closed = tail_mean_interference(CASE1, p, R, "closed")
    numeric = tail_mean_interference(CASE1, p, R, "numeric")
    assert closed == pytest.approx(numeric, rel=1e-6)
    inside = tail_mean_interference(CASE1, p, 0.1, "closed")
    assert inside == pytest.approx(tail_mean_interference(CASE1, p, 0.1, "numeric"), rel=1e-6)


def test_tail_power_law_scaling():
    p = params_for(100, height_m=0)
    model = preset_single_slope()
    ratio = tail_mean_interference(model, p, 1.0) / tail_mean_interference(model, p, 2.0)
    assert ratio == pytest.approx(2**1.75, rel=1e-12)


def test_truncation_radius_decreasing_in_eps():
    p = params_for(100)
    radii = [truncation_radius(CASE1, p, eps) for eps in (0.001, 0.01, 0.1, 0.5, 0.9)]
    assert all(b < a for a, b in zip(radii, radii[1:]))


def test_truncation_needs_decaying_mean():
    model = preset_single_slope(1e-14, 2.0)
    with pytest.raises(DomainError):
        truncation_radius(model, params_for(100, height_m=0), 0.01)
    with pytest.raises(DomainError):
        truncation_radius(CASE1, params_for(100), 1.5)


def test_default_radius_respects_bs_bounds():
    for density in (0.1, 1e3, 1e5):
        p = params_for(density)
        R = simulation.default_sim_radius(CASE1, p)
        count = density * math.pi * R**2
        assert 1000 * (1 - 1e-9) <= count <= simulation.MAX_EXPECTED_BS * (1 + 1e-9)


def test_network_params_reuse():
    p = NetworkParams.from_units(10)
    assert p.with_density(20).density == 20 and p.with_density(20).tx_power == p.tx_power
