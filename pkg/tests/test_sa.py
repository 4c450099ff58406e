import math

import numpy as np
import pytest

from src.analytic.single_period import reference_params
from src.sa.two_timescale import (
    FAST_STOCK,
    SAConfig,
    StepSchedule,
    convergence_frame,
    estimate_grad_p,
    estimate_grad_x,
    median_final,
    run_seeds,
    run_two_timescale,
    trace_frame,
    tracking_diagnostics,
)
from src.utils.errors import ConfigError


def _batch_mean_and_stderr(estimator, model, p, x, rng, batches=200, size=2500):
    lam = model.rate(p)
    means = np.array([estimator(model, p, x, rng.poisson(lam, size=size)) for _ in range(batches)])
    return means.mean(), means.std(ddof=1) / math.sqrt(batches)


def test_estimate_grad_x_branches(reference_model):
    params = reference_params()
    h, b, c = params.costs.h, params.costs.b, params.costs.c
    assert estimate_grad_x(reference_model, 55.0, 5.0, [3]) == -h - c
    assert estimate_grad_x(reference_model, 55.0, 5.0, [5]) == -h - c
    assert estimate_grad_x(reference_model, 55.0, 5.0, [6]) == b - c + 55.0
    assert estimate_grad_x(reference_model, c - b, 5.0, [9]) == 0.0


def test_estimate_grad_p_at_zero_stock(reference_model):
    expected = -reference_params().costs.b * reference_model.rate_slope
    assert estimate_grad_p(reference_model, 55.0, 0.0, [0]) == pytest.approx(expected)
    assert estimate_grad_p(reference_model, 55.0, 0.0, [7]) == pytest.approx(expected)


@pytest.mark.parametrize('p, x', [(55.0, 5.0), (20.0, 9.0), (70.0, 1.5), (40.0, 3.0), (10.0, 14.0)])
def test_estimators_are_unbiased(reference_model, p, x):
    rng = np.random.default_rng(int(p * 100 + x))
    g_mean, g_err = _batch_mean_and_stderr(estimate_grad_p, reference_model, p, x, rng)
    h_mean, h_err = _batch_mean_and_stderr(estimate_grad_x, reference_model, p, x, rng)
    assert abs(g_mean - reference_model.grad_p(p, x)) <= 4.0 * g_err
    assert abs(h_mean - reference_model.grad_x(p, x)) <= 4.0 * h_err


def test_more_samples_per_step_reduce_variance(reference_model):
    rng = np.random.default_rng(3)
    lam = reference_model.rate(55.0)
    single = np.array([estimate_grad_p(reference_model, 55.0, 5.0, rng.poisson(lam, size=1)) for _ in range(10_000)])
    pooled = np.array([estimate_grad_p(reference_model, 55.0, 5.0, rng.poisson(lam, size=16)) for _ in range(10_000)])
    assert pooled.var() / single.var() == pytest.approx(1.0 / 16.0, rel=0.2)


def test_schedule_validation():
    StepSchedule().validate()
    with pytest.raises(ConfigError):
        StepSchedule(u=0.4).validate()
    with pytest.raises(ConfigError):
        StepSchedule(u=0.9, v=0.8).validate()
    with pytest.raises(ConfigError):
        StepSchedule(a0=0.1, b0=10.0).validate()


def test_schedule_ratio_vanishes():
    schedule = StepSchedule()
    k = np.array([1e2, 1e4, 1e6])
    ratio = schedule.beta(k) / schedule.alpha(k)
    assert np.all(np.diff(ratio) < 0)


def test_zero_iterations_returns_initial_point(reference_model):
    trace = run_two_timescale(reference_model, SAConfig(p0=33.0, x0=4.0, iterations=0))
    assert trace.final == (33.0, 4.0)


def test_zero_steps_keep_iterates_constant(reference_model):
    config = SAConfig(schedule=StepSchedule(a0=0.0, b0=0.0), p0=30.0, x0=7.0, iterations=500)
    trace = run_two_timescale(reference_model, config)
    assert np.all(trace.p == 30.0)
    assert np.all(trace.x == 7.0)


def test_iterates_stay_in_domain_and_are_deterministic(reference_model):
    config = SAConfig(schedule=StepSchedule(a0=50.0, b0=20.0), iterations=3000, seed=4)
    a = run_two_timescale(reference_model, config)
    b = run_two_timescale(reference_model, config)
    assert np.array_equal(a.p, b.p) and np.array_equal(a.x, b.x)
    assert a.p.min() >= 0.0 and a.p.max() <= 80.0
    assert a.x.min() >= 0.0 and a.x.max() <= 20.0
    assert np.all(np.isfinite(a.g_hat)) and np.all(np.isfinite(a.h_hat))


def test_tracking_is_zero_at_fixed_optimum(reference_model):
    p5 = reference_model.optimal_price_given_x(5.0)
    config = SAConfig(schedule=StepSchedule(a0=0.0, b0=0.0), p0=p5, x0=5.0, iterations=400)
    report = tracking_diagnostics([run_two_timescale(reference_model, config)], config.schedule)
    assert np.allclose(report.mean_abs_error, 0.0, atol=1e-9)


def test_converges_near_reported_optimum(reference_model):
    traces = run_seeds(reference_model, SAConfig(iterations=50_000), list(range(7)))
    p_med, x_med = median_final(traces)
    assert abs(p_med - 55.0) <= 3.0
    assert round(x_med) == 5

    report = tracking_diagnostics(traces, StepSchedule())
    assert report.decays
    assert math.isfinite(report.loglog_slope)


def test_trace_exports(reference_model):
    traces = run_seeds(reference_model, SAConfig(iterations=1000), [0, 1, 2])
    frame = trace_frame(traces[0], every=100)
    assert list(frame.columns) == ['k', 'p', 'x', 'g_hat', 'h_hat']
    assert list(frame['k']) == list(range(0, 1000, 100))
    conv = convergence_frame(traces, every=250)
    assert list(conv['k']) == [0, 250, 500, 750, 1000]
    assert conv['p_q25'].le(conv['p_median']).all() and conv['p_median'].le(conv['p_q75']).all()


def test_config_validation():
    with pytest.raises(ConfigError):
        SAConfig(fast_variable='demand')
    with pytest.raises(ConfigError):
        SAConfig(samples_per_step=0)


@pytest.mark.slow
def test_single_period_twenty_seed_target(reference_model):
    traces = run_seeds(reference_model, SAConfig(iterations=200_000), list(range(20)))
    p_med, x_med = median_final(traces)
    assert abs(p_med - 55.0) <= 3.0
    assert round(x_med) == 5
    assert reference_model.check_optimality(p_med, round(x_med)).satisfied
    assert tracking_diagnostics(traces, StepSchedule()).decays


@pytest.mark.slow
def test_swapped_roles_reach_an_optimal_point(reference_model):
    config = SAConfig(schedule=StepSchedule(a0=2.0, u=0.6, b0=2.0, v=0.85), fast_variable=FAST_STOCK,
                      p0=45.0, iterations=200_000)
    traces = run_seeds(reference_model, config, list(range(7)))
    p_med, x_med = median_final(traces)
    assert reference_model.check_optimality(p_med, round(x_med)).satisfied
