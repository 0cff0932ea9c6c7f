"""
Tests for Adam, the L-BFGS two-loop recursion, the Hager-Zhang line search and the
two-phase training driver, on closed-form objectives.
"""
import logging
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from errors import ConfigurationError, NotADescentDirectionError, StepRejectedError, TrainingDivergedError
from optimizers import (
    HISTORY_COLUMNS,
    AdamConfig,
    AdamState,
    BatchSampler,
    Evaluation,
    LbfgsState,
    LineSearchConfig,
    TrainingSchedule,
    adam_step,
    hager_zhang_search,
    lbfgs_direction,
    train_phase,
)


def quadratic(x, batch=None):
    """1/2 (x^2 + 10 y^2)."""
    return Evaluation(0.5 * (x[0] ** 2 + 10.0 * x[1] ** 2), np.array([x[0], 10.0 * x[1]]),
                      {"loss_g": 0.5 * x[0] ** 2, "loss_bc_ic": 5.0 * x[1] ** 2})


def test_first_adam_step():
    params, state = adam_step(np.zeros(1), np.array([0.5]), AdamState.zeros(1))
    assert_allclose(params[0], -1e-3 * 0.5 / (0.5 + 1e-8), rtol=1e-12)
    assert state.step_count == 1


def test_adam_zero_gradient_and_determinism():
    start = np.array([0.3, -1.2])
    unchanged, _ = adam_step(start, np.zeros(2), AdamState.zeros(2))
    assert np.array_equal(unchanged, start)

    grad = np.array([0.1, -0.7])
    a, state_a = adam_step(start, grad, AdamState.zeros(2))
    b, state_b = adam_step(start, grad, AdamState.zeros(2))
    assert np.array_equal(a, b) and np.array_equal(state_a.second_moment, state_b.second_moment)
    assert np.array_equal(start, [0.3, -1.2])


def test_adam_rejects_bad_input():
    with pytest.raises(StepRejectedError):
        adam_step(np.zeros(2), np.array([np.nan, 0.0]), AdamState.zeros(2))
    with pytest.raises(StepRejectedError):
        adam_step(np.zeros(2), np.zeros(3), AdamState.zeros(2))
    with pytest.raises(ConfigurationError):
        AdamConfig(learning_rate=0.0)


def test_lbfgs_direction_fallbacks():
    grad = np.array([1.0, -2.0])
    assert np.array_equal(lbfgs_direction(LbfgsState(), grad), -grad)

    state = LbfgsState()
    state.push(np.array([1.0, 0.5]), np.array([2.0, 4.0]))
    assert np.array_equal(lbfgs_direction(state, np.zeros(2)), np.zeros(2))


def test_lbfgs_direction_descends_on_quadratic():
    hessian = np.diag([2.0, 8.0])
    x0 = np.array([1.0, 1.0])
    x1 = x0 - 0.1 * hessian @ x0
    state = LbfgsState()
    assert state.push(x1 - x0, hessian @ (x1 - x0))

    grad = hessian @ x1
    direction = lbfgs_direction(state, grad)
    assert direction @ grad < 0


def test_lbfgs_skips_pairs_without_curvature():
    state = LbfgsState(memory=2)
    assert not state.push(np.array([1.0, 0.0]), np.array([-1.0, 0.0]))
    assert len(state.history) == 0 and state.rejected == 1
    for k in range(3):
        state.push(np.array([1.0, float(k)]), np.array([1.0, float(k)]))
    assert len(state.history) == 2
    assert all(float(s @ y) > 0 for s, y in state.history)


def test_line_search_quadratic_minimizer():
    def phi(alpha):
        return (alpha - 1.0) ** 2, 2.0 * (alpha - 1.0)

    result = hager_zhang_search(phi, 1.0, -2.0)
    assert result.converged
    assert result.step == pytest.approx(1.0)
    assert abs(result.derivative) <= 0.9 * 2.0
    assert result.value - 1.0 <= 0.1 * result.step * -2.0


def test_line_search_linear_stops_at_cap(caplog):
    config = LineSearchConfig(max_step=100.0)
    with caplog.at_level(logging.WARNING):
        result = hager_zhang_search(lambda alpha: (-alpha, -1.0), 0.0, -1.0, config)
    assert result.step == 100.0
    assert not result.converged
    assert "Line search stopped" in caplog.text


def test_line_search_rejects_ascent_direction():
    with pytest.raises(NotADescentDirectionError):
        hager_zhang_search(lambda alpha: (alpha ** 2 + alpha, 2 * alpha + 1), 0.0, 1.0)


def test_line_search_recovers_from_overflow():
    def phi(alpha):
        if alpha > 2.0:
            return math.inf, math.nan
        return (alpha - 1.5) ** 2, 2.0 * (alpha - 1.5)

    result = hager_zhang_search(phi, 2.25, -3.0, LineSearchConfig(initial_step=8.0))
    assert result.converged
    assert 0.0 < result.step <= 2.0 and math.isfinite(result.value)


def test_line_search_config_validation():
    with pytest.raises(ConfigurationError):
        LineSearchConfig(delta=0.95, sigma=0.9)
    with pytest.raises(ConfigurationError):
        LineSearchConfig(max_iterations=0)


def test_lbfgs_minimizes_quadratic():
    schedule = TrainingSchedule(adam_iters=0, lbfgs_max_iters=10, grad_tol=1e-12)
    x, history = train_phase(quadratic, np.array([1.0, 1.0]), schedule)

    assert np.linalg.norm(x) < 1e-10
    assert history.stop_reason in ("gradient-tolerance", "max-iterations")
    assert history.count("lbfgs") <= 10
    totals = history.totals()
    assert np.all(np.diff(totals) < 0)


def rosenbrock(x, batch=None):
    a, b = x
    return Evaluation((1.0 - a) ** 2 + 100.0 * (b - a * a) ** 2,
                      np.array([-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)]))


def test_accepted_lbfgs_steps_satisfy_wolfe_conditions():
    seen = {}

    def record(x, batch=None):
        evaluation = rosenbrock(x)
        seen[float(evaluation.value)] = (x.copy(), evaluation.gradient)
        return evaluation

    cfg = LineSearchConfig()
    x_prev = np.array([-1.2, 1.0])
    f_prev, g_prev = rosenbrock(x_prev).value, rosenbrock(x_prev).gradient
    _, history = train_phase(record, x_prev, TrainingSchedule(adam_iters=0, lbfgs_max_iters=15, grad_tol=0.0))
    assert history.count("lbfgs") >= 10

    for r in history.records:
        x_next, g_next = seen[r.total]
        direction = (x_next - x_prev) / r.alpha
        slope0, slope = float(g_prev @ direction), float(g_next @ direction)
        tol = 1e-8 * abs(slope0)
        assert slope0 < 0
        assert slope >= cfg.sigma * slope0 - tol
        wolfe = r.total - f_prev <= cfg.delta * r.alpha * slope0 + tol * r.alpha + 1e-12 * abs(f_prev)
        approximate = (r.total <= f_prev + cfg.epsilon * abs(f_prev)
                       and slope <= (2.0 * cfg.delta - 1.0) * slope0 + tol)
        assert wolfe or approximate
        x_prev, f_prev, g_prev = x_next, r.total, g_next


def test_phases_without_iterations_leave_params_unchanged():
    x0 = np.array([0.4, -0.3])
    x, history = train_phase(quadratic, x0, TrainingSchedule(adam_iters=0, lbfgs_max_iters=0))
    assert np.array_equal(x, x0)
    assert len(history) == 0
    assert history.stop_reason == "adam-only"


def test_history_counts_adam_and_accepted_lbfgs_iterations():
    schedule = TrainingSchedule(adam_iters=7, lbfgs_max_iters=5, grad_tol=0.0)
    _, history = train_phase(quadratic, np.array([1.0, 1.0]), schedule)

    assert history.count("adam") == 7
    assert len(history) == 7 + history.count("lbfgs")
    assert [r.iter for r in history.records] == list(range(1, len(history) + 1))
    frame = history.to_frame()
    assert list(frame.columns) == HISTORY_COLUMNS
    assert frame["alpha"].iloc[:7].isna().all()
    assert frame["loss_bc_ic"].iloc[0] == pytest.approx(5.0)


def test_adam_moves_toward_minimum():
    schedule = TrainingSchedule(adam_iters=500, lbfgs_max_iters=0, adam=AdamConfig(learning_rate=1e-2))
    x, history = train_phase(quadratic, np.array([1.0, 1.0]), schedule)
    assert history.totals()[-1] < 0.05 * history.totals()[0]
    assert np.linalg.norm(x) < 0.5


def test_divergence_reports_last_finite_parameters():
    calls = []

    def blows_up(x, batch=None):
        calls.append(x.copy())
        if len(calls) > 3:
            return Evaluation(math.nan, np.full(2, math.nan))
        return quadratic(x)

    with pytest.raises(TrainingDivergedError) as info:
        train_phase(blows_up, np.array([1.0, 1.0]), TrainingSchedule(adam_iters=10, lbfgs_max_iters=0))
    last = info.value.last_params
    assert np.array_equal(last, calls[2])
    assert not np.array_equal(last, calls[-1])
    assert math.isfinite(quadratic(last).value)


def test_divergence_entering_lbfgs_reports_last_adam_point():
    calls = []

    def blows_up(x, batch=None):
        calls.append(x.copy())
        if len(calls) > 3:
            return Evaluation(math.nan, np.full(2, math.nan))
        return quadratic(x)

    with pytest.raises(TrainingDivergedError) as info:
        train_phase(blows_up, np.array([1.0, 1.0]), TrainingSchedule(adam_iters=3, lbfgs_max_iters=5))
    assert np.array_equal(info.value.last_params, calls[2])
    assert info.value.history.count("adam") == 3
    assert len(info.value.history) == 3


def test_mini_batches_cover_each_point_once_per_epoch():
    sampler = BatchSampler(10, 5, seed=1)
    first, second = sampler.next_batch(), sampler.next_batch()
    assert sorted(np.concatenate([first, second]).tolist()) == list(range(10))
    assert BatchSampler(10, None).next_batch() is None
    assert BatchSampler(10, 20).full_batch


def test_mini_batches_reach_the_evaluator():
    seen = []

    def record(x, batch=None):
        seen.append(batch)
        return quadratic(x)

    train_phase(record, np.array([1.0, 1.0]), TrainingSchedule(adam_iters=4, lbfgs_max_iters=0),
                sampler=BatchSampler(8, 4, seed=0))
    assert all(len(b) == 4 for b in seen)


def test_schedule_validation():
    with pytest.raises(ConfigurationError):
        TrainingSchedule(adam_iters=-1)
    with pytest.raises(ConfigurationError):
        TrainingSchedule(batch_size=0)
