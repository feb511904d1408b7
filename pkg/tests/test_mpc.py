"""Grasp controller: prediction model, cost, solver, and closed loop."""

import math

import numpy as np
import pytest

from gripsim.gel import ContactPlant
from gripsim.mpc import (GraspController, GraspState, Limits, MpcParams,
                         TRACE_CSV_HEADER, cost, predict, run_closed_loop,
                         solve)
from oracle_grid import grid_minimum, suboptimality_slack

PARAMS = MpcParams()
LIMITS = Limits()


def random_instance(rng, horizon):
    freq = float(rng.choice([30.0, 60.0]))
    params = MpcParams(
        area_target=float(rng.uniform(500.0, 8000.0)),
        weight_accel=float(rng.uniform(0.1, 5.0)),
        weight_area=float(rng.uniform(0.1, 2.0)),
        weight_speed=float(rng.uniform(0.0, 5.0)),
        terminal_factor=float(rng.uniform(1.0, 20.0)),
        horizon=horizon,
        area_slope=float(rng.uniform(5.0, 500.0)),
        dt=1.0 / freq, freq=freq)
    p0 = float(rng.uniform(1.0, 50.0))
    limits = Limits(
        opening_min=p0 - float(rng.uniform(0.05, 5.0)),
        opening_max=p0 + float(rng.uniform(0.05, 5.0)),
        speed_max=float(rng.uniform(0.5, 25.0)),
        accel_max=float(rng.uniform(1.0, 300.0)))
    state = GraspState(
        area=float(rng.uniform(0.0, 9000.0)),
        opening=p0,
        speed=float(rng.uniform(-1.2, 1.2)) * limits.speed_max)
    return params, limits, state


class TestPredict:
    def test_equilibrium_is_a_fixed_point(self):
        traj = predict(GraspState(5500.0, 29.0, 0.0), [0.0], PARAMS)
        np.testing.assert_array_equal(traj[1], [5500.0, 29.0, 0.0])

    def test_closing_speed_raises_predicted_area(self):
        # slope 50 px/mm at 60 Hz: one tick at -0.6 mm/s adds half a pixel
        params = MpcParams(area_slope=50.0)
        traj = predict(GraspState(5500.0, 29.0, -0.6), [0.0], params)
        assert traj[1][0] == pytest.approx(5500.5, abs=1e-12)

    def test_trajectory_length_and_step_consistency(self):
        rng = np.random.default_rng(0)
        accel = rng.uniform(-200, 200, size=30)
        state = GraspState(4000.0, 33.0, -2.0)
        traj = predict(state, accel, PARAMS)
        assert traj.shape == (31, 3)
        dt, K = PARAMS.dt, PARAMS.area_slope
        for k in range(30):
            c, p, v = traj[k]
            assert traj[k + 1][0] == pytest.approx(c - K * dt * v, rel=1e-12)
            assert traj[k + 1][1] == pytest.approx(
                p + dt * v + 0.5 * dt * dt * accel[k], rel=1e-12)
            assert traj[k + 1][2] == pytest.approx(v + dt * accel[k], rel=1e-12)

    def test_empty_accel_rejected(self):
        with pytest.raises(ValueError):
            predict(GraspState(5500.0, 29.0, 0.0), [], PARAMS)


class TestCost:
    def test_zero_at_equilibrium_with_zero_input(self):
        assert cost(GraspState(5500.0, 29.0, 0.0), np.zeros(30), PARAMS) == 0.0

    def test_unit_area_error_counts_stages_plus_terminal(self):
        # constant 1 px error over 30 stages plus a 10x terminal term
        J = cost(GraspState(5501.0, 29.0, 0.0), np.zeros(30), PARAMS)
        assert J == pytest.approx(40.0, rel=1e-12)

    def test_single_kick_equals_accel_cost_plus_rollout_errors(self):
        accel = np.zeros(30)
        accel[0] = 1.0
        state = GraspState(5500.0, 29.0, 0.0)
        J = cost(state, accel, PARAMS)
        assert J > 0.0
        traj = predict(state, accel, PARAMS)
        expected = PARAMS.weight_accel * 1.0
        for k in range(30):
            err = traj[k][0] - PARAMS.area_target
            expected += PARAMS.weight_area * err ** 2 \
                + PARAMS.weight_speed * traj[k][2] ** 2
        err = traj[30][0] - PARAMS.area_target
        expected += PARAMS.terminal_factor * (
            PARAMS.weight_area * err ** 2 + PARAMS.weight_speed * traj[30][2] ** 2)
        assert J == pytest.approx(expected, rel=1e-12)

    def test_wrong_length_rejected(self):
        with pytest.raises(ValueError):
            cost(GraspState(5500.0, 29.0, 0.0), np.zeros(29), PARAMS)

    def test_literal_cost_matches_condensed_form(self):
        rng = np.random.default_rng(1)
        ctl = GraspController(PARAMS, LIMITS)
        for _ in range(10):
            state = GraspState(float(rng.uniform(0, 9000)),
                               float(rng.uniform(5, 50)),
                               float(rng.uniform(-15, 15)))
            accel = rng.uniform(-200, 200, size=30)
            J_lit = cost(state, accel, PARAMS)
            J_q = ctl.quadratic_cost(
                np.array([state.area, state.opening, state.speed]), accel)
            assert J_q == pytest.approx(J_lit, rel=1e-9)


class TestSolve:
    def test_equilibrium_returns_exactly_zero_plan(self):
        plan = solve(GraspState(5500.0, 29.0, 0.0), PARAMS, LIMITS)
        assert plan.feasible
        assert np.all(plan.accel == 0.0)
        assert plan.cost == 0.0
        assert plan.kkt_residual <= 1e-12

    def test_low_area_commands_closing(self):
        # below-target contact: the first move must accelerate closing
        plan = solve(GraspState(4000.0, 29.0, 0.0), PARAMS, LIMITS)
        assert plan.feasible
        assert plan.accel[0] < 0.0

    def test_matches_grid_search_on_short_horizons(self):
        rng = np.random.default_rng(12)
        compared = 0
        for _ in range(12):
            params, limits, state = random_instance(rng, int(rng.integers(1, 4)))
            ctl = GraspController(params, limits)
            plan = ctl.solve(state)
            x = np.array([state.area, state.opening, state.speed])
            best, any_feasible = grid_minimum(ctl, x, points=81)
            if not plan.feasible:
                assert not any_feasible
                continue
            if not any_feasible:
                continue
            slack = suboptimality_slack(ctl, x, plan.accel, points=81)
            assert plan.cost <= best + slack + 1e-9 * (1.0 + abs(best))
            compared += 1
        assert compared >= 6

    def test_kkt_certificate_on_random_instances(self):
        rng = np.random.default_rng(21)
        for _ in range(40):
            params, limits, state = random_instance(rng, int(rng.integers(1, 4)))
            plan = GraspController(params, limits).solve(state)
            assert plan.kkt_residual <= 1e-6

    def test_plan_respects_limits(self):
        rng = np.random.default_rng(5)
        checked = 0
        for _ in range(25):
            params, limits, state = random_instance(rng, 3)
            plan = GraspController(params, limits).solve(state)
            if not plan.feasible:
                continue
            checked += 1
            assert np.all(np.abs(plan.accel) <= limits.accel_max + 1e-9)
            traj = predict(state, plan.accel, params)
            assert np.all(traj[1:, 1] <= limits.opening_max + 1e-9)
            assert np.all(traj[1:, 1] >= limits.opening_min - 1e-9)
            assert np.all(np.abs(traj[1:, 2]) <= limits.speed_max + 1e-9)
        assert checked >= 10

    def test_unreachable_state_constraints_yield_clamped_plan(self):
        # speeding toward the opening limit with no room to brake
        state = GraspState(5500.0, 54.95, 20.0)
        plan = solve(state, PARAMS, LIMITS)
        assert not plan.feasible
        assert np.all(np.abs(plan.accel) <= LIMITS.accel_max + 1e-9)

    def test_deterministic(self):
        state = GraspState(4100.0, 31.0, -3.0)
        a = solve(state, PARAMS, LIMITS)
        b = solve(state, PARAMS, LIMITS)
        assert np.array_equal(a.accel, b.accel)
        assert a.cost == b.cost


class TestZeroCostCharacterization:
    def test_cost_positive_off_equilibrium(self):
        for area, speed in ((5400.0, 0.0), (5600.0, 0.0), (5500.0, 0.5),
                            (5500.0, -0.5), (5499.0, 0.1)):
            J = cost(GraspState(area, 30.0, speed), np.zeros(30), PARAMS)
            assert J > 0.0

    def test_cost_zero_only_at_target_rest(self):
        assert cost(GraspState(5500.0, 12.0, 0.0), np.zeros(30), PARAMS) == 0.0


class TestClosedLoop:
    def test_equilibrium_hold_within_one_pixel(self):
        plant = ContactPlant(object_width=30.0, noise_sigma=0.0)
        p_eq = 30.0 - 8.0 * 5500.0 / 8000.0
        trace = run_closed_loop(plant, PARAMS, LIMITS,
                                GraspState(5500.0, p_eq, 0.0), 2.0)
        assert np.max(np.abs(trace.c_px - 5500.0)) <= 1.0

    def test_canonical_settling_under_two_seconds(self):
        plant = ContactPlant(object_width=30.0, noise_sigma=0.0)
        trace = run_closed_loop(plant, PARAMS, LIMITS,
                                GraspState(0.0, 35.0, 0.0), 4.0)
        assert trace.settling_time(5500.0) < 2.0

    def test_width_oscillation_tracking(self):
        plant = ContactPlant(object_width=30.0, noise_sigma=0.0)
        p_eq = 30.0 - 8.0 * 5500.0 / 8000.0
        width_fn = lambda t: 30.0 + 2.0 * math.sin(2.0 * math.pi * t)
        trace = run_closed_loop(plant, PARAMS, LIMITS,
                                GraspState(5500.0, p_eq, 0.0), 4.0,
                                width_fn=width_fn)
        late = trace.c_px[trace.t_s >= 1.0]
        assert np.max(np.abs(late - 5500.0)) <= 0.15 * 5500.0

    def test_terminal_amplification_never_slows_settling(self):
        times = []
        for terminal in (1.0, 10.0, 100.0):
            params = MpcParams(terminal_factor=terminal)
            plant = ContactPlant(object_width=30.0, noise_sigma=0.0)
            trace = run_closed_loop(plant, params, LIMITS,
                                    GraspState(0.0, 35.0, 0.0), 5.0)
            times.append(trace.settling_time(5500.0))
        assert times[1] <= times[0] and times[2] <= times[1]

    def test_trace_csv_header_and_shape(self, tmp_path):
        plant = ContactPlant(object_width=30.0, noise_sigma=0.0)
        trace = run_closed_loop(plant, PARAMS, LIMITS,
                                GraspState(0.0, 35.0, 0.0), 0.5)
        path = tmp_path / "trace.csv"
        trace.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == TRACE_CSV_HEADER
        assert len(lines) == 1 + 30
        for line in lines[1:]:
            fields = line.split(",")
            assert len(fields) == 8
            [float(f) for f in fields]  # every column parses as a number

    def test_duration_must_be_positive(self):
        plant = ContactPlant(object_width=30.0)
        with pytest.raises(ValueError):
            run_closed_loop(plant, PARAMS, LIMITS,
                            GraspState(0.0, 35.0, 0.0), 0.0)


class TestRecedingHorizonConsistency:
    def test_resolve_never_beats_shifted_plan(self):
        """Along a model-consistent rollout of the canonical scenario,
        re-solving after applying the first move costs no more than the
        shifted remainder of the previous plan (when that shift stays
        feasible): the defining consistency of receding-horizon solves."""
        params, limits = PARAMS, LIMITS
        ctl = GraspController(params, limits)
        dt, K = params.dt, params.area_slope
        A = np.array([[1.0, 0.0, -K * dt], [0.0, 1.0, dt], [0.0, 0.0, 1.0]])
        B = np.array([0.0, 0.5 * dt * dt, dt])
        x = np.array([0.0, 35.0, 0.0])
        checked = 0
        for _ in range(180):
            plan = ctl.solve(GraspState(max(x[0], 0.0), x[1], x[2]))
            if not plan.feasible:
                x = A @ x + B * plan.accel[0]
                continue
            x_next = A @ x + B * plan.accel[0]
            shifted = np.append(plan.accel[1:], 0.0)
            traj = predict(GraspState(max(x_next[0], 0.0), x_next[1], x_next[2]),
                           shifted, params)
            ok = (np.all(traj[1:, 1] <= limits.opening_max + 1e-9)
                  and np.all(traj[1:, 1] >= limits.opening_min - 1e-9)
                  and np.all(np.abs(traj[1:, 2]) <= limits.speed_max + 1e-9))
            if ok:
                plan_next = ctl.solve(GraspState(max(x_next[0], 0.0),
                                                 x_next[1], x_next[2]))
                J_shift = ctl.quadratic_cost(x_next, shifted)
                assert plan_next.cost <= J_shift + 1e-6 * (1.0 + abs(J_shift))
                checked += 1
            x = x_next
        assert checked >= 100
