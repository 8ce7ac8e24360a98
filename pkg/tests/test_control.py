import math

import numpy as np
import pytest

from stagetune import control
from stagetune.control import (
    LOOP_CHANNEL,
    ParamVector,
    control_step,
    make_pid_states,
    param_slice,
    reset,
    wrap_angle,
)
from stagetune.episode import EpisodeSpec, StepReference, run_episode
from stagetune.plant import AuvPlant, NumericDomainError

from conftest import LinearTestPlant

FREE = np.full(6, -np.inf), np.full(6, np.inf)


def step_once(params, y, y_ref, states=None):
    states = states if states is not None else make_pid_states(0.1)
    return control_step(np.asarray(params, float), states, np.asarray(y, float),
                        np.asarray(y_ref, float), FREE[0], FREE[1])


def test_zero_gains_zero_output():
    rng = np.random.default_rng(0)
    states = make_pid_states(0.1)
    for _ in range(20):
        u = control_step(np.zeros(18), states, rng.normal(size=6), rng.normal(size=6),
                         FREE[0], FREE[1])
        assert np.array_equal(u, np.zeros(6))


def test_pure_proportional():
    params = np.zeros(18)
    params[param_slice("x")] = [2.0, 0.0, 0.0]
    u = step_once(params, np.zeros(6), np.array([1.5, 0, 0, 0, 0, 0]))
    assert u[0] == pytest.approx(3.0)
    assert np.array_equal(u[1:], np.zeros(5))


def test_saturation_applied():
    plant = AuvPlant()
    params = np.zeros(18)
    params[param_slice("x")] = [500.0, 0.0, 0.0]
    states = make_pid_states(0.1)
    u = control_step(params, states, np.zeros(6), np.array([3.0, 0, 0, 0, 0, 0]),
                     plant.input_lo, plant.input_hi)
    assert u[0] == 200.0


class TestAngleWrap:
    def test_wrap_against_unit_circle_oracle(self):
        rng = np.random.default_rng(5)
        for angle in rng.uniform(-20, 20, size=300):
            oracle = math.atan2(math.sin(angle), math.cos(angle))
            got = wrap_angle(angle)
            # both map to the same circle point; boundary convention (-pi, pi]
            assert math.isclose(math.sin(got), math.sin(oracle), abs_tol=1e-12)
            assert math.isclose(math.cos(got), math.cos(oracle), abs_tol=1e-12)
            assert -math.pi < got <= math.pi

    def test_yaw_error_wraps_short_way(self):
        params = np.zeros(18)
        params[param_slice("yaw")] = [1.0, 0.0, 0.0]
        y = np.zeros(6)
        y[5] = -math.pi + 0.1
        y_ref = np.zeros(6)
        y_ref[5] = math.pi - 0.1
        u = step_once(params, y, y_ref)
        assert u[5] == pytest.approx(-0.2)

    def test_position_error_not_wrapped(self):
        params = np.zeros(18)
        params[param_slice("x")] = [1.0, 0.0, 0.0]
        y_ref = np.zeros(6)
        y_ref[0] = 2 * math.pi + 1.0
        u = step_once(params, np.zeros(6), y_ref)
        assert u[0] == pytest.approx(2 * math.pi + 1.0)


class TestReset:
    def test_integral_zeroed(self):
        states = make_pid_states(0.1)
        params = np.zeros(18)
        params[param_slice("x")] = [0.0, 5.0, 0.0]
        for _ in range(10):
            control_step(params, states, np.zeros(6), np.ones(6), FREE[0], FREE[1])
        assert states[0].integral != 0.0
        reset(states, np.zeros(6))
        assert all(st.integral == 0.0 for st in states)

    def test_first_derivative_term_zero_after_reset(self):
        params = np.zeros(18)
        params[param_slice("x")] = [0.0, 0.0, 50.0]
        states = make_pid_states(0.1)
        y0 = np.array([3.0, 0, 0, 0, 0, 0])
        reset(states, y0)
        u = control_step(params, states, y0, np.zeros(6), FREE[0], FREE[1])
        assert u[0] == 0.0

    def test_reset_idempotent(self):
        states = make_pid_states(0.1)
        y0 = np.arange(6.0)
        reset(states, y0)
        snapshot = [(st.integral, st.prev_error, st.prev_meas) for st in states]
        reset(states, y0)
        assert snapshot == [(st.integral, st.prev_error, st.prev_meas) for st in states]


def test_antiwindup_bounds_integral_term():
    plant = AuvPlant()
    params = np.zeros(18)
    ki = 8.0
    params[param_slice("x")] = [0.0, ki, 0.0]
    states = make_pid_states(0.1)
    y_ref = np.array([100.0, 0, 0, 0, 0, 0])
    for _ in range(2000):
        control_step(params, states, np.zeros(6), y_ref, plant.input_lo, plant.input_hi)
    assert ki * abs(states[0].integral) <= plant.force_limit_n + 1e-9


def test_closed_loop_matches_linear_recursion():
    # P-control of xdot = -a x + b u under zero-order hold has the exact
    # discrete recursion x+ = e^{-aT} x + (b/a)(1 - e^{-aT}) kp (r - x).
    a, b, kp, T, r = 0.8, 1.5, 1.2, 0.1, 2.0
    plant = LinearTestPlant(a=a, b=b)
    params = np.zeros(18)
    params[param_slice("x")] = [kp, 0.0, 0.0]
    spec = EpisodeSpec(
        period=T, max_samples=100, x0=np.zeros(6),
        reference=StepReference(np.zeros(6), r, channel=0), params=params,
    )
    trail = run_episode(spec, plant)

    decay = math.exp(-a * T)
    gain = (b / a) * (1.0 - decay)
    x = 0.0
    for _ in range(100):
        x = decay * x + gain * kp * (r - x)
    assert trail.y[100, 0] == pytest.approx(x, rel=0.01)


def test_output_invariant_to_unmeasured_state():
    plant = AuvPlant()
    params = np.arange(1.0, 19.0)
    x = np.zeros(12)
    x_perturbed = x.copy()
    x_perturbed[6:] = 7.7  # body velocities are unmeasured
    u_ref = np.array([0.5, -0.5, 0.2, 0.1, -0.1, 0.3])
    states_a = make_pid_states(0.1)
    states_b = make_pid_states(0.1)
    u_a = control_step(params, states_a, plant.measure(x), u_ref, plant.input_lo, plant.input_hi)
    u_b = control_step(params, states_b, plant.measure(x_perturbed), u_ref,
                       plant.input_lo, plant.input_hi)
    assert np.array_equal(u_a, u_b)


def test_rejects_nonfinite():
    states = make_pid_states(0.1)
    y = np.zeros(6)
    y[2] = np.nan
    with pytest.raises(NumericDomainError):
        control_step(np.zeros(18), states, y, np.zeros(6), FREE[0], FREE[1])


class TestParamVector:
    def test_ordering_constants(self):
        assert control.LOOP_NAMES == ("roll", "pitch", "yaw", "x", "y", "z")
        assert LOOP_CHANNEL == {"roll": 3, "pitch": 4, "yaw": 5, "x": 0, "y": 1, "z": 2}
        assert param_slice("roll") == slice(0, 3)
        assert param_slice("z") == slice(15, 18)

    def test_validate_in_bounds(self):
        lo, hi = np.zeros(18), np.full(18, 10.0)
        ParamVector(np.full(18, 5.0), lo, hi).validate()

    def test_validate_reports_offending_coordinates(self):
        lo, hi = np.zeros(18), np.full(18, 10.0)
        values = np.full(18, 5.0)
        values[4] = 11.0
        values[9] = -1.0
        with pytest.raises(ValueError) as err:
            ParamVector(values, lo, hi).validate()
        assert "[4]" in str(err.value) and "[9]" in str(err.value)

    def test_rejects_inverted_bounds(self):
        with pytest.raises(ValueError):
            ParamVector(np.zeros(18), np.ones(18), np.zeros(18))
