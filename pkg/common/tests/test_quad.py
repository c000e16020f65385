from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from gpmpc_common.controller import StepDiagnostics, config_for_variant
from gpmpc_common.dto.simulation_options import SimulationOptions
from gpmpc_common.errors import ArgumentError, ConfigError, NumericalError, SimulationAbortedError
from gpmpc_common.quad import (
    GP_INPUT_INDICES,
    TRAJECTORY_FIELDS,
    HoverReference,
    LemniscateReference,
    RandomPolynomialReference,
    RatePidState,
    TruthState,
    allocate,
    build_quadrotor_controller,
    forward_allocation,
    hover_input,
    inner_rate_pid,
    load_quad_params,
    nominal_continuous,
    nominal_jacobian,
    quadrotor_controller_config,
    quadrotor_model,
    reconstruct_next_velocity,
    reference_horizon,
    residual_dataset,
    rk4_discretize,
    simulate_closed_loop,
    transitions_to_residuals,
    truth_derivative,
    truth_rk4_step,
)

PARAMS = load_quad_params()
MG = PARAMS.mass * PARAMS.gravity
H = 1e-30


def outer_point(rng, angle=0.5):
    x = np.concatenate([rng.uniform(-1, 1, 3), rng.uniform(-2, 2, 3), rng.uniform(-angle, angle, 3)])
    u = np.array([rng.uniform(0.2, 0.5), *rng.uniform(-2, 2, 3)])
    return x, u


def truth_from_outer(x, rates):
    quat = Rotation.from_euler("ZYX", [x[8], x[7], x[6]]).as_quat()
    return TruthState(x[0:3].copy(), x[3:6].copy(), quat, np.asarray(rates, dtype=float))


def complex_step_jacobian(fn, w):
    cols = []
    for j in range(w.size):
        dw = np.zeros(w.size, dtype=complex)
        dw[j] = 1j * H
        cols.append(np.imag(fn(w + dw)) / H)
    return np.stack(cols, axis=-1)


def hover_diagnostics(step):
    return StepDiagnostics(step, 1, 1, 0.0, 0.0, 0.0, 0.0, (), 0.0, "converged", "solved", False, 0.0)


class ScriptedController:
    """Replays fixed commands, raising once the script runs out."""

    def __init__(self, commands, horizon=3, T_s=0.02):
        self.cfg = SimpleNamespace(horizon=horizon, T_s=T_s)
        self.commands = list(commands)
        self.calls = 0

    def mpc_step(self, x_k, r_traj):
        if self.calls >= len(self.commands):
            raise NumericalError("script exhausted")
        u = np.asarray(self.commands[self.calls], dtype=float)
        self.calls += 1
        return u, hover_diagnostics(self.calls - 1)


def test_default_parameters_load():
    assert PARAMS.mass == pytest.approx(0.033)
    assert PARAMS.thrust_min == pytest.approx(0.06)
    assert PARAMS.thrust_max == pytest.approx(0.64)
    assert np.allclose(PARAMS.J, PARAMS.J.T)


def test_missing_parameter_file_is_a_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_quad_params(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("mass: -1\n")
    with pytest.raises(ConfigError):
        load_quad_params(bad)


def test_perturbed_parameters_scale_mass_and_inertia():
    heavy = PARAMS.perturbed(mass_factor=1.2, inertia_factor=1.5)
    assert heavy.mass == pytest.approx(1.2 * PARAMS.mass)
    np.testing.assert_allclose(heavy.J, 1.5 * PARAMS.J)
    assert PARAMS.mass == pytest.approx(0.033)


def test_hover_is_an_equilibrium():
    s = TruthState.hover((0.0, 0.0, 1.0))
    d = truth_derivative(s, np.full(4, MG / 4), PARAMS)
    np.testing.assert_allclose(d, np.zeros(13), atol=1e-12)


def test_free_fall_without_thrust():
    d = truth_derivative(TruthState.hover(), np.zeros(4), PARAMS)
    np.testing.assert_allclose(d[3:6], [0.0, 0.0, -PARAMS.gravity], atol=1e-14)
    np.testing.assert_allclose(d[10:13], 0.0, atol=1e-14)


def test_yaw_thrust_pattern_only_spins_about_z():
    delta = 0.01
    thrusts = MG / 4 + delta * np.array([-1.0, 1.0, -1.0, 1.0])
    d = truth_derivative(TruthState.hover(), thrusts, PARAMS, aero=False)
    k = PARAMS.drag_coeff / PARAMS.thrust_coeff
    np.testing.assert_allclose(d[10:12], 0.0, atol=1e-9)
    assert d[12] == pytest.approx(4 * k * delta / PARAMS.J[2, 2], rel=1e-12)


def test_negative_thrust_is_rejected():
    with pytest.raises(ArgumentError):
        truth_derivative(TruthState.hover(), [0.1, 0.1, -0.01, 0.1], PARAMS)


def test_aero_drag_opposes_velocity():
    s = TruthState(np.zeros(3), np.array([2.0, 0.0, 0.0]), np.array([0.0, 0.0, 0.0, 1.0]), np.zeros(3))
    thrusts = np.full(4, MG / 4)
    with_drag = truth_derivative(s, thrusts, PARAMS, aero=True)
    without = truth_derivative(s, thrusts, PARAMS, aero=False)
    assert with_drag[3] < without[3]


def test_allocation_at_hover_is_symmetric():
    thrusts, saturated = allocate(MG, np.zeros(3), PARAMS)
    np.testing.assert_allclose(thrusts, MG / 4, rtol=1e-12)
    assert not saturated


@settings(max_examples=50, deadline=None)
@given(
    T=st.floats(0.2, 0.5),
    tau_xy=st.lists(st.floats(-1e-3, 1e-3), min_size=2, max_size=2),
    tau_z=st.floats(-1e-4, 1e-4),
)
def test_allocation_round_trip(T, tau_xy, tau_z):
    tau = np.array([*tau_xy, tau_z])
    thrusts, saturated = allocate(T, tau, PARAMS)
    assert not saturated
    T_back, tau_back = forward_allocation(thrusts, PARAMS)
    assert T_back == pytest.approx(T, abs=1e-12)
    np.testing.assert_allclose(tau_back, tau, atol=1e-12)


def test_roll_torque_sign_pattern():
    thrusts, _ = allocate(MG, [1e-3, 0.0, 0.0], PARAMS)
    assert np.all(thrusts[2:] > MG / 4)
    assert np.all(thrusts[:2] < MG / 4)
    assert thrusts.sum() == pytest.approx(MG, rel=1e-12)


def test_allocation_clips_and_reports():
    thrusts, saturated = allocate(PARAMS.thrust_max, [5e-3, 0.0, 0.0], PARAMS)
    assert saturated
    assert np.all(thrusts >= 0.0)
    assert np.all(thrusts <= PARAMS.thrust_max / 4)


def test_pid_zero_error_from_rest():
    tau = inner_rate_pid(np.zeros(3), np.zeros(3), RatePidState(), PARAMS)
    np.testing.assert_array_equal(tau, np.zeros(3))


def test_pid_proportional_only():
    p_only = PARAMS.model_copy(update={"rate_ki": [0.0] * 3, "rate_kd": [0.0] * 3})
    err = np.array([0.5, -1.0, 0.2])
    tau = inner_rate_pid(err, np.zeros(3), RatePidState(), p_only)
    np.testing.assert_allclose(tau, np.asarray(PARAMS.rate_kp) * err)


def test_pid_integral_is_clamped():
    state = RatePidState()
    for _ in range(10_000):
        inner_rate_pid(np.full(3, 10.0), np.zeros(3), state, PARAMS)
    np.testing.assert_allclose(state.integral, PARAMS.rate_integral_limit)


def test_inner_loop_tracks_rate_step():
    v = TruthState.hover((0.0, 0.0, 1.0)).as_vector()
    pid = RatePidState()
    dt = 0.0005
    pid_every = int(round(1.0 / (PARAMS.pid_rate_hz * dt)))
    rate_ref = np.array([1.0, 0.0, 0.0])
    for j in range(100):
        if j % pid_every == 0:
            tau = inner_rate_pid(rate_ref, v[10:13], pid, PARAMS)
            thrusts, _ = allocate(MG, tau, PARAMS)
        v = truth_rk4_step(v, thrusts, PARAMS, dt)
    assert abs(v[10] - 1.0) < 0.05
    assert np.all(np.abs(v[11:13]) < 0.05)


def test_quaternion_stays_normalized():
    v = TruthState(np.zeros(3), np.zeros(3), np.array([0.0, 0.0, 0.0, 1.0]), np.array([3.0, -2.0, 0.3])).as_vector()
    for _ in range(2000):
        v = truth_rk4_step(v, np.full(4, MG / 4), PARAMS, 0.0005)
        assert abs(np.linalg.norm(v[6:10]) - 1.0) < 1e-9
    R = TruthState.from_vector(v).rotation()
    assert np.linalg.norm(R.T @ R - np.eye(3)) < 1e-9


def test_ballistic_free_fall():
    v = TruthState.hover((0.0, 0.0, 0.0)).as_vector()
    dt = 0.0005
    for _ in range(2000):
        v = truth_rk4_step(v, np.zeros(4), PARAMS, dt)
    assert v[2] == pytest.approx(-0.5 * PARAMS.gravity * 1.0**2, abs=1e-9)
    assert v[5] == pytest.approx(-PARAMS.gravity, abs=1e-9)


def test_nominal_hover_derivative():
    x = np.array([0.3, -0.2, 1.0, 0.5, -0.1, 0.2, 0.0, 0.0, 0.0])
    d = nominal_continuous(x, hover_input(PARAMS), PARAMS)
    np.testing.assert_allclose(d, np.concatenate([x[3:6], np.zeros(6)]), atol=1e-14)


def test_nominal_euler_rates_at_level_attitude():
    u = np.array([MG, 0.4, -0.3, 0.2])
    d = nominal_continuous(np.zeros(9), u, PARAMS)
    np.testing.assert_allclose(d[6:9], u[1:4], atol=1e-15)


def test_nominal_rejects_pitch_singularity():
    x = np.zeros(9)
    x[7] = np.pi / 2 - 1e-4
    with pytest.raises(NumericalError):
        nominal_continuous(x, hover_input(PARAMS), PARAMS)


def test_nominal_jacobian_matches_complex_step(rng):
    for _ in range(10):
        x, u = outer_point(rng)
        w = np.concatenate([x, u])
        expected = complex_step_jacobian(lambda z: nominal_continuous(z[:9], z[9:], PARAMS), w)
        np.testing.assert_allclose(nominal_jacobian(x, u, PARAMS), expected, rtol=1e-10, atol=1e-12)


def test_discrete_jacobian_matches_complex_step(rng):
    model = quadrotor_model(PARAMS, 0.02)
    for _ in range(5):
        w = np.concatenate(outer_point(rng))
        expected = complex_step_jacobian(model.dynamics, w)
        np.testing.assert_allclose(model.jacobian(w), expected, rtol=1e-9, atol=1e-12)


def test_discrete_jacobian_accepts_complex_arguments(rng):
    model = quadrotor_model(PARAMS, 0.02)
    w = np.concatenate(outer_point(rng))
    dw = np.zeros(13, dtype=complex)
    dw[7] = 1j * H
    J = model.jacobian(w + dw)
    assert np.iscomplexobj(J)
    np.testing.assert_allclose(J.real, model.jacobian(w), rtol=1e-14, atol=1e-16)


def test_nominal_model_is_batched(rng):
    model = quadrotor_model(PARAMS, 0.02)
    W = np.stack([np.concatenate(outer_point(rng)) for _ in range(4)])
    batched = model.dynamics(W)
    for i in range(4):
        np.testing.assert_allclose(batched[i], model.dynamics(W[i]), rtol=1e-14)
    assert model.jacobian(W).shape == (4, 9, 13)


def test_nominal_agrees_with_truth_kinematics(rng):
    x, u = outer_point(rng)
    s = truth_from_outer(x, u[1:4])
    d_nom = nominal_continuous(x, u, PARAMS)
    d_truth = truth_derivative(s, np.full(4, u[0] / 4), PARAMS, aero=False)
    np.testing.assert_allclose(d_nom[0:6], d_truth[0:6], rtol=1e-10, atol=1e-12)

    h = 1e-6

    def euler_after(dt):
        q = s.quaternion + dt * d_truth[6:10]
        psi, theta, phi = Rotation.from_quat(q / np.linalg.norm(q)).as_euler("ZYX")
        return np.array([phi, theta, psi])

    euler_rates = (euler_after(h) - euler_after(-h)) / (2 * h)
    np.testing.assert_allclose(d_nom[6:9], euler_rates, atol=1e-6)


def test_rk4_matches_exponential_series(rng):
    A = rng.normal(size=(3, 3))
    x0 = rng.normal(size=3)
    T = 0.1
    nxt = rk4_discretize(lambda x, u: A @ x, x0, None, T)
    term, series = x0.copy(), x0.copy()
    for k in range(1, 5):
        term = A @ term * T / k
        series = series + term
    np.testing.assert_allclose(nxt, series, rtol=1e-13, atol=1e-14)


def test_rk4_zero_field_is_identity(rng):
    x0 = rng.normal(size=4)
    np.testing.assert_array_equal(rk4_discretize(lambda x, u: np.zeros_like(x), x0, None, 0.5), x0)


def test_rk4_is_fourth_order_on_quadrotor_field():
    x0 = np.array([0.0, 0.0, 1.0, 1.0, -0.5, 0.2, 0.3, -0.2, 0.1])
    u = np.array([1.5 * MG, 2.0, -1.5, 0.5])

    def field(x, u_):
        return nominal_continuous(x, u_, PARAMS)

    def integrate(step, n):
        x = x0
        for _ in range(n):
            x = rk4_discretize(field, x, u, step)
        return x

    exact = integrate(0.2 / 1280, 1280)
    coarse = np.max(np.abs(integrate(0.02, 10) - exact))
    fine = np.max(np.abs(integrate(0.01, 20) - exact))
    assert 12.0 < coarse / fine < 20.0


def test_lemniscate_velocity_is_position_derivative():
    ref = LemniscateReference()
    t, h = 1.37, 1e-6
    p_plus, _ = ref.position_velocity(t + h)
    p_minus, _ = ref.position_velocity(t - h)
    _, vel = ref.position_velocity(t)
    np.testing.assert_allclose(vel, (p_plus - p_minus) / (2 * h), atol=1e-7)
    pos0, _ = ref.position_velocity(0.0)
    np.testing.assert_allclose(pos0, [1.2, 0.0, 1.2])


def test_random_polynomial_rests_at_both_ends():
    ref = RandomPolynomialReference(duration=6.0, seed=3)
    _, v0 = ref.position_velocity(0.0)
    _, v_end = ref.position_velocity(ref.times[-1])
    np.testing.assert_allclose(v0, 0.0, atol=1e-9)
    np.testing.assert_allclose(v_end, 0.0, atol=1e-9)
    pos, _ = ref.position_velocity(ref.times)
    np.testing.assert_allclose(pos, ref.waypoints, atol=1e-9)


def test_random_polynomial_is_seeded():
    a = RandomPolynomialReference(duration=6.0, seed=3)
    b = RandomPolynomialReference(duration=6.0, seed=3)
    c = RandomPolynomialReference(duration=6.0, seed=4)
    np.testing.assert_array_equal(a.waypoints, b.waypoints)
    assert not np.array_equal(a.waypoints, c.waypoints)


def test_reference_horizon_shape():
    r = reference_horizon(LemniscateReference(), 0.5, 12, 0.02)
    assert r.shape == (13, 9)
    np.testing.assert_array_equal(r[:, 6:9], 0.0)


def test_residuals_vanish_for_model_matched_transitions(rng):
    model = quadrotor_model(PARAMS, 0.02)
    points = [outer_point(rng, angle=0.3) for _ in range(6)]
    X = np.stack([p[0] for p in points])
    U = np.stack([p[1] for p in points])
    nxt = model.dynamics(np.concatenate([X, U], axis=1))
    data = transitions_to_residuals(X, U, nxt, model, 0.02)
    assert data.n_inputs == 10
    np.testing.assert_allclose(data.outputs, 0.0, atol=1e-10)
    np.testing.assert_array_equal(data.inputs, np.concatenate([X, U], axis=1)[:, list(GP_INPUT_INDICES)])


def test_residuals_reconstruct_measured_velocity(rng):
    model = quadrotor_model(PARAMS, 0.02)
    points = [outer_point(rng, angle=0.3) for _ in range(6)]
    X = np.stack([p[0] for p in points])
    U = np.stack([p[1] for p in points])
    measured = X + rng.normal(scale=0.1, size=X.shape)
    data = transitions_to_residuals(X, U, measured, model, 0.02)
    rebuilt = reconstruct_next_velocity(X, U, data.outputs, model, 0.02)
    np.testing.assert_allclose(rebuilt, measured[:, 3:6], rtol=1e-12, atol=1e-12)


def test_quadrotor_config_matches_vehicle_limits():
    cfg = quadrotor_controller_config(PARAMS)
    assert (cfg.n_x, cfg.n_u) == (9, 4)
    assert len(cfg.state_polytope) == 12
    assert len(cfg.input_polytope) == 8
    np.testing.assert_allclose(cfg.input_reference(), hover_input(PARAMS))
    assert cfg.horizon == 12


def test_simulation_options_require_integer_step_ratio():
    with pytest.raises(ValueError):
        SimulationOptions(T_s=0.02, dt_sim=0.0007)
    assert SimulationOptions().fast_steps_per_tick == 40


def test_open_loop_hover_log_layout():
    options = SimulationOptions(duration=0.1, aero=False)
    controller = ScriptedController([hover_input(PARAMS)] * 5)
    log = simulate_closed_loop(controller, HoverReference((0.0, 0.0, 1.0)), PARAMS, options)
    assert log.completed and log.n_ticks == 5
    assert len(log.states) == 6
    rows = log.rows()
    assert len(rows) == 5 and set(rows[0]) == set(TRAJECTORY_FIELDS)
    assert log.tracking_rmse() < 1e-9
    assert log.tracking_rmse(lateral=True) <= log.tracking_rmse()


def test_disturbance_is_seeded():
    def run(seed):
        options = SimulationOptions(duration=0.1, disturbance=True, seed=seed)
        log = simulate_closed_loop(ScriptedController([hover_input(PARAMS)] * 5), HoverReference(), PARAMS, options)
        return np.asarray(log.states)

    np.testing.assert_array_equal(run(1), run(1))
    assert not np.array_equal(run(1), run(2))


def test_controller_failure_aborts_with_partial_log():
    options = SimulationOptions(duration=0.2)
    with pytest.raises(SimulationAbortedError) as exc:
        simulate_closed_loop(ScriptedController([hover_input(PARAMS)] * 3), HoverReference(), PARAMS, options)
    assert exc.value.reason == "controller_error"
    assert exc.value.log.n_ticks == 3
    assert not exc.value.log.completed


def test_nan_command_aborts():
    options = SimulationOptions(duration=0.2)
    controller = ScriptedController([[np.nan, 0.0, 0.0, 0.0]] * 10)
    with pytest.raises(SimulationAbortedError) as exc:
        simulate_closed_loop(controller, HoverReference(), PARAMS, options)
    assert exc.value.reason == "nan_state"
    assert exc.value.log.n_ticks == 1


def test_mismatched_sampling_time_is_rejected():
    with pytest.raises(ArgumentError):
        simulate_closed_loop(ScriptedController([], T_s=0.01), HoverReference(), PARAMS, SimulationOptions())


def test_residual_dataset_from_log():
    model = quadrotor_model(PARAMS, 0.02)
    options = SimulationOptions(duration=0.1, aero=False)
    log = simulate_closed_loop(ScriptedController([hover_input(PARAMS)] * 5), HoverReference(), PARAMS, options)
    data = residual_dataset(log, model)
    assert data.n == 5
    np.testing.assert_allclose(data.outputs, 0.0, atol=1e-6)


def _hover_regulation(duration):
    cfg = config_for_variant(quadrotor_controller_config(PARAMS), "baseline")
    controller = build_quadrotor_controller(cfg, PARAMS)
    reference = HoverReference((0.0, 0.0, 1.0))
    log = simulate_closed_loop(controller, reference, PARAMS, SimulationOptions(duration=duration))
    errors = np.asarray(log.states)[:, 0:3] - reference.position
    return np.max(np.linalg.norm(errors, axis=1))


def test_mpc_holds_hover_briefly():
    assert _hover_regulation(0.4) < 1e-3


@pytest.mark.slow
def test_mpc_holds_hover_for_ten_seconds():
    assert _hover_regulation(10.0) < 1e-3
