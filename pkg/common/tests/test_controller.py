import dataclasses
import logging

import numpy as np
import pytest
from hypothesis import given, strategies as st
from prometheus_client import REGISTRY
from pydantic import ValidationError

from gpmpc_common.controller import (
    CONTROLLER_VARIANTS,
    DIAGNOSTIC_FIELDS,
    GpMpcController,
    StepDiagnostics,
    config_for_variant,
    init_schedule,
    pair_halfspaces,
    qp_assemble_mpc,
    shift_inputs,
    stage_cost,
    standard_normal_quantile,
    tighten_halfspace,
)
from gpmpc_common.dto.controller_config import ControllerConfig, HalfSpace
from gpmpc_common.dto.qp_settings import QpSettings
from gpmpc_common.errors import ArgumentError, InfeasibleTighteningError, NumericalError
from gpmpc_common.gp import Dataset, build_sparse_model
from gpmpc_common.lpv import AnchorPoint, MomentMaps, factorize_horizon
from gpmpc_common.propagation import NominalModel, rollout
from gpmpc_common.qp import load_qp, qp_solve

from conftest import PENDULUM_DT, pendulum, pendulum_gp, random_hyperparams

DOUBLE_INTEGRATOR = NominalModel.linear([[1.0, 0.1], [0.0, 1.0]], [[0.0], [0.1]])


def prior_only_gp(rng):
    """Zero-mean GP on (x, u) with constant predictive variance."""
    hyps = [random_hyperparams(rng, 3) for _ in range(2)]
    data = Dataset(rng.uniform(-1.0, 1.0, size=(10, 3)), rng.normal(size=(10, 2)))
    model = build_sparse_model(data, hyps, rng.uniform(-1.0, 1.0, size=(2, 3, 3)))
    zeros = np.zeros_like(model.kuu_inv)
    return dataclasses.replace(
        model, dual_weights=np.zeros_like(model.dual_weights), variance_weight=zeros, kuu_inv=zeros, s_inv=zeros
    )


def pendulum_config(**overrides):
    base = dict(horizon=5, Q=[[1.0, 0.0], [0.0, 0.1]], R=[[0.1]], T_s=PENDULUM_DT, propagation_mode="mm")
    base.update(overrides)
    return ControllerConfig(**base)


def slack_fallbacks():
    return REGISTRY.get_sample_value("gpmpc_slack_fallbacks_total") or 0.0


# -- input shifting and scheduling ----------------------------------------------


def test_shift_inputs_examples():
    np.testing.assert_array_equal(shift_inputs([[1.0], [2.0], [3.0]]), [[2.0], [3.0], [3.0]])
    np.testing.assert_array_equal(shift_inputs([[4.0, 5.0]]), [[4.0, 5.0]])
    const = np.full((4, 2), 0.7)
    np.testing.assert_array_equal(shift_inputs(const), const)


@given(st.integers(min_value=1, max_value=15), st.integers(min_value=1, max_value=4), st.integers(0, 2**31 - 1))
def test_shift_inputs_property(n, m, seed):
    prev = np.random.default_rng(seed).normal(size=(n, m))
    shifted = shift_inputs(prev)
    assert shifted.shape == prev.shape
    np.testing.assert_array_equal(shifted[:-1], prev[1:])
    np.testing.assert_array_equal(shifted[-1], prev[-1])


def test_shift_inputs_rejects_empty():
    with pytest.raises(ArgumentError):
        shift_inputs(np.zeros((0, 2)))


def test_init_schedule_identity_dynamics():
    maps = MomentMaps(NominalModel.linear(np.eye(2), np.zeros((2, 1))), None)
    x = np.array([0.3, -0.2])
    schedule = init_schedule(maps, x, np.zeros((3, 1)), 3)
    assert len(schedule.points) == 3
    for point in schedule.points:
        np.testing.assert_array_equal(point.mu_x, x)
        np.testing.assert_array_equal(point.sigma_x, np.zeros((2, 2)))


def test_first_step_schedule_holds_measured_state():
    maps = MomentMaps(pendulum(), None)
    schedule = init_schedule(maps, [0.5, 0.1], None, 4)
    np.testing.assert_array_equal(schedule.rho(), np.tile([0.5, 0.1, 0.0, 0.0, 0.0, 0.0, 0.0], (4, 1)))


def test_init_schedule_matches_rollout(rng):
    nominal, gp = pendulum(), pendulum_gp(rng)
    maps = MomentMaps(nominal, gp, mode="mm", scale=PENDULUM_DT)
    x0, inputs = np.array([0.4, -0.1]), rng.uniform(-0.5, 0.5, size=(4, 1))
    schedule = init_schedule(maps, x0, inputs, 4)
    beliefs = rollout(nominal, gp, x0, inputs, mode="mm", scale=PENDULUM_DT)
    np.testing.assert_array_equal(schedule.points[0].sigma_x, np.zeros((2, 2)))
    for point, belief, u in zip(schedule.points, beliefs, inputs):
        np.testing.assert_array_equal(point.mu_x, belief.mean)
        np.testing.assert_array_equal(point.sigma_x, belief.covariance)
        np.testing.assert_array_equal(point.u, u)
    np.testing.assert_array_equal(schedule.covariances[-1], beliefs[-1].covariance)


# -- cost and tightening --------------------------------------------------------


def test_standard_normal_quantile():
    assert standard_normal_quantile(0.5) == 0.0
    assert standard_normal_quantile(0.975) == pytest.approx(1.959963984540054, abs=1e-12)
    assert standard_normal_quantile(1e-6) == pytest.approx(-4.753424308822899, abs=1e-9)
    with pytest.raises(ArgumentError):
        standard_normal_quantile(1.0)


def test_tightening_examples():
    alpha = np.array([1.0, 0.0])
    sigma = np.diag([0.04, 1.0])
    assert tighten_halfspace(alpha, 2.0, np.zeros((2, 2)), 0.95) == 2.0
    assert tighten_halfspace(alpha, 2.0, sigma, 0.5) == 2.0
    assert tighten_halfspace(alpha, 2.0, sigma, 0.95) == pytest.approx(2.0 - 1.6448536269514722 * 0.2, abs=1e-12)


def test_tightened_bound_meets_probability_by_sampling():
    sigma, p_x, b = 0.3, 0.9, 1.0
    mu = tighten_halfspace([1.0], b, [[sigma**2]], p_x)
    samples = np.random.default_rng(7).normal(mu, sigma, size=200_000)
    violation = np.mean(samples > b)
    assert violation <= 1 - p_x + 3 * np.sqrt(p_x * (1 - p_x) / samples.size)


def test_tightening_rejects_indefinite_covariance():
    with pytest.raises(NumericalError):
        tighten_halfspace([1.0, 0.0], 1.0, np.diag([-1e-6, 1.0]), 0.95)


def test_stage_cost_examples():
    cfg = ControllerConfig(horizon=3, Q=np.diag([1.0, 2.0]).tolist(), R=[[0.5]])
    r = np.arange(8.0).reshape(4, 2)
    assert stage_cost(r, np.zeros((4, 2, 2)), np.zeros((3, 1)), r, cfg) == 0.0
    assert stage_cost(r, np.tile(np.eye(2), (4, 1, 1)), np.zeros((3, 1)), r, cfg) == pytest.approx(4 * 3.0)
    assert stage_cost(r, None, np.ones((3, 1)), r, cfg) == pytest.approx(1.5)
    shifted = cfg.model_copy(update={"u_ref": [1.0]})
    assert stage_cost(r, None, np.ones((3, 1)), r, shifted) == 0.0


def test_stage_cost_rejects_inconsistent_lengths():
    cfg = ControllerConfig(horizon=3, Q=[[1.0]], R=[[1.0]])
    with pytest.raises(ArgumentError):
        stage_cost(np.zeros((4, 1)), None, np.zeros((4, 1)), np.zeros((4, 1)), cfg)


# -- configuration --------------------------------------------------------------


@given(
    st.lists(st.floats(min_value=-100, max_value=100, allow_nan=False), min_size=1, max_size=6).filter(
        lambda a: np.linalg.norm(a) > 1e-3
    ),
    st.floats(min_value=-100, max_value=100, allow_nan=False),
)
def test_halfspace_is_normalized(alpha, b):
    h = HalfSpace(alpha=alpha, b=b)
    norm = np.linalg.norm(alpha)
    assert np.linalg.norm(h.alpha) == pytest.approx(1.0, abs=1e-12)
    assert h.b == pytest.approx(b / norm, rel=1e-12, abs=1e-12)


def test_halfspace_rejects_zero_normal():
    with pytest.raises(ValidationError):
        HalfSpace(alpha=[0.0, 0.0], b=1.0)


@pytest.mark.parametrize(
    "overrides",
    [
        dict(quad_nodes=8),
        dict(Q=[[1.0, 0.5], [0.0, 1.0]]),
        dict(R=[[0.0]]),
        dict(horizon=0),
        dict(p_x=1.0),
        dict(u_ref=[1.0, 2.0]),
        dict(state_polytope=[dict(alpha=[1.0], b=1.0)]),
        dict(gap_state_scale=[1.0, -1.0]),
    ],
)
def test_invalid_controller_config(overrides):
    base = dict(Q=np.eye(2).tolist(), R=[[1.0]])
    base.update(overrides)
    with pytest.raises(ValidationError):
        ControllerConfig(**base)


def test_default_config_is_quadrotor_tuning():
    cfg = ControllerConfig()
    assert (cfg.horizon, cfg.n_x, cfg.n_u, cfg.eps_lpv, cfg.max_iters, cfg.T_s) == (12, 9, 4, 0.01, 12, 0.02)
    np.testing.assert_array_equal(np.diag(cfg.weights()[0]), [100, 100, 400, 40, 10, 10, 0.1, 0.1, 0.1])


@pytest.mark.parametrize("variant", CONTROLLER_VARIANTS)
def test_config_for_variant(variant):
    cfg = config_for_variant(ControllerConfig(), variant)
    if variant == "baseline":
        assert not cfg.use_gp
    else:
        assert variant == f"lpv-{cfg.propagation_mode}-{cfg.covariance_mode}"
        assert cfg.use_gp


def test_unknown_variant():
    with pytest.raises(ArgumentError):
        config_for_variant(ControllerConfig(), "nl-mm-cov")


# -- QP assembly ----------------------------------------------------------------


def test_pair_halfspaces():
    pairs = pair_halfspaces(np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]]))
    assert pairs == [(0, 2), (1, None)]


def assemble_pendulum(rng, covariance_mode, soft=False, sigma_scale=None, **overrides):
    cfg = pendulum_config(
        horizon=3,
        covariance_mode=covariance_mode,
        state_polytope=[dict(alpha=[0.0, 1.0], b=0.3), dict(alpha=[0.0, -1.0], b=0.3)],
        input_polytope=[dict(alpha=[1.0], b=2.0), dict(alpha=[-1.0], b=2.0)],
        **overrides,
    )
    maps = MomentMaps(pendulum(), pendulum_gp(rng), mode="mm", scale=PENDULUM_DT)
    x0, u_prev = np.array([0.6, 0.1]), np.array([0.2])
    schedule = init_schedule(maps, x0, np.full((3, 1), 0.2), 3)
    steps = factorize_horizon(maps, AnchorPoint(x0, u_prev), schedule.points, cfg.quad_nodes, covariance_mode)
    sigma = schedule.covariances if sigma_scale is None else sigma_scale * np.tile(np.eye(2), (4, 1, 1))
    r = np.zeros((4, 2))
    return cfg, qp_assemble_mpc(steps, cfg, x0, u_prev, sigma, r, soft=soft), schedule, r


@pytest.mark.parametrize("covariance_mode", ["precov", "cov"])
def test_objective_plus_offset_equals_stage_cost(rng, covariance_mode):
    cfg, mpc, schedule, r = assemble_pendulum(rng, covariance_mode)
    sol = qp_solve(mpc.problem)
    assert sol.solved
    covs = mpc.layout.covariances(sol.x)
    covs = schedule.covariances if covs is None else covs
    expected = stage_cost(mpc.layout.means(sol.x, mpc.x0), covs, mpc.layout.inputs(sol.x), r, cfg)
    assert sol.objective == pytest.approx(expected, rel=1e-6)


def test_decision_dimensions(rng):
    _, precov, _, _ = assemble_pendulum(rng, "precov")
    _, cov, _, _ = assemble_pendulum(rng, "cov")
    assert precov.problem.n == 3 * (1 + 2)
    assert cov.problem.n == 3 * (1 + 2) + 3 * 4


def test_zero_covariance_leaves_polytope_untightened(rng):
    _, mpc, _, _ = assemble_pendulum(rng, "precov", sigma_scale=0.0)
    np.testing.assert_array_equal(mpc.tightened_bounds, np.full((3, 2), 0.3))


def test_crossing_tightening_names_step_and_halfspace(rng):
    with pytest.raises(InfeasibleTighteningError) as excinfo:
        assemble_pendulum(rng, "precov", sigma_scale=0.25)
    assert excinfo.value.step == 1
    assert excinfo.value.halfspace == 0


def test_soft_assembly_absorbs_crossing_tightening(rng):
    cfg, mpc, _, _ = assemble_pendulum(rng, "precov", soft=True, sigma_scale=0.25)
    sol = qp_solve(mpc.problem)
    assert sol.solved
    slack = mpc.layout.slack(sol.x)
    assert slack.size == 3 and slack.min() > 0.1


def test_assembly_is_pure(rng):
    _, first, _, _ = assemble_pendulum(np.random.default_rng(5), "cov")
    _, second, _, _ = assemble_pendulum(np.random.default_rng(5), "cov")
    assert (first.problem.A != second.problem.A).nnz == 0
    np.testing.assert_array_equal(first.problem.l, second.problem.l)
    np.testing.assert_array_equal(first.problem.q, second.problem.q)


# -- controller -----------------------------------------------------------------


def scalar_lq_controller(**overrides):
    cfg = ControllerConfig(horizon=1, Q=[[2.0]], R=[[0.5]], use_gp=False, covariance_mode="precov", **overrides)
    return GpMpcController(cfg, NominalModel.linear([[1.0]], [[0.5]]))


def test_one_step_lq_solution():
    # u* = q b (r1 - a x0) / (q b^2 + r) with a = 1, b = 0.5, q = 2, r = 0.5, x0 = 1
    controller = scalar_lq_controller(max_iters=1)
    u, diag = controller.mpc_step([1.0], np.zeros((2, 1)))
    assert u[0] == pytest.approx(-1.0, abs=1e-6)
    assert diag.lpv_iterations == 1


def test_linear_system_reaches_fixed_point_after_first_qp():
    u, diag = scalar_lq_controller().mpc_step([1.0], np.zeros((2, 1)))
    assert u[0] == pytest.approx(-1.0, abs=1e-6)
    assert diag.status == "converged"
    assert diag.lpv_iterations == 2
    assert diag.gap_history[-1] <= 1e-9


def test_rti_solves_one_qp():
    u, diag = scalar_lq_controller(rti=True).mpc_step([1.0], np.zeros((2, 1)))
    assert u[0] == pytest.approx(-1.0, abs=1e-6)
    assert (diag.status, diag.lpv_iterations, diag.gap_history) == ("rti", 1, ())


def test_precov_and_cov_coincide_for_linear_model_and_zero_gp(rng):
    gp = prior_only_gp(rng)
    inputs = {}
    for mode in ("precov", "cov"):
        cfg = ControllerConfig(
            horizon=4,
            Q=np.diag([1.0, 0.1]).tolist(),
            R=[[0.01]],
            T_s=0.1,
            covariance_mode=mode,
            state_polytope=[dict(alpha=[1.0, 0.0], b=0.6)],
        )
        controller = GpMpcController(cfg, DOUBLE_INTEGRATOR, gp)
        reference = np.tile([1.0, 0.0], (5, 1))
        controller.mpc_step([0.0, 0.0], reference)
        inputs[mode] = controller.state.prediction.inputs
    np.testing.assert_allclose(inputs["precov"], inputs["cov"], atol=1e-6)


@pytest.mark.parametrize("covariance_mode", ["precov", "cov"])
def test_converged_iterate_satisfies_nonlinear_recursion(rng, covariance_mode):
    nominal, gp = pendulum(), pendulum_gp(rng)
    cfg = pendulum_config(covariance_mode=covariance_mode, eps_lpv=1e-8, max_iters=40, quad_nodes=21)
    controller = GpMpcController(cfg, nominal, gp)
    x0 = np.array([0.5, 0.0])
    _, diag = controller.mpc_step(x0, np.zeros((6, 2)))
    assert diag.status == "converged"
    assert diag.gap <= 1e-8

    prediction = controller.state.prediction
    beliefs = rollout(nominal, gp, x0, prediction.inputs, mode="mm", scale=PENDULUM_DT)
    np.testing.assert_allclose(prediction.means, [b.mean for b in beliefs], atol=1e-6)
    np.testing.assert_allclose(prediction.covariances, [b.covariance for b in beliefs], atol=1e-6)


def test_iteration_cap_returns_best_iterate(rng):
    cfg = pendulum_config(eps_lpv=1e-14, max_iters=2)
    controller = GpMpcController(cfg, pendulum(), pendulum_gp(rng))
    _, diag = controller.mpc_step([0.5, 0.0], np.zeros((6, 2)))
    assert diag.status == "max_iters"
    assert not diag.converged
    assert len(diag.gap_history) == 2
    assert diag.gap == min(diag.gap_history)


def test_unconverged_qp_never_counts_as_converged():
    diag = StepDiagnostics(0, 1, 4000, 0.0, 0.0, 0.0, 0.0, (0.0,), 0.0, "converged", "max_iter", False, 0.0)
    assert not diag.converged
    assert dataclasses.replace(diag, qp_status="solved").converged


def test_unsolved_qp_is_flagged_and_dumped(tmp_path, caplog):
    dump_dir = tmp_path / "failed_qps"
    controller = scalar_lq_controller(rti=True, qp=QpSettings(max_iter=1, polish=False), dump_failed_qp=str(dump_dir))
    with caplog.at_level(logging.WARNING, logger="gpmpc_common.controller.gpmpc"):
        _, diag = controller.mpc_step([1.0], np.zeros((2, 1)))
    assert (diag.status, diag.qp_status) == ("rti", "max_iter")
    assert not diag.converged
    assert any("not converged" in r.getMessage() for r in caplog.records)

    (dumped,) = sorted(dump_dir.iterdir())
    assert dumped.name == "step00000_qp001"
    assert load_qp(dumped).n == controller.state.prev_solution.x.size


def test_solved_qp_is_not_dumped(tmp_path):
    dump_dir = tmp_path / "failed_qps"
    _, diag = scalar_lq_controller(rti=True, dump_failed_qp=str(dump_dir)).mpc_step([1.0], np.zeros((2, 1)))
    assert diag.converged
    assert not dump_dir.exists()


def test_controller_is_deterministic():
    results = []
    for _ in range(2):
        controller = GpMpcController(pendulum_config(), pendulum(), pendulum_gp(np.random.default_rng(3)))
        results.append(controller.mpc_step([0.5, 0.0], np.zeros((6, 2)))[0])
    np.testing.assert_array_equal(results[0], results[1])


def test_state_carries_over_between_steps(rng):
    controller = GpMpcController(pendulum_config(), pendulum(), pendulum_gp(rng))
    u0, _ = controller.mpc_step([0.5, 0.0], np.zeros((6, 2)))
    _, diag = controller.mpc_step([0.45, -0.1], np.zeros((6, 2)))
    assert controller.state.step == 2
    assert [d.step for d in controller.state.iteration_log] == [0, 1]
    assert diag.qp_iterations >= 1
    np.testing.assert_array_equal(controller.state.u_prev, controller.state.prediction.inputs[0])
    assert set(diag.as_row()) == set(DIAGNOSTIC_FIELDS)
    controller.reset()
    assert controller.state.prev_inputs is None


def test_crossing_tightening_falls_back_to_slack(rng):
    cfg = ControllerConfig(
        horizon=3,
        Q=np.eye(2).tolist(),
        R=[[0.1]],
        T_s=0.1,
        state_polytope=[dict(alpha=[1.0, 0.0], b=0.05), dict(alpha=[-1.0, 0.0], b=0.05)],
    )
    controller = GpMpcController(cfg, DOUBLE_INTEGRATOR, prior_only_gp(rng))
    before = slack_fallbacks()
    u, diag = controller.mpc_step([0.0, 0.0], np.zeros((4, 2)))
    assert slack_fallbacks() > before
    assert diag.slack_used
    assert diag.max_slack > 0.0
    assert np.all(np.isfinite(u))


def test_mpc_step_rejects_bad_reference():
    with pytest.raises(ArgumentError):
        scalar_lq_controller().mpc_step([1.0], np.zeros((3, 1)))


def test_gp_required_unless_disabled():
    with pytest.raises(ArgumentError):
        GpMpcController(pendulum_config(), pendulum())
