"""Iterated LPV GP-MPC.

Each control step freezes the scheduling trajectory, factorizes the moment
maps into an LPV model around the measured state, solves one QP, re-simulates
the nonlinear moment recursion with the new inputs and repeats until the
schedule stops moving.
"""

import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .. import metrics
from ..dto.controller_config import ControllerConfig
from ..errors import ArgumentError, InfeasibleTighteningError, NumericalError
from ..gp.sparse_gp import SparseGpModel
from ..lpv import AnchorPoint, LpvStep, MomentMaps, SchedulingPoint, factorize_horizon, schedule_from_beliefs
from ..propagation import NominalModel, rollout
from ..qp import QpSolution, QpStatus, dump_qp, qp_solve
from .assembly import MpcQp, qp_assemble_mpc
from .cost import stage_cost

logger = logging.getLogger(__name__)

CONTROLLER_VARIANTS = ("lpv-taylor-precov", "lpv-taylor-cov", "lpv-mm-precov", "lpv-mm-cov", "baseline")


def config_for_variant(cfg: ControllerConfig, variant: str) -> ControllerConfig:
    """Copy of ``cfg`` switched to one of :data:`CONTROLLER_VARIANTS`."""
    if variant not in CONTROLLER_VARIANTS:
        raise ArgumentError(f"unknown controller variant {variant!r}, expected one of {CONTROLLER_VARIANTS}")
    if variant == "baseline":
        return cfg.model_copy(update={"use_gp": False, "covariance_mode": "precov"})
    _, mode, cov = variant.split("-")
    return cfg.model_copy(update={"use_gp": True, "propagation_mode": mode, "covariance_mode": cov})


def shift_inputs(prev) -> np.ndarray:
    """Drop the applied input and repeat the last one: [a, b, c] -> [b, c, c]."""
    prev = np.asarray(prev, dtype=float)
    if prev.ndim != 2 or prev.shape[0] == 0:
        raise ArgumentError(f"expected a nonempty (N, n_u) input sequence, got shape {prev.shape}")
    return np.concatenate([prev[1:], prev[-1:]])


@dataclass(frozen=True)
class Schedule:
    """Scheduling trajectory and the belief trajectory it came from.

    ``points`` has N entries (steps 0..N-1); ``means`` and ``covariances``
    span steps 0..N.
    """

    points: List[SchedulingPoint]
    means: np.ndarray = field(repr=False)
    covariances: np.ndarray = field(repr=False)

    def rho(self) -> np.ndarray:
        return np.array([p.rho for p in self.points])


def init_schedule(maps: MomentMaps, x_k, inputs: Optional[np.ndarray], horizon: int) -> Schedule:
    """Schedule from a rollout of the nonlinear moment recursion.

    Without inputs (first control step) every point is (x_k, 0, 0).
    """
    x_k = np.asarray(x_k, dtype=float).reshape(-1)
    n_x, n_u = maps.n_x, maps.n_u
    if inputs is None:
        zero_cov = np.zeros((n_x, n_x))
        points = [SchedulingPoint(x_k, np.zeros(n_u), zero_cov) for _ in range(horizon)]
        return Schedule(points, np.tile(x_k, (horizon + 1, 1)), np.zeros((horizon + 1, n_x, n_x)))
    inputs = np.asarray(inputs, dtype=float)
    if inputs.shape != (horizon, n_u):
        raise ArgumentError(f"inputs must be ({horizon}, {n_u}), got {inputs.shape}")
    beliefs = rollout(maps.nominal, maps.gp, x_k, inputs, maps.mode, maps.scale, maps.selector, maps.taylor_cross)
    return Schedule(
        schedule_from_beliefs(beliefs[:horizon], inputs),
        np.array([b.mean for b in beliefs]),
        np.array([b.covariance for b in beliefs]),
    )


def schedule_gap(old: Schedule, new: Schedule, scales: np.ndarray) -> float:
    """Largest scaled change of rho over the horizon."""
    return float(np.max(np.abs((new.rho() - old.rho()) / scales)))


@dataclass(frozen=True)
class Prediction:
    """Open-loop prediction of the returned QP solution."""

    inputs: np.ndarray
    means: np.ndarray
    covariances: np.ndarray


@dataclass(frozen=True)
class StepDiagnostics:
    step: int
    lpv_iterations: int
    qp_iterations: int
    factorization_time: float
    qp_time: float
    step_time: float
    gap: float
    gap_history: Tuple[float, ...]
    cost: float
    status: str
    qp_status: str
    slack_used: bool
    max_slack: float

    @property
    def converged(self) -> bool:
        return self.status in ("converged", "rti") and self.qp_status == QpStatus.SOLVED.value

    def as_row(self) -> Dict[str, object]:
        """Flat CSV row; the gap history is ``;``-joined."""
        row = asdict(self)
        row["gap_history"] = ";".join(f"{g:.6e}" for g in self.gap_history)
        return row


DIAGNOSTIC_FIELDS = tuple(StepDiagnostics.__dataclass_fields__)


@dataclass
class ControllerState:
    """Mutable state carried between control steps."""

    prev_inputs: Optional[np.ndarray] = None
    u_prev: Optional[np.ndarray] = None
    prev_solution: Optional[QpSolution] = None
    schedule: Optional[Schedule] = None
    prediction: Optional[Prediction] = None
    iteration_log: List[StepDiagnostics] = field(default_factory=list)
    step: int = 0


@dataclass
class _Iterate:
    gap: float
    mpc: MpcQp
    solution: QpSolution
    schedule: Schedule
    next_schedule: Schedule
    slack_used: bool


class GpMpcController:
    """Iterated LPV-MPC for a nominal model with an optional sparse GP residual.

    Args:
        cfg: Controller configuration.
        nominal: Discrete nominal model.
        gp: Residual model; ignored when ``cfg.use_gp`` is False.
        selector: B_z, mapping GP outputs into state rows.
        gp_scale: Factor on the GP output, the sampling time by default.
    """

    def __init__(
        self,
        cfg: ControllerConfig,
        nominal: NominalModel,
        gp: Optional[SparseGpModel] = None,
        selector: Optional[np.ndarray] = None,
        gp_scale: Optional[float] = None,
    ):
        if nominal.n_x != cfg.n_x or nominal.n_u != cfg.n_u:
            raise ArgumentError(
                f"model has (n_x, n_u) = ({nominal.n_x}, {nominal.n_u}), weights imply ({cfg.n_x}, {cfg.n_u})"
            )
        if cfg.use_gp and gp is None:
            raise ArgumentError("a GP model is required unless use_gp is False")
        self.cfg = cfg
        self.maps = MomentMaps(
            nominal,
            gp if cfg.use_gp else None,
            mode=cfg.propagation_mode,
            scale=cfg.T_s if gp_scale is None else gp_scale,
            selector=selector if cfg.use_gp else None,
            taylor_cross=cfg.taylor_cross,
        )
        self.state = ControllerState()
        self._gap_scales = cfg.gap_scales()
        self._failed_qps = 0

    def reset(self):
        self.state = ControllerState()

    def _report_unsolved(self, mpc: MpcQp, sol: QpSolution, soft: bool):
        """Warn about a QP that missed its tolerances and dump it when configured."""
        kind = "soft" if soft else "hard"
        logger.warning(
            f"step {self.state.step}: {kind} QP ended with status {sol.status.value} "
            f"(primal {sol.primal_residual:.2e}, dual {sol.dual_residual:.2e}); step is not converged"
        )
        if self.cfg.dump_failed_qp is not None:
            self._failed_qps += 1
            target = Path(self.cfg.dump_failed_qp) / f"step{self.state.step:05d}_qp{self._failed_qps:03d}"
            dump_qp(mpc.problem, target)

    def _solve(self, steps: Sequence[LpvStep], x_k, u_prev, schedule: Schedule, r_traj, warm):
        """Hard-constrained QP, or its slack relaxation when that is infeasible."""
        cfg = self.cfg
        try:
            mpc = qp_assemble_mpc(steps, cfg, x_k, u_prev, schedule.covariances, r_traj)
        except InfeasibleTighteningError as e:
            reason = str(e)
        else:
            sol = qp_solve(mpc.problem, warm, cfg.qp)
            if sol.status != QpStatus.PRIMAL_INFEASIBLE:
                if not sol.solved:
                    self._report_unsolved(mpc, sol, soft=False)
                return mpc, sol, False
            reason = "tightened QP is primal infeasible"

        metrics.SLACK_FALLBACKS.inc()
        logger.warning(f"step {self.state.step}: {reason}; re-solving with soft state constraints")
        mpc = qp_assemble_mpc(steps, cfg, x_k, u_prev, schedule.covariances, r_traj, soft=True)
        sol = qp_solve(mpc.problem, warm, cfg.qp)
        if sol.status in (QpStatus.PRIMAL_INFEASIBLE, QpStatus.DUAL_INFEASIBLE):
            raise NumericalError(f"MPC QP is {sol.status.value} even with soft state constraints")
        if not sol.solved:
            self._report_unsolved(mpc, sol, soft=True)
        slack = mpc.layout.slack(sol.x).reshape(cfg.horizon, -1)
        violated = np.argwhere(slack > cfg.qp.eps_abs)
        for i, row in violated:
            logger.warning(
                f"step {self.state.step}: state constraint row {row} violated by {slack[i, row]:.4g} "
                f"at prediction step {i + 1}"
            )
        return mpc, sol, True

    def mpc_step(self, x_k, r_traj) -> Tuple[np.ndarray, StepDiagnostics]:
        """Input to apply at the current sampling instant.

        Args:
            x_k: Measured state.
            r_traj: (N + 1, n_x) reference over the horizon.

        Returns:
            ``u(0|k)`` and the step diagnostics. When the iteration cap is
            hit the iterate with the smallest gap is used and the status is
            ``max_iters``. A step whose QP is not ``solved`` is never
            ``converged``.
        """
        started = time.perf_counter()
        cfg, st = self.cfg, self.state
        N, n_x, n_u = cfg.horizon, cfg.n_x, cfg.n_u
        x_k = np.asarray(x_k, dtype=float).reshape(-1)
        r_traj = np.asarray(r_traj, dtype=float)
        if x_k.size != n_x or not np.all(np.isfinite(x_k)):
            raise ArgumentError(f"measured state must be a finite {n_x}-vector")
        if r_traj.shape != (N + 1, n_x):
            raise ArgumentError(f"reference must be ({N + 1}, {n_x}), got {r_traj.shape}")

        u_prev = st.u_prev if st.u_prev is not None else np.zeros(n_u)
        anchor = AnchorPoint(x_k, u_prev)
        inputs = shift_inputs(st.prev_inputs) if st.prev_inputs is not None else None
        schedule = init_schedule(self.maps, x_k, inputs, N)

        warm = st.prev_solution
        best: Optional[_Iterate] = None
        gaps: List[float] = []
        fact_time = qp_time = 0.0
        qp_iters = 0
        status = "max_iters"
        for _ in range(cfg.max_iters):
            t0 = time.perf_counter()
            steps = factorize_horizon(self.maps, anchor, schedule.points, cfg.quad_nodes, cfg.covariance_mode, cfg.workers)
            t1 = time.perf_counter()
            mpc, sol, soft = self._solve(steps, x_k, u_prev, schedule, r_traj, warm)
            qp_time += time.perf_counter() - t1
            fact_time += t1 - t0
            qp_iters += sol.iterations
            warm = sol

            if cfg.rti:
                best = _Iterate(float("nan"), mpc, sol, schedule, schedule, soft)
                status = "rti"
                break
            next_schedule = init_schedule(self.maps, x_k, mpc.layout.inputs(sol.x), N)
            gap = schedule_gap(schedule, next_schedule, self._gap_scales)
            gaps.append(gap)
            logger.debug(f"step {st.step}, iteration {len(gaps)}: gap {gap:.3e}, QP {sol.status.value}")
            if best is None or gap <= best.gap:
                best = _Iterate(gap, mpc, sol, schedule, next_schedule, soft)
            schedule = next_schedule
            if gap <= cfg.eps_lpv:
                status = "converged"
                break
        else:
            logger.warning(
                f"step {st.step}: scheduling did not converge in {cfg.max_iters} iterations (best gap {best.gap:.3e})"
            )

        layout, z = best.mpc.layout, best.solution.x
        inputs = layout.inputs(z).copy()
        means = layout.means(z, x_k)
        covs = layout.covariances(z)
        if covs is None:
            covs = best.schedule.covariances
        slack = layout.slack(z)
        cost = stage_cost(means, covs, inputs, r_traj, cfg)

        st.prev_inputs = inputs
        st.u_prev = inputs[0].copy()
        st.prev_solution = best.solution
        st.schedule = best.next_schedule
        st.prediction = Prediction(inputs, means, covs)
        step_time = time.perf_counter() - started
        metrics.MPC_STEP_SECONDS.observe(step_time)
        diagnostics = StepDiagnostics(
            step=st.step,
            lpv_iterations=len(gaps) if gaps else 1,
            qp_iterations=qp_iters,
            factorization_time=fact_time,
            qp_time=qp_time,
            step_time=step_time,
            gap=best.gap,
            gap_history=tuple(gaps),
            cost=cost,
            status=status,
            qp_status=best.solution.status.value,
            slack_used=best.slack_used,
            max_slack=float(slack.max()) if slack.size else 0.0,
        )
        st.iteration_log.append(diagnostics)
        st.step += 1
        return inputs[0].copy(), diagnostics
