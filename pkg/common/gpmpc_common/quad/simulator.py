"""Cascaded closed-loop simulation.

The outer controller runs every ``T_s``; between ticks the command
``(T, p, q, r)`` is held while the rate PID, the mixer and the truth model
run at ``dt_sim``.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from ..controller import DIAGNOSTIC_FIELDS, StepDiagnostics
from ..dto.simulation_options import SimulationOptions
from ..errors import ArgumentError, GpMpcError, SimulationAbortedError
from ..gp import Dataset
from ..propagation import NominalModel
from .augmentation import transitions_to_residuals
from .dynamics import TruthState, allocate, truth_rk4_step
from .params import QuadParams
from .pid import RatePidState, inner_rate_pid
from .references import Reference, reference_horizon

logger = logging.getLogger(__name__)

ATTITUDE_ABORT_MARGIN = 0.05

TRUTH_FIELDS = ("px", "py", "pz", "vx", "vy", "vz", "qx", "qy", "qz", "qw", "p", "q", "r")
EULER_FIELDS = ("phi", "theta", "psi")
INPUT_FIELDS = ("thrust_cmd", "p_cmd", "q_cmd", "r_cmd")
REFERENCE_FIELDS = ("ref_px", "ref_py", "ref_pz", "ref_vx", "ref_vy", "ref_vz", "ref_phi", "ref_theta", "ref_psi")
DISTURBANCE_FIELDS = ("dist_x", "dist_y", "dist_z")
TRAJECTORY_FIELDS = (
    ("time",) + TRUTH_FIELDS + EULER_FIELDS + INPUT_FIELDS + REFERENCE_FIELDS + DISTURBANCE_FIELDS + DIAGNOSTIC_FIELDS
)


@dataclass
class TrajectoryLog:
    """Per-tick record of a closed-loop run.

    ``states`` holds the measured outer state at every tick and, for a run
    that finished, one extra final state; the other lists hold one entry
    per tick.
    """

    T_s: float
    reference_name: str = ""
    times: List[float] = field(default_factory=list)
    truth: List[np.ndarray] = field(default_factory=list)
    states: List[np.ndarray] = field(default_factory=list)
    inputs: List[np.ndarray] = field(default_factory=list)
    references: List[np.ndarray] = field(default_factory=list)
    disturbances: List[np.ndarray] = field(default_factory=list)
    diagnostics: List[StepDiagnostics] = field(default_factory=list)
    saturations: int = 0
    mixer_updates: int = 0
    completed: bool = False

    @property
    def n_ticks(self) -> int:
        return len(self.inputs)

    def transitions(self):
        """(x(k), u(k), x(k+1)) arrays for every tick with a measured successor."""
        n = min(self.n_ticks, len(self.states) - 1)
        if n <= 0:
            return np.zeros((0, 9)), np.zeros((0, 4)), np.zeros((0, 9))
        states = np.asarray(self.states)
        return states[:n], np.asarray(self.inputs[:n]), states[1:n + 1]

    def tracking_rmse(self, lateral: bool = False) -> float:
        """RMS position error over the ticks [m]; x-y only when ``lateral``."""
        if self.n_ticks == 0:
            return float("nan")
        axes = slice(0, 2) if lateral else slice(0, 3)
        err = np.asarray(self.states[: self.n_ticks])[:, axes] - np.asarray(self.references)[:, axes]
        return float(np.sqrt(np.mean(np.sum(err**2, axis=1))))

    def rows(self) -> List[Dict[str, object]]:
        """Long-format rows, one per tick, keyed by ``TRAJECTORY_FIELDS``."""
        out = []
        for k in range(self.n_ticks):
            row: Dict[str, object] = {"time": self.times[k]}
            row.update(zip(TRUTH_FIELDS, self.truth[k].tolist()))
            row.update(zip(EULER_FIELDS, self.states[k][6:9].tolist()))
            row.update(zip(INPUT_FIELDS, self.inputs[k].tolist()))
            row.update(zip(REFERENCE_FIELDS, self.references[k].tolist()))
            row.update(zip(DISTURBANCE_FIELDS, self.disturbances[k].tolist()))
            row.update(self.diagnostics[k].as_row())
            out.append(row)
        return out


def residual_dataset(log: TrajectoryLog, model: NominalModel, T_d: Optional[float] = None) -> Dataset:
    """GP training pairs (w(k), z(k)) from a simulated run."""
    states, inputs, next_states = log.transitions()
    return transitions_to_residuals(states, inputs, next_states, model, log.T_s if T_d is None else T_d)


def _measure(v: np.ndarray, t: float, log: TrajectoryLog) -> np.ndarray:
    if not np.all(np.isfinite(v)):
        raise SimulationAbortedError(f"non-finite truth state at t={t:.3f}s", log=log, reason="nan_state")
    x = TruthState.from_vector(v).outer_state()
    if abs(x[7]) >= np.pi / 2 - ATTITUDE_ABORT_MARGIN:
        raise SimulationAbortedError(
            f"pitch {np.degrees(x[7]):.1f} deg at t={t:.3f}s is at the Euler-angle singularity",
            log=log,
            reason="attitude_singularity",
        )
    return x


def simulate_closed_loop(
    controller, reference: Reference, params: QuadParams, options: Optional[SimulationOptions] = None
) -> TrajectoryLog:
    """Fly ``reference`` for ``options.duration`` seconds from hover at its start.

    Args:
        controller: Anything with ``cfg`` (horizon, T_s) and ``mpc_step``.
        reference: Reference trajectory.
        params: Nominal vehicle; the truth model applies the perturbation factors.
        options: Timing, disturbance and truth-model options.

    Raises:
        SimulationAbortedError: NaN state, attitude singularity or a controller
            failure; the exception carries the partial log.
    """
    options = options or SimulationOptions()
    cfg = controller.cfg
    if abs(cfg.T_s - options.T_s) > 1e-12:
        raise ArgumentError(f"controller runs at T_s={cfg.T_s}, simulation at {options.T_s}")
    pid_ratio = 1.0 / (params.pid_rate_hz * options.dt_sim)
    pid_every = int(round(pid_ratio))
    if pid_every < 1 or abs(pid_ratio - pid_every) > 1e-9:
        raise ArgumentError("the PID period must be an integer multiple of dt_sim")

    truth_params = params.perturbed(options.mass_factor, options.inertia_factor)
    rng = np.random.default_rng(options.seed)
    start, _ = reference.position_velocity(0.0)
    v = TruthState.hover(start).as_vector()
    pid = RatePidState()
    log = TrajectoryLog(T_s=options.T_s, reference_name=reference.name)
    noise_std = np.sqrt(options.disturbance_variance)
    thrusts = np.full(4, truth_params.hover_thrust / 4.0)
    logger.info(
        f"simulating {reference.name} for {options.duration:.1f}s ({options.n_ticks} ticks, "
        f"disturbance={options.disturbance}, aero={options.aero})"
    )

    for k in range(options.n_ticks):
        t = k * options.T_s
        x_k = _measure(v, t, log)
        r_traj = reference_horizon(reference, t, cfg.horizon, options.T_s)
        try:
            u, diag = controller.mpc_step(x_k, r_traj)
        except GpMpcError as e:
            raise SimulationAbortedError(
                f"controller failed at t={t:.3f}s: {e}", log=log, reason="controller_error"
            ) from e
        disturbance = rng.normal(0.0, noise_std, 3) if options.disturbance else np.zeros(3)

        log.times.append(t)
        log.truth.append(v.copy())
        log.states.append(x_k)
        log.inputs.append(np.asarray(u, dtype=float).copy())
        log.references.append(r_traj[0].copy())
        log.disturbances.append(disturbance)
        log.diagnostics.append(diag)
        if not np.all(np.isfinite(u)):
            raise SimulationAbortedError(f"non-finite command at t={t:.3f}s", log=log, reason="nan_state")

        for j in range(options.fast_steps_per_tick):
            if j % pid_every == 0:
                tau = inner_rate_pid(u[1:4], v[10:13], pid, truth_params)
                thrusts, saturated = allocate(u[0], tau, truth_params)
                log.saturations += int(saturated)
                log.mixer_updates += 1
            v = truth_rk4_step(v, thrusts, truth_params, options.dt_sim, disturbance, options.aero)

    log.states.append(_measure(v, options.duration, log))
    log.truth.append(v.copy())
    log.completed = True
    if log.saturations:
        logger.warning(f"{log.saturations} of {log.mixer_updates} mixer updates saturated a rotor")
    logger.info(f"finished {reference.name}: 3D RMSE {1e3 * log.tracking_rmse():.1f} mm")
    return log
