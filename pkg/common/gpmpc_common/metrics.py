"""Prometheus metrics for the controller stack.

The counters are always defined and incremented; whether anything serves them
over HTTP is up to the entry point (``METRICS_PORT`` in the bench service):

* ``gpmpc_variance_clamps_total`` -- negative GP output variances reset to the
  noise floor, labelled by output index.
* ``gpmpc_covariance_psd_clamps_total`` -- propagated covariances projected
  back onto the PSD cone.
* ``gpmpc_qp_solves_total`` -- QP outcomes, labelled by solver status.
* ``gpmpc_slack_fallbacks_total`` -- controller steps that needed soft state
  constraints.
* ``gpmpc_allocation_saturations_total`` -- mixer outputs clipped to rotor limits.
* ``gpmpc_mpc_step_seconds`` -- wall time of one controller step.
"""

from prometheus_client import Counter, Histogram

VARIANCE_CLAMPS = Counter(
    "gpmpc_variance_clamps_total",
    "GP output variances clamped to the noise variance, labelled by output.",
    ["output"],
)

COVARIANCE_PSD_CLAMPS = Counter(
    "gpmpc_covariance_psd_clamps_total",
    "Propagated state covariances with negative eigenvalues clipped at zero.",
)

QP_SOLVES = Counter(
    "gpmpc_qp_solves_total",
    "QP solver outcomes, labelled by status.",
    ["status"],
)

SLACK_FALLBACKS = Counter(
    "gpmpc_slack_fallbacks_total",
    "Controller steps re-solved with slack on tightened state constraints.",
)

ALLOCATION_SATURATIONS = Counter(
    "gpmpc_allocation_saturations_total",
    "Rotor thrust commands clipped by the mixer.",
)

MPC_STEP_SECONDS = Histogram(
    "gpmpc_mpc_step_seconds",
    "Wall time of one iterated LPV-MPC step.",
    buckets=(0.001, 0.0025, 0.005, 0.01, 0.02, 0.05, 0.1, 0.25, 0.5, 1, 2.5, 5),
)
