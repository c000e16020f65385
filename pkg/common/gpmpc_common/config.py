"""Numerical defaults shared by every component.

Values can be overridden through the environment, e.g. ``GP_JITTER_MAX=1e-5``.
"""
import os

# GP linear algebra
GP_JITTER_START: float = float(os.getenv("GP_JITTER_START", "1e-10"))
GP_JITTER_MAX: float = float(os.getenv("GP_JITTER_MAX", "1e-6"))
GP_JITTER_FACTOR: float = float(os.getenv("GP_JITTER_FACTOR", "10"))
SPARSE_JITTER: float = float(os.getenv("SPARSE_JITTER", "1e-10"))

# GP training
GP_TRAIN_MAX_ITER: int = int(os.getenv("GP_TRAIN_MAX_ITER", "500"))
GP_TRAIN_GTOL: float = float(os.getenv("GP_TRAIN_GTOL", "1e-8"))
GP_LOG_BOUND: float = float(os.getenv("GP_LOG_BOUND", "18.0"))
INDUCING_BOX_FACTOR: float = float(os.getenv("INDUCING_BOX_FACTOR", "1.2"))

# Moment propagation
VARIANCE_FLOOR: float = float(os.getenv("VARIANCE_FLOOR", "0.0"))
PSD_TOLERANCE: float = float(os.getenv("PSD_TOLERANCE", "1e-10"))

# LPV factorization
QUAD_NODES: int = int(os.getenv("QUAD_NODES", "9"))
COMPLEX_STEP: float = float(os.getenv("COMPLEX_STEP", "1e-30"))

# QP solver
QP_MAX_ITER: int = int(os.getenv("QP_MAX_ITER", "4000"))
QP_EPS_ABS: float = float(os.getenv("QP_EPS_ABS", "1e-6"))
QP_EPS_REL: float = float(os.getenv("QP_EPS_REL", "1e-6"))
QP_INFINITY: float = float(os.getenv("QP_INFINITY", "1e20"))
