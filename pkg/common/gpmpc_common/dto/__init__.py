from .controller_config import ControllerConfig, HalfSpace
from .qp_settings import QpSettings
from .reports import BenchmarkReport, InducingSweepReport, OutputTrainingSummary, Provenance, SweepRow, TrainingReport, VariantComparison
from .simulation_options import SimulationOptions
from .training import TrainingOptions

__all__ = [
    "BenchmarkReport",
    "ControllerConfig",
    "HalfSpace",
    "InducingSweepReport",
    "OutputTrainingSummary",
    "Provenance",
    "QpSettings",
    "SimulationOptions",
    "SweepRow",
    "TrainingOptions",
    "TrainingReport",
    "VariantComparison",
]
