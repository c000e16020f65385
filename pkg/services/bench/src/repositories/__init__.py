"""File-system repositories for run artifacts."""

from .dataset_repository import DatasetRepository
from .file_repository import FileRepository
from .model_repository import ModelRepository
from .report_repository import ReportRepository
from .trajectory_repository import TableRepository

__all__ = ["DatasetRepository", "FileRepository", "ModelRepository", "ReportRepository", "TableRepository"]
