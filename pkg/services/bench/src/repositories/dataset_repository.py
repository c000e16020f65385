"""GP training datasets as versioned CSV."""

import hashlib
from pathlib import Path
from typing import List

import numpy as np

from gpmpc_common.errors import ArgumentError
from gpmpc_common.gp import Dataset

from config import CSV_SCHEMA_VERSION
from .file_repository import FileRepository

INPUT_COLUMNS = ("vx", "vy", "vz", "phi", "theta", "psi", "thrust", "p", "q", "r")
OUTPUT_COLUMNS = ("z_x", "z_y", "z_z")


def _columns(n_inputs: int, n_outputs: int) -> List[str]:
    inputs = list(INPUT_COLUMNS) if n_inputs == len(INPUT_COLUMNS) else [f"w_{i}" for i in range(n_inputs)]
    outputs = list(OUTPUT_COLUMNS) if n_outputs == len(OUTPUT_COLUMNS) else [f"z_{i}" for i in range(n_outputs)]
    return inputs + outputs


class DatasetRepository(FileRepository[Dataset]):
    """Rows of (w, z); the header line after the version line names the columns.

    Values are written with 17 significant digits so a re-run with the same
    seed produces a byte-identical file.
    """

    suffix = ".csv"

    def _write(self, path: Path, obj: Dataset) -> None:
        header = f"schema_version={CSV_SCHEMA_VERSION}\n" + ",".join(_columns(obj.n_inputs, obj.n_outputs))
        np.savetxt(path, np.hstack([obj.inputs, obj.outputs]), delimiter=",", fmt="%.17g", header=header)

    def _read(self, path: Path) -> Dataset:
        with open(path) as f:
            version = f.readline().lstrip("# ").strip()
            columns = f.readline().lstrip("# ").strip().split(",")
        if version != f"schema_version={CSV_SCHEMA_VERSION}":
            raise ArgumentError(f"{path}: unsupported dataset schema '{version}'")
        values = np.loadtxt(path, delimiter=",", ndmin=2)
        n_outputs = sum(c.startswith("z_") for c in columns)
        if values.shape[1] != len(columns) or n_outputs == 0:
            raise ArgumentError(f"{path}: columns {columns} do not match the data")
        return Dataset(values[:, :-n_outputs], values[:, -n_outputs:])

    def digest(self, name: str) -> str:
        """sha256 of the stored file."""
        return hashlib.sha256(self.path(name).read_bytes()).hexdigest()
