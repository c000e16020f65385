"""Matrix Market export of QP data for offline debugging."""

import logging
from pathlib import Path
from typing import Union

import numpy as np
from scipy.io import mmread, mmwrite

from .problem import QpProblem

logger = logging.getLogger(__name__)

_PARTS = ("P", "q", "A", "l", "u")


def dump_qp(problem: QpProblem, directory: Union[str, Path]) -> Path:
    """Write ``P.mtx``, ``q.mtx``, ``A.mtx``, ``l.mtx`` and ``u.mtx`` into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    mmwrite(str(directory / "P.mtx"), problem.P, comment="QP cost matrix", symmetry="symmetric")
    mmwrite(str(directory / "A.mtx"), problem.A, comment="QP constraint matrix")
    for name in ("q", "l", "u"):
        mmwrite(str(directory / f"{name}.mtx"), getattr(problem, name).reshape(-1, 1))
    (directory / "offset.txt").write_text(repr(problem.objective_offset))
    logger.info(f"QP with n={problem.n}, m={problem.m} written to {directory}")
    return directory


def load_qp(directory: Union[str, Path]) -> QpProblem:
    directory = Path(directory)
    parts = {name: mmread(str(directory / f"{name}.mtx")) for name in _PARTS}
    offset_file = directory / "offset.txt"
    offset = float(offset_file.read_text()) if offset_file.exists() else 0.0
    return QpProblem(
        P=parts["P"],
        q=np.asarray(parts["q"]).ravel(),
        A=parts["A"],
        l=np.asarray(parts["l"]).ravel(),
        u=np.asarray(parts["u"]).ravel(),
        objective_offset=offset,
    )
