from .admm import qp_solve
from .io import dump_qp, load_qp
from .problem import QpProblem, QpSolution, QpStatus

__all__ = ["QpProblem", "QpSolution", "QpStatus", "dump_qp", "load_qp", "qp_solve"]
