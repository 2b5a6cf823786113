"""Dense LP and convex QP solvers used by every optimization in the package."""

from .problems import LpProblem, QpProblem, SolveStatus, Status
from .lp import solve_lp
from .qp import solve_qp
from .kkt import check_lp, check_qp, KktReport

__all__ = [
    "LpProblem",
    "QpProblem",
    "SolveStatus",
    "Status",
    "solve_lp",
    "solve_qp",
    "check_lp",
    "check_qp",
    "KktReport",
]
