"""Dense numerical kernels: QP solvers, Riccati equation, LQ feedback."""
from .active_set import solve_qp_active_set
from .dual_active_set import dual_active_set
from .qp import QpProblem, QpSolution, kkt_check, solve_qp
from .riccati import RiccatiResult, dare_residual, lq_control, solve_dare

__all__ = [
    "QpProblem", "QpSolution", "solve_qp", "kkt_check", "solve_qp_active_set", "dual_active_set",
    "RiccatiResult", "solve_dare", "dare_residual", "lq_control",
]
