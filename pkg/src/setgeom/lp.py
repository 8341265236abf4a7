import numpy as np
from scipy.optimize import linprog

OPTIMAL = 0
INFEASIBLE = 2
UNBOUNDED = 3


def solve_lp(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, bounds=(None, None)):
    """Minimize ``c @ x`` with HiGHS. Returns (status, x, value)."""
    c = np.asarray(c, dtype=float)
    if A_ub is not None and len(A_ub) == 0:
        A_ub, b_ub = None, None
    result = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if result.status == OPTIMAL:
        return OPTIMAL, result.x, float(result.fun)
    if result.status == INFEASIBLE:
        return INFEASIBLE, None, np.inf
    if result.status == UNBOUNDED:
        return UNBOUNDED, None, -np.inf
    # HiGHS occasionally reports "infeasible or unbounded" (status 4); decide with a zero objective.
    probe = linprog(np.zeros_like(c), A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if probe.status == INFEASIBLE:
        return INFEASIBLE, None, np.inf
    return UNBOUNDED, None, -np.inf
