"""HiGHS dual simplex through scipy, used to cross-check the built-in solver."""

import numpy as np
from scipy.optimize import linprog

from .problem import LinearProgramSpec, LpSolution

_STATUS = {0: "optimal", 2: "infeasible", 3: "unbounded"}


def solve_scipy(spec: LinearProgramSpec) -> LpSolution:
    n = spec.n_vars
    bounds = [(None if np.isinf(lo) else lo, None if np.isinf(up) else up)
              for lo, up in zip(spec.lower, spec.upper)]
    res = linprog(
        spec.objective,
        A_ub=-spec.G if spec.n_ineq else None,
        b_ub=-spec.h if spec.n_ineq else None,
        A_eq=spec.E if spec.n_eq else None,
        b_eq=spec.f if spec.n_eq else None,
        bounds=bounds,
        method="highs-ds",
    )
    status = _STATUS.get(res.status)
    if status is None:
        raise RuntimeError(f"HiGHS failed: {res.message}")
    if status != "optimal":
        value = np.inf if status == "infeasible" else -np.inf
        return LpSolution(status, np.full(n, np.nan), value, False, int(res.nit))
    y = -res.ineqlin.marginals if spec.n_ineq else np.zeros(0)
    z = res.eqlin.marginals if spec.n_eq else np.zeros(0)
    return LpSolution("optimal", res.x, float(res.fun), True, int(res.nit),
                      ineq_duals=y, eq_duals=z,
                      lower_duals=res.lower.marginals, upper_duals=-res.upper.marginals)
