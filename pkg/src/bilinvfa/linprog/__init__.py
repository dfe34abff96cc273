"""Linear programming with vertex optima."""

from .backend import BACKEND
from .problem import (
    IterationLimitError,
    LinearProgramSpec,
    LpDimensionError,
    LpError,
    LpSolution,
    dual_values,
    dump_lp,
    parse_lp,
)
from .simplex import solve_simplex


def solve_lp(spec: LinearProgramSpec, method: str = "simplex", kernel: str | None = None) -> LpSolution:
    """Solve ``spec``; ``method="scipy"`` routes through HiGHS for cross-checks."""
    if method == "simplex":
        return solve_simplex(spec, kernel)
    if method == "scipy":
        from .scipy_adapter import solve_scipy
        return solve_scipy(spec)
    raise ValueError(f"unknown LP method {method!r}")


__all__ = [
    "BACKEND", "IterationLimitError", "LinearProgramSpec", "LpDimensionError", "LpError",
    "LpSolution", "dual_values", "dump_lp", "parse_lp", "solve_lp",
]
