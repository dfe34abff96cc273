"""Bilinear and linear program formulations of value function approximation."""

from ._rows import BellmanRows
from .abp import (
    VARIANT_KINDS,
    AbpSolution,
    AbpVariant,
    FormulationError,
    PolicyContext,
    UBound,
    abp_exact_oracle,
    build_abp,
    build_rows_program,
    exact_rows_oracle,
    f1_policy_lp,
    f2_policy_lp,
    hybrid_norm,
    identity_value,
    policy_step,
    random_policy_rows,
    solution_json,
    solve_abp,
    solve_abp_rows,
    solve_right,
)
from .baselines import (
    API_INNERS,
    ApiResult,
    alp_rows,
    api,
    api_rows,
    linf_residual_lp,
    oapi_step_lp,
    shift_halve,
    solve_alp,
)
from .exact import min_bellman_residual_over_span, min_distance_to_optimal_over_span

__all__ = [name for name in dir() if not name.startswith("_")]
