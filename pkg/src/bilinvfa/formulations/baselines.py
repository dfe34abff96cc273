"""ALP, approximate policy iteration variants, and residual utilities."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ..features import FeatureBasis
from ..linprog import LinearProgramSpec, LpError, LpSolution, solve_lp
from ..mdp import Policy, TabularMdp, bellman_backup, greedy_policy, is_transitive_feasible
from ._rows import BellmanRows
from .abp import FormulationError, _require_assumption_one, _residual_linf, random_policy_rows

API_INNERS = ("l2", "linf", "oapi")


def alp_rows(rows: BellmanRows, weights, lower=None, upper=None) -> LpSolution:
    """``min weights^T x  s.t.  lhs x >= rhs``; may be unbounded on partial rows.

    Optional coefficient bounds regularize the sampled case.
    """
    return solve_lp(LinearProgramSpec(np.asarray(weights, dtype=float), G=rows.lhs, h=rows.rhs,
                                      lower=lower, upper=upper))


def solve_alp(mdp: TabularMdp, basis: FeatureBasis, c_obj=None) -> np.ndarray:
    """Approximate LP; ``c_obj`` defaults to the uniform distribution."""
    _require_assumption_one(basis)
    c = np.full(mdp.n_states, 1.0 / mdp.n_states) if c_obj is None else np.asarray(c_obj, dtype=float)
    if c.shape != (mdp.n_states,) or np.any(c < 0) or abs(c.sum() - 1.0) > 1e-9:
        raise FormulationError("ALP weights must be a distribution over states")
    sol = alp_rows(BellmanRows.from_mdp(mdp, basis), c @ basis.matrix)
    if not sol.optimal:
        # every Bellman row present and 1 representable: a bounded LP
        raise LpError(f"full approximate LP reported {sol.status}")
    return basis.matrix @ sol.x


# --- fixed-policy residual programs ------------------------------------------


def _phi_rows(rows: BellmanRows, chosen, lower_bound: str):
    """Program over ``[x, phi]`` bounding the chosen rows' residual by ``phi``.

    ``lower_bound`` sets the lower side: ``"symmetric"`` (``-phi``),
    ``"policy"`` (0 on the chosen rows) or ``"all"`` (0 on every row).
    """
    L, b = rows.lhs, rows.rhs
    Lp, bp = L[chosen], b[chosen]
    S, m = chosen.size, rows.n_features
    upper = np.hstack([-Lp, np.ones((S, 1))])
    if lower_bound == "symmetric":
        low, low_h = np.hstack([Lp, np.ones((S, 1))]), bp
    elif lower_bound == "policy":
        low, low_h = np.hstack([Lp, np.zeros((S, 1))]), bp
    elif lower_bound == "all":
        low, low_h = np.hstack([L, np.zeros((L.shape[0], 1))]), b
    else:
        raise ValueError(lower_bound)
    c = np.zeros(m + 1)
    c[-1] = 1.0
    sol = solve_lp(LinearProgramSpec(c, G=np.vstack([low, upper]), h=np.concatenate([low_h, -bp])))
    if not sol.optimal:
        raise LpError(f"residual program is {sol.status}")
    return sol.x[:m], float(sol.x[-1])


def _policy_chosen(mdp: TabularMdp, pol: Policy) -> np.ndarray:
    if not pol.deterministic:
        raise FormulationError("fixed-policy residual programs need a deterministic policy")
    return np.arange(mdp.n_states) * mdp.n_actions + pol.actions


def linf_residual_lp(mdp: TabularMdp, basis: FeatureBasis, pol: Policy, transitive: bool = False):
    """``min_{v in M} ||(I - gamma P_pi) v - r_pi||_inf``, optionally with the residual kept >= 0.

    Returns ``(v, phi)``.
    """
    rows = BellmanRows.from_mdp(mdp, basis)
    x, phi = _phi_rows(rows, _policy_chosen(mdp, pol), "policy" if transitive else "symmetric")
    return basis.matrix @ x, phi


def oapi_step_lp(mdp: TabularMdp, basis: FeatureBasis, pol: Policy):
    """Smallest upper residual bound for ``pi`` over all transitive-feasible representable ``v``."""
    rows = BellmanRows.from_mdp(mdp, basis)
    x, phi = _phi_rows(rows, _policy_chosen(mdp, pol), "all")
    return basis.matrix @ x, phi


def shift_halve(mdp: TabularMdp, v) -> np.ndarray:
    """Shift a transitive-feasible ``v`` down so its Bellman residual halves."""
    v = np.asarray(v, dtype=float)
    if not is_transitive_feasible(mdp, v):
        raise FormulationError("value function is not transitive-feasible")
    err = float(np.max(np.abs(bellman_backup(mdp, v) - v)))
    return v - 0.5 * err / (1.0 - mdp.discount)


# --- approximate policy iteration --------------------------------------------


@dataclass
class ApiResult:
    value: np.ndarray
    coeffs: np.ndarray
    policy: Policy
    trace: list = field(default_factory=list)
    converged: bool = False
    iterations: int = 0


def _l2_step(rows: BellmanRows, chosen):
    Lp, bp = rows.lhs[chosen], rows.rhs[chosen]
    x, _, rank, _ = np.linalg.lstsq(Lp, bp, rcond=None)
    if rank < Lp.shape[1]:
        warnings.warn(f"L2 policy evaluation is rank deficient ({rank} < {Lp.shape[1]}); "
                      "using the minimum-norm solution", RuntimeWarning, stacklevel=3)
    return x, float(np.linalg.norm(Lp @ x - bp))


def api_rows(
    rows: BellmanRows,
    basis: FeatureBasis,
    inner: str,
    max_iters: int = 50,
    seed=0,
    init_rows=None,
) -> ApiResult:
    """Approximate policy iteration over a set of Bellman rows.

    ``inner`` selects the policy evaluation: least-squares residual (``l2``),
    minimal L-infinity residual (``linf``), or the optimistic program that
    keeps every row feasible (``oapi``).  Stops when the greedy policy
    repeats the previous one (converged) or revisits an older one, or after
    ``max_iters`` evaluations.
    """
    if inner not in API_INNERS:
        raise FormulationError(f"unknown API inner step {inner!r}; choose from {API_INNERS}")
    rng = np.random.default_rng(seed)
    chosen = np.asarray(init_rows) if init_rows is not None else random_policy_rows(rows, rng)
    seen = {tuple(chosen.tolist())}
    result = ApiResult(None, None, None)
    for it in range(1, max_iters + 1):
        if inner == "l2":
            x, obj = _l2_step(rows, chosen)
        else:
            x, obj = _phi_rows(rows, chosen, "symmetric" if inner == "linf" else "all")
        nxt = rows.greedy_rows(x)
        result.trace.append({
            "iteration": it, "objective": obj, "residual_linf": _residual_linf(rows, x),
            "policy": rows.action[chosen].tolist(),
        })
        result.coeffs, result.iterations = x, it
        if np.array_equal(nxt, chosen):
            result.converged = True
            break
        key = tuple(nxt.tolist())
        if key in seen:
            break
        seen.add(key)
        chosen = nxt
    result.value = basis.matrix @ result.coeffs
    result.policy = rows.rows_to_policy(rows.greedy_rows(result.coeffs))
    return result


def api(
    mdp: TabularMdp,
    basis: FeatureBasis,
    inner: str,
    max_iters: int = 50,
    seed=0,
    init_policy: Policy | None = None,
) -> ApiResult:
    rows = BellmanRows.from_mdp(mdp, basis)
    init = None if init_policy is None else _policy_chosen(mdp, init_policy)
    res = api_rows(rows, basis, inner, max_iters, seed, init)
    res.policy = greedy_policy(mdp, res.value)
    return res
