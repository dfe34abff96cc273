"""Approximate bilinear programs over Bellman rows.

Left block: a policy ``pi`` over the included state-action rows with
``B pi = 1``.  Right block: ``lambda`` (one entry per row), the scalar
``lambda'`` where the variant has one, and free feature coefficients ``x``:

    (A Phi) x >= b,    lambda + lambda' w >= (A Phi) x - b,    lambda, lambda' >= 0.

Objectives by variant (``U`` diagonal with ``u_bar(s)`` on row ``(s, a)``):

    robust_linf   pi^T lambda + lambda'                    w = 1
    expected_l1   pi^T lambda + lambda' - (1-gamma) alpha^T Phi x
    weighted_u    pi^T U lambda - alpha^T Phi x            (no lambda')
    hybrid        pi^T U lambda + k lambda'                w = 1 / u_bar
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from ..bilinear import (
    BilinearError,
    BilinearTrace,
    Block,
    BlockSolution,
    SeparableBilinearProgram,
    solve_multistart,
)
from ..features import FeatureBasis, check_assumption_one
from ..linprog import LinearProgramSpec, solve_lp
from ..mdp import FEAS_SLACK, GREEDY_TIE_TOL, Policy, TabularMdp, bellman_residual
from ._rows import BellmanRows

VARIANT_KINDS = ("robust_linf", "expected_l1", "weighted_u", "hybrid")
ORACLE_LIMIT = 4096
KEY_TOL = 1e-9


class FormulationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class UBound:
    """Per-state upper bound on visitation frequencies, used as a diagonal ``U``."""

    per_state: np.ndarray

    def __post_init__(self):
        u = np.array(self.per_state, dtype=float).ravel()
        if np.any(u < 0) or not np.all(np.isfinite(u)):
            raise FormulationError("visitation bound must be finite and nonnegative")
        u.setflags(write=False)
        object.__setattr__(self, "per_state", u)

    @classmethod
    def uniform(cls, n_states: int, discount: float) -> "UBound":
        """``1/(1-gamma)`` everywhere, which bounds any policy's occupancy."""
        return cls(np.full(n_states, 1.0 / (1.0 - discount)))

    def matrix_form(self, n_actions: int) -> np.ndarray:
        return np.diag(np.repeat(self.per_state, n_actions))


@dataclass(frozen=True)
class AbpVariant:
    kind: str = "robust_linf"
    ubound: UBound | None = None
    k: float | None = None

    def __post_init__(self):
        if self.kind not in VARIANT_KINDS:
            raise FormulationError(f"unknown variant {self.kind!r}; choose from {VARIANT_KINDS}")
        if self.kind in ("weighted_u", "hybrid") and self.ubound is None:
            raise FormulationError(f"variant {self.kind} needs a visitation bound")
        if self.kind == "hybrid":
            if self.k is None:
                raise FormulationError("hybrid variant needs k")
            if self.k < 0:
                raise FormulationError("hybrid k must be nonnegative")

    @property
    def has_lambda_prime(self) -> bool:
        return self.kind != "weighted_u"


@dataclass
class AbpSolution:
    variant: AbpVariant
    value: np.ndarray
    coeffs: np.ndarray
    policy: Policy
    lam: np.ndarray
    lambda_prime: float
    objective: float
    residual_linf: float
    trace: BilinearTrace | None = None
    identity_gap: float = 0.0
    combined_value: np.ndarray | None = None
    runs: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return self.trace.iterations if self.trace else 0

    @property
    def converged(self) -> bool:
        return self.trace.converged if self.trace else True

    def to_json(self) -> dict:
        return {
            "variant": self.variant.kind,
            "objective": self.objective,
            "residual_linf": self.residual_linf,
            "coeffs": self.coeffs.tolist(),
            "policy": self.policy.actions.tolist(),
            "iterations": self.iterations,
            "converged": self.converged,
        }


def solution_json(sol: AbpSolution) -> str:
    return json.dumps(sol.to_json())


# --- program data ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class _Terms:
    """Per-row coefficients that distinguish the variants."""

    row_weight: np.ndarray   # diagonal of C (1 or u_bar)
    lp_weight: np.ndarray | None   # multiplier of lambda' in the coupling rows
    lp_cost: float
    x_cost: np.ndarray


def _terms(rows: BellmanRows, variant: AbpVariant, alpha_phi) -> _Terms:
    R, m = rows.n_rows, rows.n_features
    alpha_phi = np.zeros(m) if alpha_phi is None else np.asarray(alpha_phi, dtype=float)
    if variant.kind in ("robust_linf", "expected_l1"):
        x_cost = np.zeros(m) if variant.kind == "robust_linf" else -(1 - rows.discount) * alpha_phi
        return _Terms(np.ones(R), np.ones(R), 1.0, x_cost)
    u = variant.ubound.per_state
    if u.size != rows.n_states:
        raise FormulationError(f"visitation bound has {u.size} entries, expected {rows.n_states}")
    uw = u[rows.state]
    if variant.kind == "weighted_u":
        return _Terms(uw, None, 0.0, -alpha_phi)
    if np.any(uw <= 0):
        raise FormulationError("hybrid variant needs a strictly positive visitation bound")
    if variant.k > rows.n_states * rows.n_actions:
        raise FormulationError(f"hybrid k={variant.k} exceeds the number of state-action pairs")
    return _Terms(uw, 1.0 / uw, float(variant.k), np.zeros(m))


def build_rows_program(rows: BellmanRows, variant: AbpVariant, alpha_phi=None) -> SeparableBilinearProgram:
    """Bilinear program for an arbitrary set of Bellman rows."""
    t = _terms(rows, variant, alpha_phi)
    R, m = rows.n_rows, rows.n_features
    n_lp = 1 if variant.has_lambda_prime else 0
    zeros_lp = np.zeros((R, n_lp))
    # right block: u = lambda, v = [lambda', x]
    A2 = np.vstack([np.zeros((R, R)), np.eye(R)])
    coupling = t.lp_weight[:, None] if n_lp else zeros_lp
    B2 = np.vstack([np.hstack([zeros_lp, rows.lhs]), np.hstack([coupling, -rows.lhs])])
    b2 = np.concatenate([rows.rhs, -rows.rhs])
    right = Block.make(A2, B2, b2, sense=(">=",) * (2 * R),
                       free_v=np.concatenate([np.zeros(n_lp, bool), np.ones(m, bool)]))
    left = Block.make(rows.policy_matrix(), None, np.ones(rows.states.size))
    s2 = np.concatenate([[t.lp_cost] * n_lp, t.x_cost])
    return SeparableBilinearProgram(left, right, np.diag(t.row_weight), np.zeros(0), np.zeros(R),
                                    np.zeros(R), s2)


def _require_assumption_one(basis: FeatureBasis):
    if not check_assumption_one(basis):
        raise FormulationError("constant functions are not representable by the basis")


def build_abp(mdp: TabularMdp, basis: FeatureBasis, variant: AbpVariant) -> SeparableBilinearProgram:
    _require_assumption_one(basis)
    rows = BellmanRows.from_mdp(mdp, basis)
    return build_rows_program(rows, variant, mdp.initial_dist @ basis.matrix)


# --- right block -----------------------------------------------------------


@dataclass
class RightSolution:
    coeffs: np.ndarray
    lam: np.ndarray
    lambda_prime: float
    objective: float


def _deterministic_rows(rows: BellmanRows, pi) -> np.ndarray | None:
    pi = np.asarray(pi, dtype=float)
    if not np.all((pi == 0.0) | (pi == 1.0)):
        return None
    chosen = np.flatnonzero(pi == 1.0)
    if chosen.size != rows.states.size or np.any(rows.state[chosen] != rows.states):
        return None
    return chosen


def _reduced_lp(rows: BellmanRows, variant: AbpVariant, t: _Terms, chosen) -> tuple:
    """Right block for a deterministic policy, keeping only the chosen rows' lambda."""
    L, b = rows.lhs, rows.rhs
    Lp, bp, w = L[chosen], b[chosen], t.row_weight[chosen]
    m, S = rows.n_features, chosen.size
    if variant.kind in ("robust_linf", "expected_l1"):
        spec = LinearProgramSpec(
            np.concatenate([t.x_cost, [1.0]]),
            G=np.block([[L, np.zeros((L.shape[0], 1))], [-Lp, np.ones((S, 1))]]),
            h=np.concatenate([b, -bp]),
            lower=np.concatenate([np.full(m, -np.inf), [0.0]]),
        )
    elif variant.kind == "weighted_u":
        spec = LinearProgramSpec(t.x_cost + w @ Lp, G=L, h=b)
    else:
        spec = LinearProgramSpec(
            np.concatenate([t.x_cost, w, [t.lp_cost]]),
            G=np.block([[L, np.zeros((L.shape[0], S + 1))],
                        [-Lp, np.eye(S), (1.0 / w)[:, None]]]),
            h=np.concatenate([b, -bp]),
            lower=np.concatenate([np.full(m, -np.inf), np.zeros(S + 1)]),
        )
    return spec


def _canonical(rows: BellmanRows, variant: AbpVariant, t: _Terms, x, lambda_prime) -> np.ndarray:
    res = rows.residual(x)
    if variant.has_lambda_prime:
        return np.maximum(res - lambda_prime * t.lp_weight, 0.0)
    return np.maximum(res, 0.0)


def _objective(t: _Terms, pi, lam, lambda_prime, x) -> float:
    return float(pi @ (t.row_weight * lam) + t.lp_cost * lambda_prime + t.x_cost @ x)


def solve_right(rows: BellmanRows, variant: AbpVariant, pi, alpha_phi=None, t: _Terms | None = None) -> RightSolution:
    """Minimize the right block for a fixed policy ``pi`` over the rows."""
    t = t or _terms(rows, variant, alpha_phi)
    pi = np.asarray(pi, dtype=float)
    chosen = _deterministic_rows(rows, pi)
    m = rows.n_features
    if chosen is not None:
        sol = solve_lp(_reduced_lp(rows, variant, t, chosen))
        if not sol.optimal:
            raise BilinearError(f"fixed-policy program is {sol.status}")
        x = sol.x[:m]
        lp = float(sol.x[-1]) if variant.has_lambda_prime else 0.0
        lam = _canonical(rows, variant, t, x, lp)
    else:
        bp = build_rows_program(rows, variant, alpha_phi)
        sol = solve_lp(bp.right.lp(bp.C.T @ pi, bp.s2))
        if not sol.optimal:
            raise BilinearError(f"fixed-policy program is {sol.status}")
        R = rows.n_rows
        lam = sol.x[:R]
        lp = float(sol.x[R]) if variant.has_lambda_prime else 0.0
        x = sol.x[R + (1 if variant.has_lambda_prime else 0):]
    return RightSolution(x, lam, lp, _objective(t, pi, lam, lp, x))


def _right_key(rows, t, sol: RightSolution) -> tuple:
    """Active constraints of the full right block at the point (its vertex identity)."""
    res = rows.residual(sol.coeffs)
    scale = KEY_TOL * (1.0 + np.abs(rows.rhs))
    tight_feas = np.flatnonzero(np.abs(res) <= scale)
    slack = sol.lam + (sol.lambda_prime * t.lp_weight if t.lp_weight is not None else 0.0) - res
    tight_cpl = np.flatnonzero(np.abs(slack) <= scale)
    tight_lam = np.flatnonzero(sol.lam <= KEY_TOL)
    return (tuple(tight_feas), tuple(tight_cpl), tuple(tight_lam), sol.lambda_prime <= KEY_TOL)


# --- left block ------------------------------------------------------------


@dataclass(frozen=True)
class PolicyContext:
    """What :func:`policy_step` needs beyond ``lambda``: the rows and, for greedy mode, ``x``."""

    rows: BellmanRows
    coeffs: np.ndarray | None = None


def _argmin_rows(rows: BellmanRows, weighted_lam) -> np.ndarray:
    sidx = rows.state_index()
    best = np.full(rows.states.size, np.inf)
    np.minimum.at(best, sidx, weighted_lam)
    ok = weighted_lam <= best[sidx] + GREEDY_TIE_TOL * (1.0 + np.abs(best[sidx]))
    out = np.full(rows.states.size, rows.n_rows)
    np.minimum.at(out, sidx[ok], np.flatnonzero(ok))
    return out


def policy_step(lam, lambda_prime, mode: str, context: PolicyContext) -> Policy:
    """Deterministic left-block minimizer.

    ``argmin_lambda`` picks the smallest ``lambda`` per state; ``greedy_value``
    picks the greedy action for ``v = Phi x``.  Ties go to the lowest action.
    The returned policy has one row per state that has rows.
    """
    rows = context.rows
    if mode == "argmin_lambda":
        chosen = _argmin_rows(rows, np.asarray(lam, dtype=float))
    elif mode == "greedy_value":
        if context.coeffs is None:
            raise FormulationError("greedy_value mode needs coefficients")
        chosen = rows.greedy_rows(context.coeffs)
    else:
        raise FormulationError(f"unknown policy step mode {mode!r}")
    return rows.rows_to_policy(chosen)


class _AbpHooks:
    """Block solvers for alternating minimization on an ABP.

    The right block uses the reduced fixed-policy LP and returns canonical
    ``lambda = [residual - lambda' w]_+``; with that choice the greedy policy
    of ``Phi x`` minimizes the left block, which is checked on every step.
    """

    def __init__(self, rows: BellmanRows, variant: AbpVariant, alpha_phi):
        self.rows = rows
        self.variant = variant
        self.alpha_phi = alpha_phi
        self.t = _terms(rows, variant, alpha_phi)

    def right(self, cost_u, left: BlockSolution) -> BlockSolution:
        sol = solve_right(self.rows, self.variant, left.u, self.alpha_phi, self.t)
        v = np.concatenate([[sol.lambda_prime] if self.variant.has_lambda_prime else [], sol.coeffs])
        return BlockSolution(sol.lam, v, _right_key(self.rows, self.t, sol))

    def left(self, cost_u, right: BlockSolution) -> BlockSolution:
        n_lp = 1 if self.variant.has_lambda_prime else 0
        chosen = self.rows.greedy_rows(right.v[n_lp:])
        sidx = self.rows.state_index()
        best = np.full(self.rows.states.size, np.inf)
        np.minimum.at(best, sidx, cost_u)
        if np.any(cost_u[chosen] > best + KEY_TOL * (1.0 + np.abs(best))):
            chosen = _argmin_rows(self.rows, cost_u)
        return BlockSolution(self.rows.flat_policy(chosen), np.zeros(0), tuple(chosen.tolist()))


def random_policy_rows(rows: BellmanRows, rng) -> np.ndarray:
    """Uniformly random deterministic choice of one row per state."""
    sidx = rows.state_index()
    counts = np.bincount(sidx, minlength=rows.states.size)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    return starts + rng.integers(0, counts)


def _residual_linf(rows: BellmanRows, x) -> float:
    res = rows.residual(x)
    per_state = np.full(rows.states.size, np.inf)
    np.minimum.at(per_state, rows.state_index(), res)
    return float(np.max(np.abs(per_state)))


def identity_value(rows: BellmanRows, variant: AbpVariant, chosen, x, alpha_phi=None) -> float:
    """What the objective must equal at a stationary greedy solution."""
    res = rows.residual(x)
    alpha_v = 0.0 if alpha_phi is None else float(np.asarray(alpha_phi) @ x)
    if variant.kind == "robust_linf":
        return _residual_linf(rows, x)
    if variant.kind == "expected_l1":
        return _residual_linf(rows, x) - (1 - rows.discount) * alpha_v
    u = variant.ubound.per_state[rows.state[chosen]]
    if variant.kind == "weighted_u":
        return float(u @ res[chosen]) - alpha_v
    return hybrid_norm(res[chosen], u, min(variant.k, chosen.size))


def solve_abp_rows(
    rows: BellmanRows,
    basis: FeatureBasis,
    variant: AbpVariant,
    n_starts: int = 16,
    seed=0,
    alpha_phi=None,
    max_iters: int = 500,
) -> AbpSolution:
    hooks = _AbpHooks(rows, variant, alpha_phi)
    bp = build_rows_program(rows, variant, alpha_phi)

    def sampler(rng):
        return np.zeros(0), rows.flat_policy(random_policy_rows(rows, rng))

    ms = solve_multistart(bp, n_starts, seed, sampler, max_iters=max_iters,
                          left_solver=hooks.left, right_solver=hooks.right)
    return _assemble(rows, basis, variant, ms.best, alpha_phi, ms.runs)


def _assemble(rows, basis, variant, trace, alpha_phi, runs) -> AbpSolution:
    final = trace.final
    n_lp = 1 if variant.has_lambda_prime else 0
    x = final.right.v[n_lp:]
    lp = float(final.right.v[0]) if n_lp else 0.0
    chosen = np.flatnonzero(final.left.u == 1.0)
    ident = identity_value(rows, variant, chosen, x, alpha_phi)
    return AbpSolution(
        variant, basis.matrix @ x, x, rows.rows_to_policy(chosen), final.right.u, lp,
        trace.objective, _residual_linf(rows, x), trace, abs(trace.objective - ident), runs=runs,
    )


def solve_abp(
    mdp: TabularMdp,
    basis: FeatureBasis,
    variant: AbpVariant,
    n_starts: int = 16,
    seed=0,
    max_iters: int = 500,
) -> AbpSolution:
    """Multistart alternating minimization of the ABP.

    ``combined_value`` is the pointwise minimum of all runs' value functions;
    it stays transitive-feasible (verified, else ``None``).
    """
    _require_assumption_one(basis)
    rows = BellmanRows.from_mdp(mdp, basis)
    alpha_phi = mdp.initial_dist @ basis.matrix
    sol = solve_abp_rows(rows, basis, variant, n_starts, seed, alpha_phi, max_iters)
    n_lp = 1 if variant.has_lambda_prime else 0
    values = [basis.matrix @ tr.final.right.v[n_lp:] for tr in sol.runs]
    vmin = np.min(values, axis=0)
    if np.all(bellman_residual(mdp, vmin) >= -FEAS_SLACK):
        sol.combined_value = vmin
    return sol


def f2_policy_lp(mdp: TabularMdp, basis: FeatureBasis, pol: Policy, variant: AbpVariant):
    """Right block for a fixed policy: ``(value, objective)``."""
    _require_assumption_one(basis)
    rows = BellmanRows.from_mdp(mdp, basis)
    sol = solve_right(rows, variant, pol.flat(), mdp.initial_dist @ basis.matrix)
    return basis.matrix @ sol.coeffs, sol.objective


def f1_policy_lp(mdp: TabularMdp, pol: Policy, v, variant: AbpVariant) -> float:
    """Smallest ``pi^T U lambda (+ c lambda')`` covering the residuals of a fixed ``v``."""
    res = bellman_residual(mdp, v)
    R = res.size
    full = BellmanRows(np.repeat(np.arange(mdp.n_states), mdp.n_actions),
                       np.tile(np.arange(mdp.n_actions), mdp.n_states), np.zeros((R, 1)),
                       np.zeros(R), np.zeros((R, 1)), mdp.n_states, mdp.n_actions, mdp.discount)
    t = _terms(full, variant, None)
    pi = pol.flat()
    if variant.has_lambda_prime:
        c = np.concatenate([pi * t.row_weight, [t.lp_cost]])
        G = np.hstack([np.eye(R), t.lp_weight[:, None]])
    else:
        c, G = pi * t.row_weight, np.eye(R)
    sol = solve_lp(LinearProgramSpec(c, G=G, h=res, lower=np.zeros(c.size)))
    if not sol.optimal:
        raise BilinearError(f"residual program is {sol.status}")
    return sol.objective_value


def abp_exact_oracle(mdp: TabularMdp, basis: FeatureBasis, variant: AbpVariant,
                     require_constant: bool = True) -> AbpSolution:
    """Global ABP optimum by enumerating deterministic policies.

    ``require_constant=False`` skips the representable-constant check for
    instances that are known to be feasible without it.
    """
    if require_constant:
        _require_assumption_one(basis)
    # repeated actions cannot change the optimum, so enumerate distinct rows only
    rows = BellmanRows.from_mdp(mdp, basis).dedupe()
    return exact_rows_oracle(rows, basis, variant, mdp.initial_dist @ basis.matrix)


def exact_rows_oracle(rows: BellmanRows, basis: FeatureBasis, variant: AbpVariant, alpha_phi=None) -> AbpSolution:
    """Enumerate one row per state in lexicographic order; ties keep the earliest choice."""
    sidx = rows.state_index()
    options = [np.flatnonzero(sidx == i) for i in range(rows.states.size)]
    count = math.prod(len(o) for o in options)
    if count > ORACLE_LIMIT:
        raise FormulationError(f"{count} deterministic policies exceed the oracle limit {ORACLE_LIMIT}")
    t = _terms(rows, variant, alpha_phi)
    best = None
    for combo in itertools.product(*options):
        chosen = np.array(combo, dtype=int)
        sol = solve_right(rows, variant, rows.flat_policy(chosen), alpha_phi, t)
        if best is None or sol.objective < best[0].objective - 1e-12:
            best = (sol, chosen)
    sol, chosen = best
    ident = identity_value(rows, variant, chosen, sol.coeffs, alpha_phi)
    return AbpSolution(
        variant, basis.matrix @ sol.coeffs, sol.coeffs, rows.rows_to_policy(chosen), sol.lam,
        sol.lambda_prime, sol.objective, _residual_linf(rows, sol.coeffs), None,
        abs(sol.objective - ident),
    )


def hybrid_norm(x, c, k: float) -> float:
    """``c``-weighted sum of the ``k`` largest ``|x|``; a fractional ``k`` counts the next entry partially."""
    x = np.abs(np.asarray(x, dtype=float))
    c = np.asarray(c, dtype=float) * np.ones_like(x)
    if np.any(c < 0):
        raise ValueError("weights must be nonnegative")
    if not 0 <= k <= x.size:
        raise ValueError(f"k={k} outside [0, {x.size}]")
    vals = np.sort(c * x)[::-1]
    whole = int(math.floor(k))
    total = float(vals[:whole].sum())
    if whole < x.size:
        total += (k - whole) * float(vals[whole])
    return total
