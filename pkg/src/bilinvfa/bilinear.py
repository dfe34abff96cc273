"""Separable bilinear programs and alternating block minimization.

A program has a left block ``(w, x)`` and a right block ``(y, z)`` with
independent linear constraints and the objective

    s1^T w + r1^T x + x^T C y + r2^T y + s2^T z.

Each block is ``A x + B w (=|>=) b`` with per-variable sign (nonnegative or
free).  With one block fixed the other is an LP, which is what the
alternating solver exploits.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .linprog import LinearProgramSpec, solve_lp

FEAS_TOL = 1e-8
MONOTONE_TOL = 1e-9
#: a block re-solve that loses to the incumbent by less than this is LP round-off
ROUNDOFF_TOL = 1e-6


class BilinearError(RuntimeError):
    pass


class InfeasibleStartError(BilinearError, ValueError):
    pass


def _arr(a, shape=None):
    a = np.array(a, dtype=float)
    if shape is not None:
        a = a.reshape(shape)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Block:
    """Linear constraints ``A u + B v (sense) b`` over a block ``(u, v)``.

    ``u`` is the block variable that enters the bilinear term; ``v`` does not.
    ``sense`` holds ``"="`` or ``">="`` per row.
    """

    A: np.ndarray
    B: np.ndarray
    b: np.ndarray
    sense: tuple
    free_u: np.ndarray
    free_v: np.ndarray

    @classmethod
    def make(cls, A, B, b, sense=None, free_u=None, free_v=None):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float).ravel()
        rows = b.size
        if A.size == 0:
            A = np.zeros((rows, A.shape[1] if A.ndim == 2 else 0))
        B = np.zeros((rows, 0)) if B is None else np.asarray(B, dtype=float).reshape(rows, -1)
        if A.shape[0] != rows:
            raise ValueError(f"block matrix A has {A.shape[0]} rows, b has {rows}")
        sense = tuple(sense) if sense is not None else ("=",) * rows
        if len(sense) != rows or any(s not in ("=", ">=") for s in sense):
            raise ValueError("sense must list '=' or '>=' for every row")
        nu, nv = A.shape[1], B.shape[1]
        free_u = np.zeros(nu, bool) if free_u is None else np.asarray(free_u, bool).reshape(nu)
        free_v = np.zeros(nv, bool) if free_v is None else np.asarray(free_v, bool).reshape(nv)
        return cls(_arr(A), _arr(B), _arr(b), sense, free_u, free_v)

    @property
    def n_u(self) -> int:
        return self.A.shape[1]

    @property
    def n_v(self) -> int:
        return self.B.shape[1]

    def lp(self, cost_u, cost_v) -> LinearProgramSpec:
        M = np.hstack([self.A, self.B])
        eq = np.array([s == "=" for s in self.sense], dtype=bool)
        free = np.concatenate([self.free_u, self.free_v])
        return LinearProgramSpec(
            np.concatenate([cost_u, cost_v]),
            G=M[~eq], h=self.b[~eq], E=M[eq], f=self.b[eq],
            lower=np.where(free, -np.inf, 0.0),
        )

    def violation(self, u, v) -> float:
        lhs = self.A @ u + self.B @ v - self.b
        eq = np.array([s == "=" for s in self.sense], dtype=bool)
        worst = [0.0, float(np.max(np.abs(lhs[eq]), initial=0.0)),
                 float(np.max(-lhs[~eq], initial=0.0))]
        worst.append(float(np.max(-u[~self.free_u], initial=0.0)))
        worst.append(float(np.max(-v[~self.free_v], initial=0.0)))
        return max(worst)


@dataclass(frozen=True, eq=False)
class SeparableBilinearProgram:
    left: Block
    right: Block
    C: np.ndarray
    s1: np.ndarray
    r1: np.ndarray
    r2: np.ndarray
    s2: np.ndarray

    def __post_init__(self):
        C = np.asarray(self.C, dtype=float)
        if C.shape != (self.left.n_u, self.right.n_u):
            raise ValueError(f"C has shape {C.shape}, expected {(self.left.n_u, self.right.n_u)}")
        object.__setattr__(self, "C", _arr(C))
        for name, size in (("s1", self.left.n_v), ("r1", self.left.n_u),
                           ("r2", self.right.n_u), ("s2", self.right.n_v)):
            vec = np.asarray(getattr(self, name), dtype=float).ravel()
            if vec.size != size:
                raise ValueError(f"{name} has length {vec.size}, expected {size}")
            object.__setattr__(self, name, _arr(vec))

    @classmethod
    def normal_form(cls, C, s1, r1, A1, B1, b1, r2, s2, A2, B2, b2):
        """Equality blocks over nonnegative variables."""
        return cls(Block.make(A1, B1, b1), Block.make(A2, B2, b2), C, s1, r1, r2, s2)


def evaluate_objective(bp: SeparableBilinearProgram, w, x, y, z) -> float:
    w, x, y, z = (np.asarray(a, dtype=float) for a in (w, x, y, z))
    for vec, size, name in ((w, bp.left.n_v, "w"), (x, bp.left.n_u, "x"),
                            (y, bp.right.n_u, "y"), (z, bp.right.n_v, "z")):
        if vec.shape != (size,):
            raise ValueError(f"{name} has shape {vec.shape}, expected ({size},)")
    return float(bp.s1 @ w + bp.r1 @ x + x @ bp.C @ y + bp.r2 @ y + bp.s2 @ z)


@dataclass
class BlockSolution:
    """A vertex of one block: bilinear part ``u``, linear part ``v``, and an identity key."""

    u: np.ndarray
    v: np.ndarray
    key: tuple


#: Minimizes a block given the linear cost on its bilinear variables and the
#: other block's current solution (which LP-based solvers ignore).
BlockSolver = Callable[[np.ndarray, BlockSolution], BlockSolution]


def _lp_block_solver(block: Block, cost_v) -> BlockSolver:
    def solve(cost_u, other=None):
        sol = solve_lp(block.lp(cost_u, cost_v))
        if not sol.optimal:
            raise BilinearError(f"block LP is {sol.status}")
        return BlockSolution(sol.x[:block.n_u], sol.x[block.n_u:], sol.active_set)
    return solve


def default_solvers(bp: SeparableBilinearProgram):
    """LP-based ``(left, right)`` block solvers."""
    return _lp_block_solver(bp.left, bp.s1), _lp_block_solver(bp.right, bp.s2)


@dataclass
class Iterate:
    objective: float
    left: BlockSolution
    right: BlockSolution


@dataclass
class BilinearTrace:
    iterates: list = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    stop_reason: str = ""

    @property
    def final(self) -> Iterate:
        return self.iterates[-1]

    @property
    def objective(self) -> float:
        return self.iterates[-1].objective

    def objectives(self) -> np.ndarray:
        return np.array([it.objective for it in self.iterates])

    def to_json(self) -> list:
        return [{"iter": i, "objective": it.objective} for i, it in enumerate(self.iterates)]


def dump_trace(trace: BilinearTrace, path) -> None:
    Path(path).write_text(json.dumps(trace.to_json()))


def solve_alternating(
    bp: SeparableBilinearProgram,
    init_left,
    max_iters: int = 500,
    left_solver: BlockSolver | None = None,
    right_solver: BlockSolver | None = None,
) -> BilinearTrace:
    """Alternate exact block minimizations starting from the left point ``(w, x)``.

    The right block is solved first.  Stops when neither block's vertex
    changes over a round, when a (left, right) vertex pair recurs, or after
    ``max_iters`` rounds (``converged=False``).  Custom block solvers must
    return vertex minimizers; the defaults solve the block LPs.
    """
    w0, x0 = (np.asarray(a, dtype=float) for a in init_left)
    if bp.left.violation(x0, w0) > FEAS_TOL:
        raise InfeasibleStartError("initial left point violates the left block constraints")
    lp_left, lp_right = default_solvers(bp)
    left_solver = left_solver or lp_left
    right_solver = right_solver or lp_right

    left = BlockSolution(x0, w0, ("init",))
    right = None
    trace = BilinearTrace()
    seen = set()
    prev_keys = None
    for it in range(1, max_iters + 1):
        cand = right_solver(bp.r2 + bp.C.T @ left.u, left)
        right = _no_worse(trace, right, cand, evaluate_objective(bp, left.v, left.u, cand.u, cand.v))
        trace.iterates.append(Iterate(evaluate_objective(bp, left.v, left.u, right.u, right.v), left, right))
        cand = left_solver(bp.r1 + bp.C @ right.u, right)
        left = _no_worse(trace, left, cand, evaluate_objective(bp, cand.v, cand.u, right.u, right.v))
        trace.iterates.append(Iterate(evaluate_objective(bp, left.v, left.u, right.u, right.v), left, right))
        trace.iterations = it
        _check_monotone(trace)
        keys = (left.key, right.key)
        if keys == prev_keys:
            trace.converged, trace.stop_reason = True, "stationary"
            return trace
        if keys in seen:
            trace.converged, trace.stop_reason = True, "revisit"
            return trace
        seen.add(keys)
        prev_keys = keys
    trace.stop_reason = "max_iters"
    return trace


def _no_worse(trace: BilinearTrace, incumbent, candidate, objective: float):
    # the blocks are disjoint, so the incumbent stays feasible and is kept
    # when the re-solve only differs from it by solver tolerance
    if incumbent is None or not trace.iterates:
        return candidate
    last = trace.objective
    if last < objective <= last + ROUNDOFF_TOL * (1.0 + abs(last)):
        return incumbent
    return candidate


def _check_monotone(trace: BilinearTrace):
    tail = [it.objective for it in trace.iterates[-3:]]
    for a, b in zip(tail, tail[1:]):
        if b > a + MONOTONE_TOL * (1.0 + abs(a)):
            raise BilinearError(f"objective increased from {a!r} to {b!r}")


@dataclass
class MultistartResult:
    best: BilinearTrace
    runs: list
    combined: object = None


def solve_multistart(
    bp: SeparableBilinearProgram,
    n_starts: int,
    seed,
    init_sampler: Callable[[np.random.Generator], tuple],
    combine: Callable[[list], object] | None = None,
    max_iters: int = 500,
    left_solver: BlockSolver | None = None,
    right_solver: BlockSolver | None = None,
) -> MultistartResult:
    """Best of ``n_starts`` alternating runs from sampled feasible left points.

    ``combine`` receives every run's trace and may build a joint answer
    (for value-function programs, the pointwise minimum).
    """
    if n_starts < 1:
        raise ValueError("n_starts must be >= 1")
    rng = np.random.default_rng(seed)
    runs = [
        solve_alternating(bp, init_sampler(rng), max_iters, left_solver, right_solver)
        for _ in range(n_starts)
    ]
    best = min(runs, key=lambda tr: tr.objective)
    return MultistartResult(best, runs, combine(runs) if combine else None)
