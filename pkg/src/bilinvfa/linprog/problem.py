"""LP data types and the plain-text debug dump."""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np


class LpError(RuntimeError):
    pass


class LpDimensionError(LpError, ValueError):
    pass


class IterationLimitError(LpError):
    """The simplex iteration cap was hit before a terminal status."""


def _matrix(a, n_cols: int, name: str) -> np.ndarray:
    if a is None:
        return np.zeros((0, n_cols))
    a = np.array(a, dtype=float, ndmin=2)
    if a.size == 0:
        return np.zeros((0, n_cols))
    if a.shape[1] != n_cols:
        raise LpDimensionError(f"{name} has {a.shape[1]} columns, expected {n_cols}")
    return a


def _vector(a, n: int, name: str, fill: float = 0.0) -> np.ndarray:
    if a is None:
        return np.full(n, fill)
    a = np.array(a, dtype=float).ravel()
    if a.shape != (n,):
        raise LpDimensionError(f"{name} has length {a.size}, expected {n}")
    return a


@dataclass(frozen=True, eq=False)
class LinearProgramSpec:
    """``min c^T x`` subject to ``G x >= h``, ``E x = f`` and ``lower <= x <= upper``.

    Infinite bounds mean the variable is free on that side; both default to
    free.
    """

    objective: np.ndarray
    G: np.ndarray | None = None
    h: np.ndarray | None = None
    E: np.ndarray | None = None
    f: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        c = np.array(self.objective, dtype=float).ravel()
        n = c.size
        G = _matrix(self.G, n, "G")
        E = _matrix(self.E, n, "E")
        h = _vector(self.h, G.shape[0], "h")
        f = _vector(self.f, E.shape[0], "f")
        lower = _vector(self.lower, n, "lower", -np.inf)
        upper = _vector(self.upper, n, "upper", np.inf)
        if not (np.all(np.isfinite(h)) and np.all(np.isfinite(f))):
            raise LpDimensionError("right-hand sides must be finite")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(G)) and np.all(np.isfinite(E))):
            raise LpDimensionError("objective and constraint matrices must be finite")
        if np.any(lower == np.inf) or np.any(upper == -np.inf):
            raise LpDimensionError("bounds must not exclude every real value")
        for name, value in (("objective", c), ("G", G), ("h", h), ("E", E), ("f", f),
                            ("lower", lower), ("upper", upper)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def n_vars(self) -> int:
        return self.objective.size

    @property
    def n_ineq(self) -> int:
        return self.G.shape[0]

    @property
    def n_eq(self) -> int:
        return self.E.shape[0]

    def violation(self, x) -> float:
        """Largest constraint violation of ``x`` (0 when feasible)."""
        x = np.asarray(x, dtype=float)
        parts = [0.0]
        if self.n_ineq:
            parts.append(np.max(self.h - self.G @ x))
        if self.n_eq:
            parts.append(np.max(np.abs(self.E @ x - self.f)))
        parts.append(np.max(self.lower - x, initial=0.0))
        parts.append(np.max(x - self.upper, initial=0.0))
        return float(max(parts))


@dataclass
class LpSolution:
    status: str
    x: np.ndarray
    objective_value: float
    is_vertex: bool
    iterations: int = 0
    ineq_duals: np.ndarray | None = None
    eq_duals: np.ndarray | None = None
    lower_duals: np.ndarray | None = None
    upper_duals: np.ndarray | None = None
    #: improving direction (unbounded) or Farkas multipliers (infeasible)
    ray: np.ndarray | None = None
    #: indices of tight inequality rows, then ``n_ineq + j`` for tight bounds
    active_set: tuple = field(default=())

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def dual_values(solution: LpSolution) -> np.ndarray:
    """Multipliers ``[y; z]`` for the ``G x >= h`` and ``E x = f`` rows.

    At optimality ``c = G^T y + E^T z + (bound multipliers)`` and the dual
    objective equals the primal one.
    """
    if solution.status != "optimal":
        raise LpError(f"dual values requested for a {solution.status} LP")
    return np.concatenate([solution.ineq_duals, solution.eq_duals])


def _fmt(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def dump_lp(spec: LinearProgramSpec) -> str:
    out = io.StringIO()
    out.write(f"LP {spec.n_vars} {spec.n_ineq} {spec.n_eq}\n")
    out.write(f"min {_fmt(spec.objective)}\n")
    out.write(f"lb {_fmt(spec.lower)}\n")
    out.write(f"ub {_fmt(spec.upper)}\n")
    for row, rhs in zip(spec.G, spec.h):
        out.write(f"ge {_fmt(row)} | {float(rhs)!r}\n")
    for row, rhs in zip(spec.E, spec.f):
        out.write(f"eq {_fmt(row)} | {float(rhs)!r}\n")
    return out.getvalue()


def parse_lp(text: str) -> LinearProgramSpec:
    lines = [ln.split() for ln in text.strip().splitlines() if ln.strip()]
    if not lines or lines[0][0] != "LP":
        raise LpDimensionError("missing LP header")
    n, m_ineq, m_eq = (int(t) for t in lines[0][1:4])

    def nums(tokens):
        return [float(t) for t in tokens]

    c = lb = ub = None
    G, h, E, f = [], [], [], []
    for tokens in lines[1:]:
        tag, rest = tokens[0], tokens[1:]
        if tag == "min":
            c = nums(rest)
        elif tag == "lb":
            lb = nums(rest)
        elif tag == "ub":
            ub = nums(rest)
        elif tag in ("ge", "eq"):
            bar = rest.index("|")
            (G if tag == "ge" else E).append(nums(rest[:bar]))
            (h if tag == "ge" else f).append(float(rest[bar + 1]))
        else:
            raise LpDimensionError(f"unknown line tag {tag!r}")
    if len(G) != m_ineq or len(E) != m_eq or c is None or len(c) != n:
        raise LpDimensionError("LP dump does not match its header")
    return LinearProgramSpec(c, G or None, h or None, E or None, f or None, lb, ub)
