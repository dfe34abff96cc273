"""3-CNF formulas and their reduction to a value-approximation instance.

Literals are signed 1-based variable indices (``-2`` is the negation of
``x2``).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..features import FeatureBasis
from ..mdp import TabularMdp


class CnfError(ValueError):
    pass


@dataclass(frozen=True)
class CnfFormula:
    """Conjunction of 3-literal clauses.

    A clause may mention a variable more than once; with distinct variables
    in every clause, formulas of three or fewer clauses are always
    satisfiable, so small unsatisfiable instances need the repetition.
    """

    n_vars: int
    clauses: tuple

    def __post_init__(self):
        clauses = tuple(tuple(int(l) for l in c) for c in self.clauses)
        for c in clauses:
            if len(c) != 3:
                raise CnfError(f"clause {c} does not have exactly 3 literals")
            bad = [l for l in c if l == 0 or abs(l) > self.n_vars]
            if bad:
                raise CnfError(f"clause {c} has literals outside 1..{self.n_vars}: {bad}")
        if not clauses:
            raise CnfError("formula has no clauses")
        object.__setattr__(self, "clauses", clauses)

    @property
    def n_clauses(self) -> int:
        return len(self.clauses)

    def evaluate(self, assignment) -> bool:
        """``assignment[k]`` is the truth value of variable ``k + 1``."""
        return all(any(assignment[abs(l) - 1] == (l > 0) for l in c) for c in self.clauses)

    def satisfying_assignment(self):
        for bits in itertools.product((False, True), repeat=self.n_vars):
            if self.evaluate(bits):
                return bits
        return None

    def is_satisfiable(self) -> bool:
        return self.satisfying_assignment() is not None


def parse_dimacs(text: str) -> CnfFormula:
    n_vars, lits = None, []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("c") or line.startswith("%"):
            continue
        if line.startswith("p"):
            parts = line.split()
            if len(parts) != 4 or parts[1] != "cnf":
                raise CnfError(f"bad problem line {line!r}")
            n_vars = int(parts[2])
            continue
        lits.extend(int(t) for t in line.split())
    if n_vars is None:
        raise CnfError("missing 'p cnf' line")
    clauses, cur = [], []
    for lit in lits:
        if lit == 0:
            clauses.append(tuple(cur))
            cur = []
        else:
            cur.append(lit)
    if cur:
        raise CnfError("last clause is not terminated by 0")
    return CnfFormula(n_vars, tuple(clauses))


def dump_dimacs(formula: CnfFormula) -> str:
    lines = [f"p cnf {formula.n_vars} {formula.n_clauses}"]
    lines += [" ".join(str(l) for l in c) + " 0" for c in formula.clauses]
    return "\n".join(lines) + "\n"


def load_dimacs(path) -> CnfFormula:
    return parse_dimacs(Path(path).read_text())


def random_cnf(n_vars: int, n_clauses: int, seed=0, distinct: bool = True) -> CnfFormula:
    """Uniform random 3-CNF; ``distinct`` keeps the three variables of a clause different."""
    if distinct and n_vars < 3:
        raise CnfError("distinct-variable clauses need at least 3 variables")
    rng = np.random.default_rng(seed)
    clauses = []
    for _ in range(n_clauses):
        var = rng.choice(n_vars, size=3, replace=not distinct) + 1
        clauses.append(tuple(int(v) if rng.random() < 0.5 else -int(v) for v in var))
    return CnfFormula(n_vars, tuple(clauses))


def _decode(code: int) -> int:
    return (code // 2 + 1) * (-1 if code % 2 else 1)


def enumerate_formulas(max_clauses: int = 3, max_vars: int = 4):
    """Every 3-CNF on at most ``max_vars`` variables with 1..``max_clauses`` clauses, up to symmetry.

    Formulas are identified when a renaming of variables, a flip of
    polarities, or a reordering of clauses or literals maps one onto the
    other.  Each class appears once, relabelled onto variables ``1..j``.
    """
    n_lit = 2 * max_vars
    pool = list(itertools.combinations_with_replacement(range(n_lit), 3))
    index = {c: i for i, c in enumerate(pool)}
    syms = []
    for perm in itertools.permutations(range(max_vars)):
        for flips in itertools.product((0, 1), repeat=max_vars):
            syms.append([2 * perm[c // 2] + (c % 2 ^ flips[c // 2]) for c in range(n_lit)])
    cmap = np.array([[index[tuple(sorted(s[c] for c in clause))] for clause in pool] for s in syms])

    def canonical(ids):
        images = np.sort(cmap[:, list(ids)], axis=1)
        return tuple(images[np.lexsort(images.T[::-1])[0]].tolist())

    layers = [{canonical([i]) for i in range(len(pool))}]
    for _ in range(max_clauses - 1):
        layers.append({canonical(f + (i,)) for f in layers[-1] for i in range(len(pool))})
    out = []
    for layer in layers:
        for key in sorted(layer):
            clauses = [tuple(_decode(c) for c in pool[i]) for i in key]
            used = sorted({abs(l) for c in clauses for l in c})
            relabel = {v: k + 1 for k, v in enumerate(used)}
            clauses = tuple(tuple((1 if l > 0 else -1) * relabel[abs(l)] for l in c) for c in clauses)
            out.append(CnfFormula(len(used), clauses))
    return out


def sat_to_mdp(formula: CnfFormula, gamma: float = 0.95, with_constant: bool = False):
    """Reduction instance ``(mdp, basis)``.

    States: one per clause, then three per clause for its literal
    occurrences, then the bound state (and the extra anchor state when
    ``with_constant``).  Clause states pick a literal with three actions;
    every other state has one action, repeated three times.  Features: one
    per variable (+1 or -1 on the literal states), the clause indicator
    that is also 1 on the bound state, and an all-ones column when
    ``with_constant``.
    """
    n_c = formula.n_clauses
    bound = 4 * n_c
    anchor = bound + 1
    n = bound + 1 + (1 if with_constant else 0)
    lit_state = lambda i, j: n_c + 3 * i + j  # noqa: E731

    P = np.zeros((3, n, n))
    R = np.zeros((n, 3))
    for i, clause in enumerate(formula.clauses):
        for j in range(3):
            P[j, i, lit_state(i, j)] = 1.0
            R[i, j] = 1.0 - gamma
            P[:, lit_state(i, j), lit_state(i, j)] = 1.0
            R[lit_state(i, j), :] = -(1.0 - gamma)
    P[:, bound, bound] = 1.0
    # makes v(bound) = 2 - gamma an exact fixed point
    R[bound, :] = (1.0 - gamma) * (2.0 - gamma)
    if with_constant:
        P[:, anchor, anchor] = 1.0
        R[anchor, :] = -gamma / 2.0

    phi = np.zeros((n, formula.n_vars + 1))
    for i, clause in enumerate(formula.clauses):
        phi[i, -1] = 1.0
        for j, lit in enumerate(clause):
            phi[lit_state(i, j), abs(lit) - 1] = 1.0 if lit > 0 else -1.0
    phi[bound, -1] = 1.0
    used = np.flatnonzero(phi.any(axis=0))
    if used.size < phi.shape[1]:
        raise CnfError("every variable must occur in the formula")
    if with_constant:
        phi = np.hstack([np.ones((n, 1)), phi])
    return TabularMdp.from_arrays(P, R, gamma), FeatureBasis(phi)


def truth_assignment_coeffs(formula: CnfFormula, assignment, gamma: float, with_constant: bool = False):
    """Coefficients ``y_k = +-gamma`` and ``2 - gamma`` on the clause feature."""
    y = np.array([gamma if t else -gamma for t in assignment] + [2.0 - gamma])
    return np.concatenate([[0.0], y]) if with_constant else y
