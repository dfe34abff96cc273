"""Exact minima over the representable set for small models.

These enumerate deterministic policies, so they share the oracle's size
limit.
"""

from __future__ import annotations

import itertools

import numpy as np

from ..features import FeatureBasis
from ..linprog import LinearProgramSpec, solve_lp
from ..mdp import TabularMdp
from ._rows import BellmanRows
from .abp import ORACLE_LIMIT, FormulationError


def min_bellman_residual_over_span(mdp: TabularMdp, basis: FeatureBasis) -> tuple:
    """``min_{v in M} ||Lv - v||_inf`` and a minimizer.

    For each deterministic policy the region of ``v`` where it is greedy is a
    polyhedron, on which ``Lv = L_pi v`` and the residual is an LP.
    """
    n, A = mdp.n_states, mdp.n_actions
    if A ** n > ORACLE_LIMIT:
        raise FormulationError("too many policies to enumerate")
    rows = BellmanRows.from_mdp(mdp, basis)
    m = basis.n_features
    # q(s,a) = phi(s) x - lhs(s,a) x + r(s,a)
    qx = rows.phi_state - rows.lhs
    best = (np.inf, None)
    c = np.zeros(m + 1)
    c[-1] = 1.0
    for actions in itertools.product(range(A), repeat=n):
        chosen = np.arange(n) * A + np.array(actions)
        Lp, bp = rows.lhs[chosen], rows.rhs[chosen]
        G = [np.hstack([Lp, np.ones((n, 1))]), np.hstack([-Lp, np.ones((n, 1))])]
        h = [bp, -bp]
        # greedy region: q(s, pi(s)) >= q(s, a)
        own = np.repeat(chosen, A)
        G.append(np.hstack([qx[own] - qx, np.zeros((n * A, 1))]))
        h.append(rows.rhs - rows.rhs[own])
        sol = solve_lp(LinearProgramSpec(c, G=np.vstack(G), h=np.concatenate(h)))
        if sol.optimal and sol.x[-1] < best[0]:
            best = (float(sol.x[-1]), basis.matrix @ sol.x[:m])
    return best


def min_distance_to_optimal_over_span(mdp: TabularMdp, basis: FeatureBasis) -> tuple:
    """``min_{v in M} ||v - v*||_inf`` and a minimizer."""
    phi, vstar = basis.matrix, mdp.optimal_value
    n, m = phi.shape
    one = np.ones((n, 1))
    c = np.zeros(m + 1)
    c[-1] = 1.0
    G = np.vstack([np.hstack([phi, one]), np.hstack([-phi, one])])
    sol = solve_lp(LinearProgramSpec(c, G=G, h=np.concatenate([vstar, -vstar])))
    return float(sol.x[-1]), phi @ sol.x[:m]
