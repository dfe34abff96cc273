"""Two-phase dense revised simplex.

The primal ``min c^T x, G x >= h, E x = f`` (bounds folded into ``G``, ``x``
free) is solved through its dual in standard form

    max h^T y + f^T z   s.t.   G^T y + E^T z = c,  y >= 0,

whose row count equals the number of primal variables.  Our LPs are tall
(many Bellman rows, few coefficients), so the basis stays small.  At a dual
optimum the simplex multipliers are ``-x`` and the basic columns name ``n``
linearly independent primal rows that are tight at ``x``: a vertex.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend
from .problem import IterationLimitError, LinearProgramSpec, LpError, LpSolution

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-8
OPT_TOL = 1e-9
DEGEN_LIMIT = 50
REFACTOR_EVERY = 64
ACTIVE_TOL = 1e-9
#: relative size of the right-hand-side perturbation that breaks degeneracy
PERTURB = 1e-7
PERTURB_SEED = 20240521


@dataclass
class StandardResult:
    status: str
    basis: np.ndarray
    w: np.ndarray
    multipliers: np.ndarray
    direction: np.ndarray | None
    iterations: int
    redundant: bool


class _Tableau:
    """Mutable basis state shared by both phases."""

    def __init__(self, A, b, basis, kernels, max_iters):
        self.A = A
        self.b = b
        self.basis = basis
        self.kernels = kernels
        self.max_iters = max_iters
        self.is_basic = np.zeros(A.shape[1], dtype=np.uint8)
        self.is_basic[basis] = 1
        self.state = np.zeros(3, dtype=np.int64)
        self.refactor()

    def refactor(self):
        try:
            self.Binv = np.ascontiguousarray(np.linalg.inv(self.A[:, self.basis]))
        except np.linalg.LinAlgError:
            raise LpError("simplex basis became numerically singular") from None
        xB = self.Binv @ self.b
        xB[(xB < 0) & (xB > -FEAS_TOL)] = 0.0
        self.xB = xB

    def run(self, cost, eligible):
        cost = np.ascontiguousarray(cost, dtype=float)
        since_refactor = 0
        while True:
            budget = min(REFACTOR_EVERY, self.max_iters - int(self.state[1]))
            if budget <= 0:
                raise IterationLimitError(f"simplex exceeded {self.max_iters} iterations")
            status, pivots = self.kernels.run_pivots(
                self.A, cost, self.basis, self.is_basic, self.Binv, self.xB, eligible,
                PIVOT_TOL, OPT_TOL, budget, DEGEN_LIMIT, self.state,
            )
            since_refactor += pivots
            if status == self.kernels.PIVOT_LIMIT or since_refactor:
                # confirm every terminal status on a fresh factorization
                self.refactor()
                since_refactor = 0
                if status == self.kernels.PIVOT_LIMIT or pivots:
                    continue
            return status

    def solve_phase(self, cost, eligible, rng):
        """Pivot to optimality on a perturbed right-hand side, then restore it.

        The perturbation ``A_B eta`` (``eta > 0``) keeps the current basis
        feasible while separating degenerate vertices.  Removing it leaves
        a dual feasible basis, repaired by dual simplex pivots.
        """
        b = self.b
        eta = PERTURB * (1.0 + np.abs(self.xB)) * rng.uniform(1.0, 2.0, size=self.xB.size)
        self.b = b + self.A[:, self.basis] @ eta
        self.refactor()
        try:
            status = self.run(cost, eligible)
        finally:
            self.b = b
            self.refactor()
        if status == self.kernels.UNBOUNDED:
            return status
        self.restore(cost, eligible)
        return self.run(cost, eligible)

    def restore(self, cost, eligible):
        """Dual simplex pivots until the basic solution is primal feasible."""
        tol = FEAS_TOL * (1.0 + float(np.max(np.abs(self.b), initial=0.0)))
        cost = np.asarray(cost, dtype=float)
        for done in range(self.max_iters):
            p = int(np.argmin(self.xB))
            if self.xB[p] >= -tol:
                return
            if done and done % REFACTOR_EVERY == 0:
                self.refactor()
                continue
            row = self.Binv[p] @ self.A
            d = cost - self.A.T @ (self.Binv.T @ cost[self.basis])
            cand = np.flatnonzero((eligible != 0) & (self.is_basic == 0) & (row < -PIVOT_TOL))
            if cand.size == 0:
                raise LpError("simplex lost primal feasibility")
            ratios = np.maximum(d[cand], 0.0) / -row[cand]
            near = cand[ratios <= ratios.min() + OPT_TOL]
            q = int(near[np.argmin(row[near])])
            self.pivot(p, q)
            self.state[1] += 1
        raise IterationLimitError(f"simplex exceeded {self.max_iters} iterations")

    def pivot(self, p, q):
        alpha = self.Binv @ self.A[:, q]
        theta = self.xB[p] / alpha[p]
        self.xB -= theta * alpha
        self.xB[p] = theta
        row = self.Binv[p] / alpha[p]
        self.Binv -= np.outer(alpha, row)
        self.Binv[p] = row
        self.is_basic[self.basis[p]] = 0
        self.is_basic[q] = 1
        self.basis[p] = q


def _crash_basis(A):
    """Per row, the lowest positive singleton column, or -1."""
    m = A.shape[0]
    basis = np.full(m, -1, dtype=np.int64)
    nnz = np.count_nonzero(A, axis=0)
    cols = np.flatnonzero(nnz == 1)
    if cols.size:
        rows = np.argmax(np.abs(A[:, cols]), axis=0)
        ok = A[rows, cols] > 0
        rows, cols = rows[ok], cols[ok]
        uniq, first = np.unique(rows, return_index=True)
        basis[uniq] = cols[first]
    return basis


def simplex_standard(A, b, c, max_iters: int, kernels=None) -> StandardResult:
    """``min c^T w  s.t.  A w = b, w >= 0`` by the two-phase method."""
    kernels = kernels or backend.kernels
    A = np.asarray(A, dtype=float)
    m, N = A.shape
    sign = np.where(np.asarray(b) < 0, -1.0, 1.0)
    A = A * sign[:, None]
    b = np.asarray(b, dtype=float) * sign

    basis = _crash_basis(A)
    missing = np.flatnonzero(basis < 0)
    k = missing.size
    art = np.zeros((m, k))
    art[missing, np.arange(k)] = 1.0
    A_full = np.ascontiguousarray(np.hstack([A, art]))
    basis[missing] = N + np.arange(k)
    tab = _Tableau(A_full, b, basis, kernels, max_iters)
    rng = np.random.default_rng(PERTURB_SEED)

    redundant = False
    if k:
        cost1 = np.zeros(N + k)
        cost1[N:] = 1.0
        tab.solve_phase(cost1, np.ones(N + k, dtype=np.uint8), rng)
        infeas = float(cost1[tab.basis] @ tab.xB)
        if infeas > FEAS_TOL * max(1.0, float(np.max(np.abs(b), initial=0.0))):
            sigma = tab.Binv.T @ cost1[tab.basis]
            return StandardResult("infeasible", tab.basis.copy(), np.zeros(N), sign * sigma,
                                  None, int(tab.state[1]), False)
        # drive zero-level artificials out of the basis
        for p in np.flatnonzero(tab.basis >= N):
            row = tab.Binv[p] @ A_full[:, :N]
            row[tab.is_basic[:N] == 1] = 0.0
            j = int(np.argmax(np.abs(row)))
            if abs(row[j]) > PIVOT_TOL:
                tab.pivot(p, j)
            else:
                redundant = True
        tab.refactor()

    cost2 = np.concatenate([np.asarray(c, dtype=float), np.zeros(k)])
    eligible = np.zeros(N + k, dtype=np.uint8)
    eligible[:N] = 1
    status = tab.solve_phase(cost2, eligible, rng)
    multipliers = sign * (tab.Binv.T @ cost2[tab.basis])
    w = np.zeros(N + k)
    w[tab.basis] = tab.xB
    if status == kernels.UNBOUNDED:
        q = int(tab.state[2])
        d = np.zeros(N + k)
        d[tab.basis] = -(tab.Binv @ A_full[:, q])
        d[q] = 1.0
        return StandardResult("unbounded", tab.basis.copy(), w[:N], multipliers, d[:N],
                              int(tab.state[1]), redundant)
    return StandardResult("optimal", tab.basis.copy(), w[:N], multipliers, None,
                          int(tab.state[1]), redundant)


def _safe_inv_scale(mat, axis):
    peak = np.max(np.abs(mat), axis=axis, initial=0.0)
    return np.where(peak > 0, 1.0 / np.where(peak > 0, peak, 1.0), 1.0)


def _active_set(spec: LinearProgramSpec, x) -> tuple:
    active = []
    if spec.n_ineq:
        slack = spec.G @ x - spec.h
        tol = ACTIVE_TOL * (1.0 + np.abs(spec.h))
        active.extend(np.flatnonzero(np.abs(slack) <= tol).tolist())
    lo = np.isfinite(spec.lower) & (np.abs(x - spec.lower) <= ACTIVE_TOL * (1.0 + np.abs(spec.lower)))
    up = np.isfinite(spec.upper) & (np.abs(x - spec.upper) <= ACTIVE_TOL * (1.0 + np.abs(spec.upper)))
    active.extend((spec.n_ineq + np.flatnonzero(lo)).tolist())
    active.extend((spec.n_ineq + spec.n_vars + np.flatnonzero(up)).tolist())
    return tuple(active)


def _trivial(spec: LinearProgramSpec) -> LpSolution:
    ok = np.all(spec.h <= FEAS_TOL) and np.all(np.abs(spec.f) <= FEAS_TOL)
    empty = np.zeros(0)
    if not ok:
        return LpSolution("infeasible", empty, np.inf, False)
    return LpSolution("optimal", empty, 0.0, True, 0, np.zeros(spec.n_ineq), np.zeros(spec.n_eq),
                      empty, empty)


def solve_simplex(spec: LinearProgramSpec, kernel: str | None = None) -> LpSolution:
    n = spec.n_vars
    if n == 0:
        return _trivial(spec)
    kernels = backend.load(kernel) if kernel else backend.kernels

    lo_idx = np.flatnonzero(np.isfinite(spec.lower))
    up_idx = np.flatnonzero(np.isfinite(spec.upper))
    eye = np.eye(n)
    G = np.vstack([spec.G, eye[lo_idx], -eye[up_idx]])
    h = np.concatenate([spec.h, spec.lower[lo_idx], -spec.upper[up_idx]])
    E, f = spec.E, spec.f
    mG, mE = G.shape[0], E.shape[0]

    col = _safe_inv_scale(np.vstack([G, E]), axis=0)
    Gs, Es = G * col, E * col
    gr = _safe_inv_scale(Gs, axis=1)
    er = _safe_inv_scale(Es, axis=1)
    Gs, hs = Gs * gr[:, None], h * gr
    Es, fs = Es * er[:, None], f * er

    A_D = np.hstack([Gs.T, Es.T, -Es.T])
    c_D = -np.concatenate([hs, fs, -fs])
    cap = 50 * (mG + mE + n)
    res = simplex_standard(A_D, spec.objective * col, c_D, cap, kernels)

    if res.status == "unbounded":
        return _infeasible(res, gr, er, mG, mE, spec)
    if res.status == "infeasible":
        # the dual has no feasible point: the primal is unbounded or infeasible
        aux = _feasibility_program(spec)
        found = solve_simplex(aux, kernel)
        if not found.optimal:
            raise LpError("feasibility subproblem did not reach an optimum")
        iters = res.iterations + found.iterations
        viol = found.x[-1]
        if viol > FEAS_TOL * max(1.0, float(np.max(np.abs(aux.h), initial=0.0))):
            mG0 = spec.n_ineq
            y = found.ineq_duals
            ray = np.concatenate([
                y[:mG0], found.lower_duals[lo_idx], found.upper_duals[up_idx],
                y[mG0:mG0 + mE] - y[mG0 + mE:],
            ])
            ray /= np.max(np.abs(ray))
            return LpSolution("infeasible", np.full(n, np.nan), np.inf, False, iters, ray=ray)
        ray = -res.multipliers * col
        ray /= np.max(np.abs(ray))
        return LpSolution("unbounded", found.x[:n], -np.inf, False, iters, ray=ray)

    y_all = res.w[:mG] * gr
    z = (res.w[mG:mG + mE] - res.w[mG + mE:]) * er
    x = -res.multipliers * col
    is_vertex = not res.redundant
    if is_vertex:
        polished = _polish(res.basis, G, h, E, f, mG, mE)
        if polished is not None and spec.violation(polished) <= max(spec.violation(x), FEAS_TOL):
            x = polished
    m0 = spec.n_ineq
    lower_duals = np.zeros(n)
    upper_duals = np.zeros(n)
    lower_duals[lo_idx] = y_all[m0:m0 + lo_idx.size]
    upper_duals[up_idx] = y_all[m0 + lo_idx.size:]
    return LpSolution(
        "optimal", x, float(spec.objective @ x), is_vertex, res.iterations,
        ineq_duals=y_all[:m0], eq_duals=z, lower_duals=lower_duals, upper_duals=upper_duals,
        active_set=_active_set(spec, x),
    )


def _feasibility_program(spec: LinearProgramSpec) -> LinearProgramSpec:
    """``min s`` with every row relaxed by ``s >= 0``; always feasible and bounded."""
    n = spec.n_vars
    G = np.vstack([spec.G, spec.E, -spec.E])
    h = np.concatenate([spec.h, spec.f, -spec.f])
    c = np.zeros(n + 1)
    c[-1] = 1.0
    return LinearProgramSpec(
        c, G=np.hstack([G, np.ones((G.shape[0], 1))]), h=h,
        lower=np.append(spec.lower, 0.0), upper=np.append(spec.upper, np.inf),
    )


def _polish(basis, G, h, E, f, mG, mE):
    """Re-solve the tight primal rows named by the basis in unscaled data."""
    rows, rhs = [], []
    for j in basis:
        if j < mG:
            rows.append(G[j])
            rhs.append(h[j])
        else:
            i = (j - mG) % mE
            rows.append(E[i])
            rhs.append(f[i])
    try:
        return np.linalg.solve(np.array(rows), np.array(rhs))
    except np.linalg.LinAlgError:
        return None


def _infeasible(res, gr, er, mG, mE, spec) -> LpSolution:
    d = res.direction
    y = d[:mG] * gr
    z = (d[mG:mG + mE] - d[mG + mE:]) * er
    ray = np.concatenate([y, z])
    ray /= np.max(np.abs(ray))
    return LpSolution("infeasible", np.full(spec.n_vars, np.nan), np.inf, False,
                      res.iterations, ray=ray)
