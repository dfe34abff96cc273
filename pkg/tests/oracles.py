"""Independent reference computations for the test suite.

Nothing here imports the solver or formulation code under test: MDP
quantities use plain loops over the ``[a][s][s']`` tensor, LPs are
cross-checked by vertex enumeration or HiGHS, and minima over the span
of a basis by grid search.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import linprog


# --- MDP quantities ----------------------------------------------------------------


def tensors(mdp):
    """``(P[a, s, s'], R[s, a], gamma)`` as dense arrays."""
    return mdp.transition_tensor(), np.asarray(mdp.reward), mdp.discount


def value_iteration(P, R, gamma, tol=1e-13, max_iters=1_000_000):
    n_actions, n_states, _ = P.shape
    v = np.zeros(n_states)
    for _ in range(max_iters):
        new = np.empty(n_states)
        for s in range(n_states):
            new[s] = max(R[s, a] + gamma * sum(P[a, s, t] * v[t] for t in range(n_states))
                         for a in range(n_actions))
        if np.max(np.abs(new - v)) < tol:
            return new
        v = new
    raise RuntimeError("value iteration did not converge")


def policy_value(P, R, gamma, actions):
    """Exact value of a deterministic policy by solving the linear system."""
    n = R.shape[0]
    Ppi = np.array([P[actions[s], s] for s in range(n)])
    rpi = np.array([R[s, actions[s]] for s in range(n)])
    return np.linalg.solve(np.eye(n) - gamma * Ppi, rpi)


def best_policy(P, R, gamma):
    """Exhaustive search: the policy whose value dominates, lexicographically first."""
    n_actions, n_states, _ = P.shape
    best, best_v = None, None
    for actions in itertools.product(range(n_actions), repeat=n_states):
        v = policy_value(P, R, gamma, actions)
        if best_v is None or np.sum(v) > np.sum(best_v) + 1e-12:
            best, best_v = actions, v
    return np.array(best), best_v


def backup(P, R, gamma, v):
    n_actions, n_states, _ = P.shape
    return np.array([max(R[s, a] + gamma * P[a, s] @ v for a in range(n_actions))
                     for s in range(n_states)])


def residual_pairs(P, R, gamma, v):
    """``v(s) - r(s,a) - gamma P(s,a) v`` in s-major order."""
    n_actions, n_states, _ = P.shape
    return np.array([v[s] - R[s, a] - gamma * P[a, s] @ v
                     for s in range(n_states) for a in range(n_actions)])


def residual_matrix(P, gamma, phi):
    """Rows ``phi(s) - gamma P(s,a) phi`` in s-major order."""
    n_actions, n_states, _ = P.shape
    return np.array([phi[s] - gamma * P[a, s] @ phi for s in range(n_states) for a in range(n_actions)])


def occupancy(P, gamma, alpha, actions):
    n = alpha.size
    Ppi = np.array([P[actions[s], s] for s in range(n)])
    return np.linalg.solve(np.eye(n) - gamma * Ppi.T, alpha)


# --- linear programs ---------------------------------------------------------------


def lp_by_vertices(c, G, h, lower=None, upper=None, tol=1e-9):
    """``min c x`` over ``G x >= h`` and bounds, by enumerating every vertex.

    Returns ``(objective, x)`` or ``(None, None)`` when no vertex is feasible.
    Only meaningful for bounded problems.
    """
    n = c.size
    rows, rhs = [np.asarray(G, float)], [np.asarray(h, float)]
    eye = np.eye(n)
    if lower is not None:
        keep = np.isfinite(lower)
        rows.append(eye[keep])
        rhs.append(np.asarray(lower)[keep])
    if upper is not None:
        keep = np.isfinite(upper)
        rows.append(-eye[keep])
        rhs.append(-np.asarray(upper)[keep])
    M, b = np.vstack(rows), np.concatenate(rhs)
    best, best_x = None, None
    for subset in itertools.combinations(range(M.shape[0]), n):
        sub = M[list(subset)]
        if abs(np.linalg.det(sub)) < 1e-10:
            continue
        x = np.linalg.solve(sub, b[list(subset)])
        if np.all(M @ x >= b - tol * (1 + np.abs(b))):
            val = float(c @ x)
            if best is None or val < best:
                best, best_x = val, x
    return best, best_x


def highs(c, G=None, h=None, E=None, f=None, lower=None, upper=None):
    """HiGHS on ``min c x, G x >= h, E x = f``; returns the scipy result."""
    n = len(c)
    lower = np.full(n, -np.inf) if lower is None else np.asarray(lower, float)
    upper = np.full(n, np.inf) if upper is None else np.asarray(upper, float)
    bounds = [(None if not np.isfinite(lo) else lo, None if not np.isfinite(hi) else hi)
              for lo, hi in zip(lower, upper)]
    return linprog(c, A_ub=None if G is None else -np.asarray(G), b_ub=None if h is None else -np.asarray(h),
                   A_eq=E, b_eq=f, bounds=bounds, method="highs")


# --- minima over the span of a basis ------------------------------------------------


def grid(n_features, radius, max_points=1_000_000):
    """Coefficient grid on ``[-radius, radius]^m`` with at most ``max_points`` points."""
    per_axis = int(np.floor(max_points ** (1.0 / n_features)))
    per_axis = max(per_axis - (per_axis + 1) % 2, 3)  # odd, so 0 lies on the grid
    axis = np.linspace(-radius, radius, per_axis)
    step = axis[1] - axis[0]
    mesh = np.stack(np.meshgrid(*([axis] * n_features), indexing="ij"), axis=-1)
    return mesh.reshape(-1, n_features), step


def grid_min_residual(P, R, gamma, phi, radius, max_points=250_000):
    """``min ||Lv - v||_inf`` over the grid, plus the worst-case grid slack."""
    coeffs, step = grid(phi.shape[1], radius, max_points)
    V = coeffs @ phi.T  # (points, states)
    Q = R[None, :, :] + gamma * np.einsum("ast,pt->psa", P, V)
    res = np.max(np.abs(Q.max(axis=2) - V), axis=1)
    # moving to the nearest grid point changes v by at most half a step per feature
    dv = 0.5 * step * np.sum(np.max(np.abs(phi), axis=0))
    return float(res.min()), (1 + gamma) * dv


def grid_min_distance(target, phi, radius, max_points=250_000):
    """``min ||v - target||_inf`` over the grid, plus the grid slack."""
    coeffs, step = grid(phi.shape[1], radius, max_points)
    dist = np.max(np.abs(coeffs @ phi.T - target[None, :]), axis=1)
    dv = 0.5 * step * np.sum(np.max(np.abs(phi), axis=0))
    return float(dist.min()), dv


# --- approximate bilinear program --------------------------------------------------


def robust_abp_by_policies(P, R, gamma, phi):
    """``min over deterministic pi`` of ``min ||L_pi v - v||_inf`` s.t. ``A v >= b``, by HiGHS.

    Independent of the package's LP and formulation code.
    """
    n_actions, n_states, _ = P.shape
    m = phi.shape[1]
    A = residual_matrix(P, gamma, phi)
    b = R.ravel()
    # actions with identical dynamics and reward are interchangeable
    options = []
    for s in range(n_states):
        keep = []
        for a in range(n_actions):
            if not any(np.array_equal(P[a, s], P[k, s]) and R[s, a] == R[s, k] for k in keep):
                keep.append(a)
        options.append(keep)
    best = np.inf
    for actions in itertools.product(*options):
        rows = [s * n_actions + actions[s] for s in range(n_states)]
        # variables (x, t): A x >= b, A_pi x - b_pi <= t
        G = np.vstack([np.hstack([A, np.zeros((A.shape[0], 1))]),
                       np.hstack([-A[rows], np.ones((n_states, 1))])])
        h = np.concatenate([b, -b[rows]])
        c = np.zeros(m + 1)
        c[-1] = 1.0
        res = highs(c, G, h)
        if res.status == 0:
            best = min(best, res.fun)
    return best


def hybrid_norm_by_vertices(x, c, k):
    """``max sum_i c_i |x_i| y_i`` over ``0 <= y <= 1, sum y = k`` by enumerating vertices."""
    w = np.abs(np.asarray(x, float)) * np.asarray(c, float)
    n = w.size
    whole, frac = int(np.floor(k)), k - np.floor(k)
    best = -np.inf
    for ones in itertools.combinations(range(n), whole):
        rest = [i for i in range(n) if i not in ones]
        base = sum(w[i] for i in ones)
        if frac == 0 or not rest:
            best = max(best, base)
        else:
            best = max(best, max(base + frac * w[i] for i in rest))
    return best
