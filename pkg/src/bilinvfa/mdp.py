"""Exact tabular MDP machinery.

State-action pairs are flattened s-major everywhere: pair ``(s, a)`` lives at
index ``s * n_actions + a``. This applies to the constraint matrix ``A``, the
policy matrix ``B``, flattened policies, residual vectors and lambda vectors.

Transitions are stored as a single ``(n_states * n_actions, n_states)`` matrix
in that row order. It may be a dense ``ndarray`` or a ``scipy.sparse`` matrix;
the large mountain-car ground model relies on the sparse form.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

#: Additive slack used by every feasibility predicate.
FEAS_SLACK = 1e-9
#: Two actions whose backups differ by less than this are treated as tied.
GREEDY_TIE_TOL = 1e-10
#: Residual tolerance for exact linear solves.
SOLVE_TOL = 1e-9


class InvalidMdpError(ValueError):
    """Raised when MDP data violates an invariant; one line per problem."""


class NumericalError(RuntimeError):
    pass


def _as_readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TabularMdp:
    """Finite discounted MDP.

    ``transition`` is the stacked s-major matrix ``P[(s, a), s']``; use
    :meth:`from_arrays` to build from the ``[a][s][s']`` layout.
    """

    transition: np.ndarray | sp.csr_array
    reward: np.ndarray
    discount: float
    initial_dist: np.ndarray

    def __post_init__(self):
        reward = _as_readonly(self.reward)
        if reward.ndim != 2:
            raise InvalidMdpError(f"reward must be 2-D (n_states, n_actions), got shape {reward.shape}")
        n, m = reward.shape
        P = self.transition
        if sp.issparse(P):
            P = sp.csr_array(P, dtype=float)
        else:
            P = _as_readonly(P)
        alpha = _as_readonly(self.initial_dist)
        object.__setattr__(self, "reward", reward)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "initial_dist", alpha)
        object.__setattr__(self, "discount", float(self.discount))

        problems = []
        if P.shape != (n * m, n):
            problems.append(f"transition has shape {P.shape}, expected {(n * m, n)}")
        else:
            data = P.data if sp.issparse(P) else P
            if np.any(data < 0):
                problems.append("transition has negative entries")
            rows = np.asarray(P.sum(axis=1)).ravel()
            bad = np.flatnonzero(np.abs(rows - 1.0) > 1e-12)
            for k in bad[:10]:
                s, a = divmod(int(k), m)
                problems.append(f"transition row (s={s}, a={a}) sums to {rows[k]!r}")
        if not np.all(np.isfinite(reward)):
            problems.append("reward has non-finite entries")
        if not 0.0 <= self.discount < 1.0:
            problems.append(f"discount {self.discount} outside [0, 1)")
        if alpha.shape != (n,):
            problems.append(f"initial_dist has shape {alpha.shape}, expected {(n,)}")
        else:
            if np.any(alpha < 0):
                problems.append("initial_dist has negative entries")
            if abs(alpha.sum() - 1.0) > 1e-12:
                problems.append(f"initial_dist sums to {alpha.sum()!r}")
        if problems:
            raise InvalidMdpError("invalid MDP:\n" + "\n".join(f"  - {p}" for p in problems))

    @classmethod
    def from_arrays(cls, transition, reward, discount, initial_dist=None) -> "TabularMdp":
        """Build from a dense ``[a][s][s']`` transition array."""
        P = np.asarray(transition, dtype=float)
        if P.ndim != 3:
            raise InvalidMdpError(f"transition must be 3-D [a][s][s'], got shape {P.shape}")
        n_actions, n_states, _ = P.shape
        stacked = np.transpose(P, (1, 0, 2)).reshape(n_states * n_actions, -1)
        if initial_dist is None:
            initial_dist = np.full(n_states, 1.0 / n_states)
        return cls(stacked, reward, discount, initial_dist)

    @property
    def n_states(self) -> int:
        return self.reward.shape[0]

    @property
    def n_actions(self) -> int:
        return self.reward.shape[1]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.transition)

    def transition_tensor(self) -> np.ndarray:
        """Dense ``[a][s][s']`` view; only sensible for small models."""
        P = self.transition.toarray() if self.is_sparse else self.transition
        return P.reshape(self.n_states, self.n_actions, self.n_states).transpose(1, 0, 2)

    def expected_next(self, v) -> np.ndarray:
        """``E[v(s') | s, a]`` as an ``(n_states, n_actions)`` array."""
        v = _check_vector(self, v)
        return np.asarray(self.transition @ v).reshape(self.n_states, self.n_actions)

    @cached_property
    def optimal_value(self) -> np.ndarray:
        """v* by exact policy iteration (cached)."""
        v = _policy_iteration(self)
        v.setflags(write=False)
        return v

    def with_discount(self, discount: float) -> "TabularMdp":
        return TabularMdp(self.transition, self.reward, discount, self.initial_dist)

    def with_initial(self, initial_dist) -> "TabularMdp":
        return TabularMdp(self.transition, self.reward, self.discount, initial_dist)


@dataclass(frozen=True, eq=False)
class Policy:
    """Stochastic stationary policy, one probability row per state."""

    probs: np.ndarray

    def __post_init__(self):
        probs = _as_readonly(self.probs)
        if probs.ndim != 2:
            raise ValueError(f"policy must be 2-D (n_states, n_actions), got shape {probs.shape}")
        if np.any(probs < -1e-12) or np.any(probs > 1 + 1e-12):
            raise ValueError("policy entries must lie in [0, 1]")
        if np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("policy rows must sum to 1")
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_actions(cls, actions, n_actions: int) -> "Policy":
        actions = np.asarray(actions, dtype=int)
        probs = np.zeros((actions.size, n_actions))
        probs[np.arange(actions.size), actions] = 1.0
        return cls(probs)

    @classmethod
    def uniform(cls, n_states: int, n_actions: int) -> "Policy":
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    @property
    def deterministic(self) -> bool:
        return bool(np.all((self.probs == 0.0) | (self.probs == 1.0)))

    @property
    def actions(self) -> np.ndarray:
        """Action index per state; the most likely action for stochastic rows."""
        return np.argmax(self.probs, axis=1)

    def flat(self) -> np.ndarray:
        return self.probs.ravel()

    def __eq__(self, other):
        if not isinstance(other, Policy):
            return NotImplemented
        return self.probs.shape == other.probs.shape and bool(np.array_equal(self.probs, other.probs))

    def __hash__(self):
        return hash(self.probs.tobytes())


@dataclass(frozen=True)
class VisitFrequencies:
    per_state: np.ndarray
    per_state_action: np.ndarray


def _check_vector(mdp: TabularMdp, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (mdp.n_states,):
        raise ValueError(f"value function has shape {v.shape}, expected ({mdp.n_states},)")
    return v


def _check_policy(mdp: TabularMdp, pol: Policy):
    if pol.probs.shape != (mdp.n_states, mdp.n_actions):
        raise ValueError(
            f"policy has shape {pol.probs.shape}, expected {(mdp.n_states, mdp.n_actions)}"
        )


def q_values(mdp: TabularMdp, v) -> np.ndarray:
    """One-step backups ``r(s,a) + gamma * E[v(s')]``."""
    return mdp.reward + mdp.discount * mdp.expected_next(v)


def bellman_backup(mdp: TabularMdp, v) -> np.ndarray:
    return q_values(mdp, v).max(axis=1)


def bellman_backup_policy(mdp: TabularMdp, pol: Policy, v) -> np.ndarray:
    _check_policy(mdp, pol)
    return np.einsum("sa,sa->s", pol.probs, q_values(mdp, v))


def greedy_actions(q: np.ndarray, tol: float = GREEDY_TIE_TOL) -> np.ndarray:
    """Row-wise argmax with near-ties resolved to the lowest index."""
    best = q.max(axis=1, keepdims=True)
    return np.argmax(q >= best - tol * (1.0 + np.abs(best)), axis=1)


def greedy_policy(mdp: TabularMdp, v) -> Policy:
    return Policy.from_actions(greedy_actions(q_values(mdp, v)), mdp.n_actions)


def policy_matrices(mdp: TabularMdp, pol: Policy):
    """``(P_pi, r_pi)``; ``P_pi`` is sparse when the model is."""
    _check_policy(mdp, pol)
    n, m = mdp.n_states, mdp.n_actions
    r_pi = np.einsum("sa,sa->s", pol.probs, mdp.reward)
    weights = sp.csr_array(
        (pol.flat(), (np.repeat(np.arange(n), m), np.arange(n * m))), shape=(n, n * m)
    )
    P_pi = weights @ mdp.transition
    if not mdp.is_sparse:
        P_pi = np.asarray(P_pi)
    return P_pi, r_pi


def _solve(M, rhs):
    if sp.issparse(M):
        x = spla.spsolve(sp.csc_matrix(M), rhs)
    else:
        x = np.linalg.solve(M, rhs)
    res = np.max(np.abs(M @ x - rhs)) if x.size else 0.0
    if not np.isfinite(res) or res > SOLVE_TOL * max(1.0, np.max(np.abs(rhs), initial=0.0)):
        raise NumericalError(f"linear solve residual {res:.3e} exceeds tolerance")
    return x


def _identity_like(mdp: TabularMdp):
    return sp.identity(mdp.n_states, format="csr") if mdp.is_sparse else np.eye(mdp.n_states)


def evaluate_policy(mdp: TabularMdp, pol: Policy) -> np.ndarray:
    """Solve ``(I - gamma P_pi) v = r_pi``."""
    P_pi, r_pi = policy_matrices(mdp, pol)
    return _solve(_identity_like(mdp) - mdp.discount * P_pi, r_pi)


def visitation_frequencies(mdp: TabularMdp, pol: Policy) -> VisitFrequencies:
    """Discounted occupancy ``(I - gamma P_pi^T)^{-1} alpha`` and its split over actions."""
    P_pi, _ = policy_matrices(mdp, pol)
    u = _solve(_identity_like(mdp) - mdp.discount * P_pi.T, mdp.initial_dist)
    return VisitFrequencies(u, u[:, None] * pol.probs)


def _policy_iteration(mdp: TabularMdp, max_iters: int = 10_000) -> np.ndarray:
    actions = greedy_actions(mdp.reward)
    for _ in range(max_iters):
        v = evaluate_policy(mdp, Policy.from_actions(actions, mdp.n_actions))
        q = q_values(mdp, v)
        # keep the incumbent action unless another one is strictly better
        current = q[np.arange(mdp.n_states), actions]
        best = q.max(axis=1)
        improve = best > current + GREEDY_TIE_TOL * (1.0 + np.abs(best))
        if not np.any(improve):
            return v
        actions = np.where(improve, np.argmax(q, axis=1), actions)
    raise NumericalError("policy iteration did not converge")


def optimal_value(mdp: TabularMdp) -> np.ndarray:
    return mdp.optimal_value


def expected_policy_loss(mdp: TabularMdp, pol: Policy) -> float:
    return float(mdp.initial_dist @ (mdp.optimal_value - evaluate_policy(mdp, pol)))


def robust_policy_loss(mdp: TabularMdp, pol: Policy) -> float:
    return float(np.max(np.abs(mdp.optimal_value - evaluate_policy(mdp, pol))))


def bellman_residual(mdp: TabularMdp, v) -> np.ndarray:
    """Per-pair residual ``v(s) - gamma E[v(s')] - r(s,a)``, flattened s-major."""
    v = _check_vector(mdp, v)
    return (v[:, None] - q_values(mdp, v)).ravel()


def constraint_matrix(mdp: TabularMdp):
    """``(A, b)`` with row ``(s, a)`` of ``A`` equal to ``e_s - gamma P(s, a, .)``."""
    E = constraint_matrix_B(mdp).T
    P = mdp.transition.toarray() if mdp.is_sparse else mdp.transition
    return E - mdp.discount * P, mdp.reward.ravel().copy()


def constraint_matrix_B(mdp: TabularMdp) -> np.ndarray:
    n, m = mdp.n_states, mdp.n_actions
    return np.kron(np.eye(n), np.ones((1, m)))


def is_transitive_feasible(mdp: TabularMdp, v, eps: float = 0.0) -> bool:
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    v = _check_vector(mdp, v)
    return bool(np.all(v >= bellman_backup(mdp, v) - eps - FEAS_SLACK))


# --- JSON interchange ------------------------------------------------------


def mdp_to_dict(mdp: TabularMdp) -> dict:
    """JSON-ready fields; sparse transitions are written as ``[a, s, s']`` triples."""
    out = {
        "n_states": mdp.n_states,
        "n_actions": mdp.n_actions,
        "gamma": mdp.discount,
        "alpha": mdp.initial_dist.tolist(),
        "reward": mdp.reward.tolist(),
    }
    if sp.issparse(mdp.transition):
        coo = sp.coo_array(mdp.transition)
        s, a = np.divmod(coo.row, mdp.n_actions)
        out["transition_sparse"] = {
            "index": np.column_stack([a, s, coo.col]).tolist(),
            "value": coo.data.tolist(),
        }
    else:
        out["transition"] = mdp.transition_tensor().tolist()
    return out


def mdp_from_dict(data: dict) -> TabularMdp:
    missing = [k for k in ("n_states", "n_actions", "gamma", "alpha", "reward") if k not in data]
    if ("transition" in data) == ("transition_sparse" in data):
        missing.append("transition (exactly one of 'transition' or 'transition_sparse')")
    if missing:
        raise InvalidMdpError("invalid MDP:\n" + "\n".join(f"  - missing field {k!r}" for k in missing))
    R = np.asarray(data["reward"], dtype=float)
    n, m = int(data["n_states"]), int(data["n_actions"])
    problems = []
    if R.shape != (n, m):
        problems.append(f"reward has shape {R.shape}, expected {(n, m)}")
    if "transition" in data:
        P = np.asarray(data["transition"], dtype=float)
        if P.shape != (m, n, n):
            problems.append(f"transition has shape {P.shape}, expected {(m, n, n)} indexed [a][s][s']")
    else:
        idx = np.asarray(data["transition_sparse"]["index"], dtype=int).reshape(-1, 3)
        val = np.asarray(data["transition_sparse"]["value"], dtype=float)
        if val.shape != (idx.shape[0],):
            problems.append("transition_sparse index and value lengths differ")
        elif idx.size and (np.any(idx < 0) or np.any(idx.max(axis=0) >= (m, n, n))):
            problems.append("transition_sparse index out of range")
    if problems:
        raise InvalidMdpError("invalid MDP:\n" + "\n".join(f"  - {p}" for p in problems))
    if "transition" in data:
        return TabularMdp.from_arrays(P, R, data["gamma"], data["alpha"])
    P = sp.csr_array((val, (idx[:, 1] * m + idx[:, 0], idx[:, 2])), shape=(n * m, n))
    return TabularMdp(P, R, data["gamma"], np.asarray(data["alpha"], dtype=float))


def save_mdp(mdp: TabularMdp, path) -> None:
    Path(path).write_text(json.dumps(mdp_to_dict(mdp)))


def load_mdp(path) -> TabularMdp:
    return mdp_from_dict(json.loads(Path(path).read_text()))
