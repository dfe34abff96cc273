"""Bellman constraint rows ``(A Phi) x >= b`` over a set of state-action pairs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..features import FeatureBasis
from ..mdp import GREEDY_TIE_TOL, Policy, TabularMdp


@dataclass(frozen=True, eq=False)
class BellmanRows:
    """One row per included pair, sorted s-major.

    ``lhs[k] @ x`` is ``phi(s)^T x - gamma E[phi(s')]^T x`` for row ``k``;
    ``rhs[k]`` is the reward.  ``phi_state[k]`` is ``phi(s)`` so that values
    at the row's own state are available.
    """

    state: np.ndarray
    action: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    phi_state: np.ndarray
    n_states: int
    n_actions: int
    discount: float

    @classmethod
    def from_mdp(cls, mdp: TabularMdp, basis: FeatureBasis) -> "BellmanRows":
        if basis.n_states != mdp.n_states:
            raise ValueError(f"basis covers {basis.n_states} states, MDP has {mdp.n_states}")
        n, m = mdp.n_states, mdp.n_actions
        phi = basis.matrix
        lhs = np.repeat(phi, m, axis=0) - mdp.discount * np.asarray(mdp.transition @ phi)
        return cls(
            np.repeat(np.arange(n), m), np.tile(np.arange(m), n), lhs,
            mdp.reward.ravel().copy(), np.repeat(phi, m, axis=0), n, m, mdp.discount,
        )

    @property
    def n_rows(self) -> int:
        return self.state.size

    @property
    def n_features(self) -> int:
        return self.lhs.shape[1]

    @property
    def states(self) -> np.ndarray:
        """Distinct states with at least one row, ascending."""
        return np.unique(self.state)

    @property
    def complete(self) -> bool:
        return self.n_rows == self.n_states * self.n_actions

    def dedupe(self) -> "BellmanRows":
        """Drop rows identical to an earlier row of the same state (repeated actions)."""
        seen, keep = set(), []
        for k in range(self.n_rows):
            key = (int(self.state[k]), self.lhs[k].tobytes(), float(self.rhs[k]))
            if key not in seen:
                seen.add(key)
                keep.append(k)
        if len(keep) == self.n_rows:
            return self
        keep = np.array(keep)
        return BellmanRows(self.state[keep], self.action[keep], self.lhs[keep], self.rhs[keep],
                           self.phi_state[keep], self.n_states, self.n_actions, self.discount)

    def state_index(self) -> np.ndarray:
        """Position of each row's state within :attr:`states`."""
        return np.searchsorted(self.states, self.state)

    def residual(self, coeffs) -> np.ndarray:
        return self.lhs @ coeffs - self.rhs

    def policy_matrix(self) -> np.ndarray:
        """0/1 matrix with one row per included state: ``B pi = 1``."""
        B = np.zeros((self.states.size, self.n_rows))
        B[self.state_index(), np.arange(self.n_rows)] = 1.0
        return B

    def choice_rows(self, choice) -> np.ndarray:
        """Row index per included state for a deterministic choice of actions."""
        choice = np.asarray(choice, dtype=int)
        idx = {(s, a): k for k, (s, a) in enumerate(zip(self.state.tolist(), self.action.tolist()))}
        try:
            return np.array([idx[(int(s), int(a))] for s, a in zip(self.states, choice)], dtype=int)
        except KeyError as err:
            raise ValueError(f"policy selects an unavailable pair {err.args[0]}") from None

    def greedy_rows(self, coeffs) -> np.ndarray:
        """Greedy row per state: highest backup, near-ties to the lowest action."""
        q = self.phi_state @ coeffs - self.residual(coeffs)
        sidx = self.state_index()
        best = np.full(self.states.size, -np.inf)
        np.maximum.at(best, sidx, q)
        ok = q >= best[sidx] - GREEDY_TIE_TOL * (1.0 + np.abs(best[sidx]))
        # rows are s-major with ascending actions: the first eligible row wins
        out = np.full(self.states.size, self.n_rows)
        np.minimum.at(out, sidx[ok], np.flatnonzero(ok))
        return out

    def rows_to_policy(self, rows) -> Policy:
        """Deterministic policy over the included states (row ``i`` is ``states[i]``)."""
        return Policy.from_actions(self.action[np.asarray(rows)], self.n_actions)

    def flat_policy(self, rows) -> np.ndarray:
        pi = np.zeros(self.n_rows)
        pi[np.asarray(rows)] = 1.0
        return pi
