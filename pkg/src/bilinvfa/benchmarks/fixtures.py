"""Seeded random MDPs for property tests."""

from __future__ import annotations

import numpy as np

from ..mdp import TabularMdp


def random_mdp(n_states: int, n_actions: int, seed=0, sparsity: float = 0.0, gamma: float = 0.9) -> TabularMdp:
    """Row-stochastic transitions, rewards uniform on [0, 1], uniform ``alpha``.

    ``sparsity`` is the probability that an entry is zeroed; every row keeps
    at least one successor.
    """
    if n_states < 1 or n_actions < 1:
        raise ValueError("need at least one state and one action")
    if not 0.0 <= sparsity < 1.0:
        raise ValueError("sparsity must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    P = rng.random((n_actions, n_states, n_states))
    if sparsity:
        P *= rng.random(P.shape) >= sparsity
        empty = P.sum(axis=2) == 0
        a, s = np.nonzero(empty)
        P[a, s, rng.integers(0, n_states, size=a.size)] = 1.0
    P /= P.sum(axis=2, keepdims=True)
    R = rng.random((n_states, n_actions))
    return TabularMdp.from_arrays(P, R, gamma)


def m2() -> TabularMdp:
    """The two-state, two-action named fixture."""
    return random_mdp(2, 2, seed=0)
