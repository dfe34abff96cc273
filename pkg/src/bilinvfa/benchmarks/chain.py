"""Noisy chain: move left or right with Gaussian jitter, sinusoidal rewards."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..mdp import TabularMdp

LEFT, RIGHT = 0, 1


@dataclass(frozen=True)
class ChainSpec:
    n_states: int = 200
    noise_sigma: float = 3.0
    gamma: float = 0.95
    init_state: int = 130  # 1-indexed

    def __post_init__(self):
        if self.n_states < 2:
            raise ValueError("chain needs at least 2 states")
        if not self.noise_sigma > 0:
            raise ValueError("noise_sigma must be positive")
        if not 1 <= self.init_state <= self.n_states:
            raise ValueError(f"init_state {self.init_state} outside 1..{self.n_states}")


def make_chain(spec: ChainSpec = ChainSpec()) -> TabularMdp:
    """Action 0 moves left, action 1 moves right.

    The successor density is a Gaussian centred one step away, evaluated on
    the states and renormalized, so mass past either end is redistributed.
    """
    n = spec.n_states
    i = np.arange(1, n + 1, dtype=float)
    P = np.empty((2, n, n))
    for a, step in ((LEFT, -1.0), (RIGHT, 1.0)):
        centre = (i + step)[:, None]
        dens = np.exp(-((i[None, :] - centre) ** 2) / (2.0 * spec.noise_sigma ** 2))
        P[a] = dens / dens.sum(axis=1, keepdims=True)
    R = np.column_stack([np.cos(i / 20.0), np.sin(i / 20.0)])
    alpha = np.zeros(n)
    alpha[spec.init_state - 1] = 1.0
    return TabularMdp.from_arrays(P, R, spec.gamma, alpha)
