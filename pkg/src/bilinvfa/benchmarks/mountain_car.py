"""Grid-discretized mountain car with an absorbing goal state."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..mdp import TabularMdp

POS_RANGE = (-1.2, 0.6)
VEL_RANGE = (-0.07, 0.07)
GOAL_POS = 0.5


@dataclass(frozen=True)
class MountainCarSpec:
    grid_pos: int = 60
    grid_vel: int = 60
    gamma: float = 0.99
    goal_reward: float = 1.0
    n_sample_states: int = 200

    def __post_init__(self):
        if self.grid_pos < 10 or self.grid_vel < 10:
            raise ValueError("grids need at least 10 nodes per axis")


def step(position, velocity, action):
    """One deterministic transition, clipped to the state box."""
    velocity = np.clip(velocity + 0.001 * (action - 1) - 0.0025 * np.cos(3.0 * position), *VEL_RANGE)
    position = np.clip(position + velocity, *POS_RANGE)
    return position, velocity


def _interp(x, lo, hi, n):
    t = (x - lo) / (hi - lo) * (n - 1)
    i0 = np.minimum(np.floor(t).astype(int), n - 2)
    return i0, t - i0


def make_mountain_car(spec: MountainCarSpec = MountainCarSpec()):
    """Return ``(mdp, coords)``.

    States ``0 .. gp*gv-1`` are grid nodes numbered ``ip * grid_vel + iv``;
    the last state is the absorbing goal.  A move that reaches the goal
    position enters the goal with ``goal_reward``; any other successor is
    spread bilinearly over the four enclosing nodes.  ``coords`` has the
    ``(position, velocity)`` of each grid node (the goal state has none).
    """
    gp, gv = spec.grid_pos, spec.grid_vel
    pos = np.linspace(*POS_RANGE, gp)
    vel = np.linspace(*VEL_RANGE, gv)
    P_, V_ = np.meshgrid(pos, vel, indexing="ij")
    coords = np.column_stack([P_.ravel(), V_.ravel()])
    n_grid, goal, n_actions = gp * gv, gp * gv, 3
    n = n_grid + 1

    rows, cols, vals = [], [], []
    reward = np.zeros((n, n_actions))
    for a in range(n_actions):
        p2, v2 = step(coords[:, 0], coords[:, 1], a)
        at_goal = p2 >= GOAL_POS
        flat = np.arange(n_grid) * n_actions + a
        reward[:n_grid, a] = np.where(at_goal, spec.goal_reward, 0.0)
        ip, fp = _interp(p2, *POS_RANGE, gp)
        iv, fv = _interp(v2, *VEL_RANGE, gv)
        for dp in (0, 1):
            wp = fp if dp else 1.0 - fp
            for dv in (0, 1):
                wv = fv if dv else 1.0 - fv
                w = np.where(at_goal, 0.0, wp * wv)
                rows.append(flat)
                cols.append((ip + dp) * gv + iv + dv)
                vals.append(w)
        rows.append(flat[at_goal])
        cols.append(np.full(int(at_goal.sum()), goal))
        vals.append(np.ones(int(at_goal.sum())))
    for a in range(n_actions):
        rows.append(np.array([goal * n_actions + a]))
        cols.append(np.array([goal]))
        vals.append(np.array([1.0]))
    P = sp.csr_array((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                     shape=(n * n_actions, n))
    P.sum_duplicates()
    P.eliminate_zeros()
    # bilinear weights can sum to 1 - O(eps); renormalize exactly
    P = sp.csr_array(sp.diags_array(1.0 / np.asarray(P.sum(axis=1)).ravel()) @ P)
    alpha = np.zeros(n)
    alpha[:n_grid] = 1.0 / n_grid
    return TabularMdp(P, reward, spec.gamma, alpha), coords


def goal_state(spec: MountainCarSpec) -> int:
    return spec.grid_pos * spec.grid_vel
