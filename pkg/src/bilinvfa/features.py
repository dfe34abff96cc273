"""Feature bases: value functions are represented as ``v = Phi @ x``."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SPAN_TOL = 1e-8


class InvalidBasisError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FeatureBasis:
    matrix: np.ndarray

    def __post_init__(self):
        phi = np.array(self.matrix, dtype=float)
        if phi.ndim != 2 or phi.shape[1] == 0:
            raise InvalidBasisError(f"feature matrix must be 2-D with >= 1 column, got {phi.shape}")
        if not np.all(np.isfinite(phi)):
            raise InvalidBasisError("feature matrix has non-finite entries")
        zero = np.flatnonzero(~phi.any(axis=0))
        if zero.size:
            raise InvalidBasisError(f"all-zero feature columns: {zero.tolist()}")
        phi.setflags(write=False)
        object.__setattr__(self, "matrix", phi)

    @property
    def n_states(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_features(self) -> int:
        return self.matrix.shape[1]

    @property
    def has_constant(self) -> bool:
        return bool(np.all(self.matrix[:, 0] == 1.0))


def represent(basis: FeatureBasis, coeffs) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (basis.n_features,):
        raise ValueError(f"expected {basis.n_features} coefficients, got shape {coeffs.shape}")
    return basis.matrix @ coeffs


def check_assumption_one(basis: FeatureBasis) -> bool:
    """Whether the constant function lies in the span of the features."""
    ones = np.ones(basis.n_states)
    x, *_ = np.linalg.lstsq(basis.matrix, ones, rcond=None)
    return bool(np.linalg.norm(basis.matrix @ x - ones) < SPAN_TOL)


def identity_basis(n_states: int) -> FeatureBasis:
    return FeatureBasis(np.eye(n_states))


def with_constant(columns) -> FeatureBasis:
    columns = np.asarray(columns, dtype=float).reshape(len(columns), -1)
    return FeatureBasis(np.hstack([np.ones((columns.shape[0], 1)), columns]))


def chain_basis(n_states: int, cutoffs) -> FeatureBasis:
    """Constant column followed by hinges ``max(i - c, 0)`` over states ``i = 1..n``."""
    cutoffs = [int(c) for c in cutoffs]
    bad = [c for c in cutoffs if not 1 <= c <= n_states]
    if bad:
        raise InvalidBasisError(f"cutoffs outside [1, {n_states}]: {bad}")
    i = np.arange(1, n_states + 1)[:, None]
    hinges = np.maximum(i - np.asarray(cutoffs, dtype=float)[None, :], 0.0)
    return with_constant(hinges)


def random_chain_cutoffs(n_states: int, n_features: int, rng) -> np.ndarray:
    """Distinct cutoffs drawn uniformly from ``1..n-1`` (``n`` gives a zero column)."""
    return np.sort(rng.choice(np.arange(1, n_states), size=n_features, replace=False))


def spline_weights(grid_x: int, grid_y: int, points, lo, hi) -> np.ndarray:
    """Bilinear hat-function weights of each point on a uniform node grid.

    Nodes are numbered ``ix * grid_y + iy``.  Points outside ``[lo, hi]`` are
    clamped onto the box.
    """
    if grid_x < 2 or grid_y < 2:
        raise InvalidBasisError("spline grid needs at least 2 nodes per axis")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    t = (np.clip(pts, lo, hi) - lo) / (hi - lo) * (np.array([grid_x, grid_y]) - 1)
    i0 = np.minimum(np.floor(t).astype(int), np.array([grid_x, grid_y]) - 2)
    frac = t - i0
    W = np.zeros((pts.shape[0], grid_x * grid_y))
    rows = np.arange(pts.shape[0])
    for dx in (0, 1):
        wx = frac[:, 0] if dx else 1.0 - frac[:, 0]
        for dy in (0, 1):
            wy = frac[:, 1] if dy else 1.0 - frac[:, 1]
            np.add.at(W, (rows, (i0[:, 0] + dx) * grid_y + i0[:, 1] + dy), wx * wy)
    return W


def spline_grid_basis(grid_x: int, grid_y: int, points, lo=(0.0, 0.0), hi=(1.0, 1.0)) -> FeatureBasis:
    """Linear spline basis on a ``grid_x`` by ``grid_y`` node grid.

    Rows are a partition of unity, so constants are representable without a
    separate constant column.  Nodes whose hat function misses every point
    would give zero columns and are rejected.
    """
    return FeatureBasis(spline_weights(grid_x, grid_y, points, lo, hi))


def basis_to_dict(basis: FeatureBasis) -> dict:
    return {"n_states": basis.n_states, "m": basis.n_features, "columns": basis.matrix.T.tolist()}


def basis_from_dict(data: dict) -> FeatureBasis:
    cols = np.asarray(data["columns"], dtype=float)
    if cols.shape != (int(data["m"]), int(data["n_states"])):
        raise InvalidBasisError(
            f"columns have shape {cols.shape}, expected {(data['m'], data['n_states'])}"
        )
    return FeatureBasis(cols.T)


def save_basis(basis: FeatureBasis, path) -> None:
    Path(path).write_text(json.dumps(basis_to_dict(basis)))


def load_basis(path) -> FeatureBasis:
    return basis_from_dict(json.loads(Path(path).read_text()))
