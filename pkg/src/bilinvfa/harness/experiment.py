"""Experiment configuration, execution, summaries and result files."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..benchmarks import ChainSpec, MountainCarSpec, load_dimacs, make_chain, make_mountain_car, sat_to_mdp
from ..features import FeatureBasis, chain_basis, load_basis, random_chain_cutoffs, spline_weights
from ..formulations import (
    AbpVariant,
    BellmanRows,
    UBound,
    alp_rows,
    api_rows,
    solve_abp_rows,
)
from ..mdp import (
    TabularMdp,
    bellman_residual,
    evaluate_policy,
    greedy_policy,
    load_mdp,
)
from ..sampling import expectation_samples, rows_from_samples

METHODS = ("abp_robust", "abp_expected", "abp_weighted", "abp_hybrid",
           "alp", "api_l2", "api_linf", "oapi")
BENCHMARKS = ("chain", "mountain_car", "sat", "file")
FORMATS = ("csv", "json")
FIELDS = ("run_id", "method", "n_features", "seed", "bellman_linf", "bellman_l1_weighted",
          "bellman_l2", "expected_loss", "robust_loss", "iterations", "converged", "wall_ms")
METRICS = ("bellman_linf", "bellman_l1_weighted", "bellman_l2", "expected_loss", "robust_loss",
           "iterations")
SUMMARY_FIELDS = ("method", "n_features", "metric", "mean", "std", "count")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    benchmark: str = "chain"
    methods: tuple = ("abp_robust",)
    n_features: int = 15
    n_runs: int = 1
    seed: int = 0
    hybrid_k: float = 5.0
    output: str | None = None
    format: str = "csv"
    n_starts: int = 16
    max_iters: int = 500
    api_max_iters: int = 20
    # chain
    n_states: int = 200
    # mountain car
    grid: int = 60
    n_sample_states: int = 200
    # sat / file
    cnf_path: str | None = None
    gamma: float | None = None
    with_constant: bool = False
    mdp_path: str | None = None
    basis_path: str | None = None

    def __post_init__(self):
        if isinstance(self.methods, str):
            self.methods = tuple(m for m in self.methods.split(",") if m)
        self.methods = tuple(self.methods)
        problems = []
        if self.benchmark not in BENCHMARKS:
            problems.append(f"benchmark {self.benchmark!r} not in {BENCHMARKS}")
        if not self.methods:
            problems.append("methods must be nonempty")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            problems.append(f"unknown methods {unknown}; choose from {METHODS}")
        if len(set(self.methods)) != len(self.methods):
            problems.append("methods repeat")
        if self.n_runs < 1:
            problems.append("n_runs must be >= 1")
        if self.n_features < 1:
            problems.append("n_features must be >= 1")
        if self.format not in FORMATS:
            problems.append(f"format {self.format!r} not in {FORMATS}")
        if self.hybrid_k < 0:
            problems.append("hybrid_k must be >= 0")
        if self.benchmark == "sat" and not self.cnf_path:
            problems.append("sat benchmark needs cnf_path")
        if self.benchmark == "file" and not (self.mdp_path and self.basis_path):
            problems.append("file benchmark needs mdp_path and basis_path")
        if problems:
            raise ConfigError("; ".join(problems))

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        extra = sorted(set(data) - names)
        if extra:
            raise ConfigError(f"unknown config keys {extra}")
        return cls(**data)


@dataclass
class ResultRecord:
    run_id: int
    method: str
    n_features: int
    seed: int
    bellman_linf: float = math.nan
    bellman_l1_weighted: float = math.nan
    bellman_l2: float = math.nan
    expected_loss: float = math.nan
    robust_loss: float = math.nan
    iterations: int = 0
    converged: bool = False
    wall_ms: float = 0.0
    value: np.ndarray | None = field(default=None, repr=False, compare=False)
    error: str = field(default="", compare=False)

    def row(self) -> dict:
        return {name: getattr(self, name) for name in FIELDS}


# --- problem instances -------------------------------------------------------------


@dataclass
class _Instance:
    """Ground model, basis, and the Bellman rows the methods see."""

    mdp: TabularMdp
    basis: FeatureBasis
    rows: BellmanRows
    alpha_phi: np.ndarray
    alp_weights: np.ndarray
    sampled: bool
    #: coefficient bounds for the approximate LP (sampled rows only)
    coeff_box: tuple = (None, None)


def _run_seed(config: ExperimentConfig, run_id: int) -> int:
    return int(np.random.SeedSequence([config.seed, run_id]).generate_state(1)[0])


def _full_instance(mdp, basis) -> _Instance:
    rows = BellmanRows.from_mdp(mdp, basis)
    uniform = np.full(mdp.n_states, 1.0 / mdp.n_states)
    return _Instance(mdp, basis, rows, mdp.initial_dist @ basis.matrix, uniform @ basis.matrix, False)


class _Benchmarks:
    """Builds the per-run instance; the ground model is built once."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self._mdp = None
        self._coords = None

    def ground(self):
        if self._mdp is None:
            c = self.config
            if c.benchmark == "chain":
                spec = ChainSpec(n_states=c.n_states, gamma=c.gamma if c.gamma is not None else 0.95,
                                 init_state=min(130, c.n_states))
                self._mdp = make_chain(spec)
            elif c.benchmark == "mountain_car":
                spec = MountainCarSpec(grid_pos=c.grid, grid_vel=c.grid,
                                       gamma=c.gamma if c.gamma is not None else 0.99,
                                       n_sample_states=c.n_sample_states)
                self._mdp, self._coords = make_mountain_car(spec)
            elif c.benchmark == "sat":
                formula = load_dimacs(c.cnf_path)
                self._mdp, self._basis = sat_to_mdp(formula, c.gamma if c.gamma is not None else 0.95,
                                                    c.with_constant)
            else:
                self._mdp = load_mdp(c.mdp_path)
                self._basis = load_basis(c.basis_path)
        return self._mdp

    def instance(self, rng) -> _Instance:
        c = self.config
        mdp = self.ground()
        if c.benchmark == "chain":
            if c.n_features >= mdp.n_states:
                raise ConfigError("chain needs fewer features than states")
            cutoffs = random_chain_cutoffs(mdp.n_states, c.n_features, rng)
            return _full_instance(mdp, chain_basis(mdp.n_states, cutoffs))
        if c.benchmark == "mountain_car":
            return self._mcar_instance(mdp, rng)
        return _full_instance(mdp, self._basis)

    def _mcar_instance(self, mdp, rng) -> _Instance:
        c = self.config
        side = int(round(math.sqrt(c.n_features)))
        if side * side != c.n_features or side < 2:
            raise ConfigError("mountain car features must be a square grid count such as 100 or 144")
        n_grid = self._coords.shape[0]
        lo, hi = self._coords.min(axis=0), self._coords.max(axis=0)
        spline = spline_weights(side, side, self._coords, lo, hi)
        # the absorbing goal has value 0, which the all-zero feature row encodes exactly
        phi = np.zeros((mdp.n_states, c.n_features))
        phi[:n_grid] = spline
        basis = FeatureBasis(phi)
        states = np.sort(rng.choice(n_grid, size=min(c.n_sample_states, n_grid), replace=False))
        samples = expectation_samples(mdp, [(int(s), a) for s in states for a in range(mdp.n_actions)])
        rows = rows_from_samples(samples, basis)
        alpha_bar = np.zeros(mdp.n_states)
        alpha_bar[states] = mdp.initial_dist[states]
        weights = np.zeros(mdp.n_states)
        weights[states] = 1.0 / states.size
        # hat features form a partition of unity, so a coefficient box is the value range
        r = mdp.reward
        box = (np.full(basis.n_features, min(r.min(), 0.0) / (1.0 - mdp.discount)),
               np.full(basis.n_features, max(r.max(), 0.0) / (1.0 - mdp.discount)))
        return _Instance(mdp, basis, rows, alpha_bar @ basis.matrix, weights @ basis.matrix, True, box)


# --- methods -----------------------------------------------------------------------


def _variant(method: str, inst: _Instance, config: ExperimentConfig) -> AbpVariant:
    ub = UBound.uniform(inst.mdp.n_states, inst.mdp.discount)
    if method == "abp_robust":
        return AbpVariant("robust_linf")
    if method == "abp_expected":
        return AbpVariant("expected_l1")
    if method == "abp_weighted":
        return AbpVariant("weighted_u", ub)
    return AbpVariant("hybrid", ub, config.hybrid_k)


def _run_method(method: str, inst: _Instance, config: ExperimentConfig, seed: int):
    """Returns ``(coeffs, iterations, converged)``."""
    if method.startswith("abp_"):
        sol = solve_abp_rows(inst.rows, inst.basis, _variant(method, inst, config), config.n_starts,
                             seed, inst.alpha_phi, config.max_iters)
        return sol.coeffs, sol.iterations, sol.converged
    if method == "alp":
        sol = alp_rows(inst.rows, inst.alp_weights, *inst.coeff_box)
        if not sol.optimal:
            raise RuntimeError(f"approximate LP is {sol.status}")
        return sol.x, 1, True
    inner = {"api_l2": "l2", "api_linf": "linf", "oapi": "oapi"}[method]
    cap = config.max_iters if inner == "oapi" else config.api_max_iters
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = api_rows(inst.rows, inst.basis, inner, cap, seed)
    return res.coeffs, res.iterations, res.converged


def compute_metrics(inst: _Instance, v) -> dict:
    """Residual norms over the instance's rows and policy losses on the ground model.

    Residuals are per state, ``v(s) - max_a q(s, a)``, over the states that
    have rows; L1 and L2 use uniform weights over those states.
    """
    mdp = inst.mdp
    if inst.sampled:
        x = np.linalg.lstsq(inst.basis.matrix, v, rcond=None)[0]
        res = inst.rows.residual(x)
        per_state = np.full(inst.rows.states.size, np.inf)
        np.minimum.at(per_state, inst.rows.state_index(), res)
    else:
        per_state = bellman_residual(mdp, v).reshape(mdp.n_states, mdp.n_actions).min(axis=1)
    v_pi = evaluate_policy(mdp, greedy_policy(mdp, v))
    gap = mdp.optimal_value - v_pi
    return {
        "bellman_linf": float(np.max(np.abs(per_state))),
        "bellman_l1_weighted": float(np.mean(np.abs(per_state))),
        "bellman_l2": float(np.sqrt(np.mean(per_state ** 2))),
        "expected_loss": float(mdp.initial_dist @ gap),
        "robust_loss": float(np.max(np.abs(gap))),
    }


def run_experiment(config: ExperimentConfig) -> list:
    """Every (run, method) pair, sorted by ``(run_id, method)``.

    A failing method yields a record with ``converged=False`` and NaN metrics.
    """
    bench = _Benchmarks(config)
    records = []
    for run_id in range(config.n_runs):
        seed = _run_seed(config, run_id)
        inst = bench.instance(np.random.default_rng(seed))
        for method in sorted(config.methods):
            rec = ResultRecord(run_id, method, config.n_features, seed)
            start = time.perf_counter()
            try:
                coeffs, rec.iterations, rec.converged = _run_method(method, inst, config, seed)
                rec.value = inst.basis.matrix @ coeffs
                for k, val in compute_metrics(inst, rec.value).items():
                    setattr(rec, k, val)
            except Exception as err:  # recorded, never fatal for the batch
                rec.converged = False
                rec.error = f"{type(err).__name__}: {err}"
            rec.wall_ms = (time.perf_counter() - start) * 1000.0
            records.append(rec)
    records.sort(key=lambda r: (r.run_id, r.method))
    return records


# --- summaries and files -------------------------------------------------------------


def summarize(records) -> list:
    """Mean and sample standard deviation per ``(method, n_features, metric)``.

    Non-finite values (failed runs) are left out; ``count`` says how many
    entered each row.
    """
    records = list(records)
    if not records:
        raise ValueError("no records to summarize")
    groups = {}
    for r in records:
        groups.setdefault((r.method, r.n_features), []).append(r)
    out = []
    for (method, nf), recs in sorted(groups.items()):
        for metric in METRICS:
            vals = np.array([float(getattr(r, metric)) for r in recs])
            vals = vals[np.isfinite(vals)]
            mean = float(vals.mean()) if vals.size else math.nan
            std = float(vals.std(ddof=1)) if vals.size > 1 else (0.0 if vals.size else math.nan)
            out.append({"method": method, "n_features": nf, "metric": metric,
                        "mean": mean, "std": std, "count": int(vals.size)})
    return out


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _json_value(value):
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (float, np.floating)):
        return float(value) if math.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    return value


def emit(items, fmt: str, path=None) -> str:
    """Write records (or summary rows) as CSV or JSON; returns the text.

    Record files use the fixed :data:`FIELDS` header; summary rows use
    :data:`SUMMARY_FIELDS`.
    """
    items = list(items)
    if fmt not in FORMATS:
        raise ValueError(f"format {fmt!r} not in {FORMATS}")
    summary = bool(items) and isinstance(items[0], dict)
    fields = SUMMARY_FIELDS if summary else FIELDS
    rows = items if summary else [r.row() for r in items]
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(fields)
        for row in rows:
            w.writerow([_fmt(row[k]) for k in fields])
        text = buf.getvalue()
    else:
        text = json.dumps([{k: _json_value(row[k]) for k in fields} for row in rows], indent=1) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


_CASTS = {"run_id": int, "n_features": int, "seed": int, "iterations": int,
          "converged": lambda s: s == "true", "method": str}


def parse_records(text: str) -> list:
    """Inverse of CSV :func:`emit` for records."""
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != FIELDS:
        raise ValueError("unexpected CSV header")
    return [ResultRecord(**{k: _CASTS.get(k, float)(row[k]) for k in FIELDS}) for row in reader]
