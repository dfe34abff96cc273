"""Sample sets, sampled Bellman operators, and sampled bilinear programs.

Two kinds of one-step samples are supported: entries carrying the exact
successor distribution, and entries carrying ``n`` i.i.d. successor draws.
Backups computed from samples are only defined on sampled states; the
result is a :class:`PartialValueFunction` whose missing states hold the
:data:`ABSENT` marker.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .features import FeatureBasis
from .formulations import (
    AbpSolution,
    AbpVariant,
    BellmanRows,
    alp_rows,
    build_rows_program,
    exact_rows_oracle,
    min_bellman_residual_over_span,
    solve_abp_rows,
)
from .linprog import LpSolution
from .mdp import TabularMdp, bellman_backup, evaluate_policy, greedy_policy

DIST_TOL = 1e-12


class SampleError(ValueError):
    pass


class _Absent:
    """Marker for a state outside a partial function's domain.  Arithmetic fails loudly."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "ABSENT"

    def __bool__(self):
        raise TypeError("ABSENT has no truth value")

    def _fail(self, *_):
        raise TypeError("arithmetic on an undefined (unsampled) state value")

    __add__ = __radd__ = __sub__ = __rsub__ = __mul__ = __rmul__ = _fail
    __truediv__ = __rtruediv__ = __neg__ = __lt__ = __le__ = __gt__ = __ge__ = __float__ = _fail


ABSENT = _Absent()


@dataclass(frozen=True, eq=False)
class PartialValueFunction:
    """Values on ``states`` (ascending); every other state maps to :data:`ABSENT`."""

    n_states: int
    states: np.ndarray
    values: np.ndarray

    def __getitem__(self, s):
        i = np.searchsorted(self.states, s)
        if i < self.states.size and self.states[i] == s:
            return float(self.values[i])
        if not 0 <= s < self.n_states:
            raise IndexError(s)
        return ABSENT

    def __len__(self):
        return self.states.size

    def defined(self, s) -> bool:
        return self[s] is not ABSENT

    def restrict(self, v) -> np.ndarray:
        """A full vector's entries on this function's domain."""
        return np.asarray(v, dtype=float)[self.states]

    def __sub__(self, other):
        if not isinstance(other, PartialValueFunction):
            return NotImplemented
        if not np.array_equal(self.states, other.states):
            raise TypeError("partial functions have different domains")
        return PartialValueFunction(self.n_states, self.states, self.values - other.values)


# --- sample sets -----------------------------------------------------------


@dataclass(frozen=True)
class ExpectationEntry:
    state: int
    action: int
    dist: np.ndarray
    reward: float


@dataclass(frozen=True)
class SimpleEntry:
    state: int
    action: int
    successors: np.ndarray
    reward: float


def _sorted_unique(entries, n_states, n_actions):
    for e in entries:
        if not (0 <= e.state < n_states and 0 <= e.action < n_actions):
            raise SampleError(f"pair ({e.state}, {e.action}) outside the model dimensions")
    entries = sorted(entries, key=lambda e: (e.state, e.action))
    pairs = [(e.state, e.action) for e in entries]
    if len(set(pairs)) != len(pairs):
        raise SampleError("duplicate (state, action) entries")
    return tuple(entries)


@dataclass(frozen=True, eq=False)
class ExpectationSampleSet:
    n_states: int
    n_actions: int
    discount: float
    entries: tuple = ()

    def __post_init__(self):
        for e in self.entries:
            d = np.asarray(e.dist, dtype=float)
            if d.shape != (self.n_states,) or np.any(d < 0) or abs(d.sum() - 1.0) > DIST_TOL:
                raise SampleError(f"entry ({e.state}, {e.action}) has an invalid distribution")
        object.__setattr__(self, "entries", _sorted_unique(self.entries, self.n_states, self.n_actions))

    def expected_next(self, v) -> np.ndarray:
        return np.array([np.asarray(e.dist) @ v for e in self.entries])

    def feature_next(self, phi) -> np.ndarray:
        return np.array([np.asarray(e.dist) @ phi for e in self.entries]).reshape(len(self.entries), -1)


@dataclass(frozen=True, eq=False)
class SimpleSampleSet:
    n_states: int
    n_actions: int
    discount: float
    n: int
    entries: tuple = ()

    def __post_init__(self):
        if self.n < 1:
            raise SampleError("need at least one successor per entry")
        for e in self.entries:
            succ = np.asarray(e.successors)
            if succ.shape != (self.n,) or np.any(succ < 0) or np.any(succ >= self.n_states):
                raise SampleError(f"entry ({e.state}, {e.action}) has invalid successors")
        object.__setattr__(self, "entries", _sorted_unique(self.entries, self.n_states, self.n_actions))

    def expected_next(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return np.array([v[np.asarray(e.successors)].mean() for e in self.entries])

    def feature_next(self, phi) -> np.ndarray:
        return np.array([phi[np.asarray(e.successors)].mean(axis=0) for e in self.entries]).reshape(
            len(self.entries), -1)


SampleSet = ExpectationSampleSet | SimpleSampleSet


def _pairs(mdp: TabularMdp, states, actions):
    states = np.arange(mdp.n_states) if states is None else np.asarray(states, dtype=int)
    actions = np.arange(mdp.n_actions) if actions is None else np.asarray(actions, dtype=int)
    if states.size == 0 or actions.size == 0:
        raise SampleError("empty state or action subset")
    return [(int(s), int(a)) for s in states for a in actions]


def _row(mdp: TabularMdp, s, a) -> np.ndarray:
    row = mdp.transition[[s * mdp.n_actions + a]]
    return np.asarray(row.toarray() if hasattr(row, "toarray") else row).ravel()


def expectation_samples(mdp: TabularMdp, pairs) -> ExpectationSampleSet:
    """Exact-distribution samples for the given ``(state, action)`` pairs."""
    entries = [ExpectationEntry(int(s), int(a), _row(mdp, s, a), float(mdp.reward[s, a]))
               for s, a in pairs]
    return ExpectationSampleSet(mdp.n_states, mdp.n_actions, mdp.discount, tuple(entries))


def draw_samples(mdp: TabularMdp, states=None, actions=None, n: int = 1, seed=0, pairs=None) -> SimpleSampleSet:
    """``n`` i.i.d. successors for every pair in ``states x actions`` (or the explicit ``pairs``)."""
    if n < 1:
        raise SampleError("n must be >= 1")
    pairs = _pairs(mdp, states, actions) if pairs is None else [(int(s), int(a)) for s, a in pairs]
    if not pairs:
        raise SampleError("no pairs to sample")
    rng = np.random.default_rng(seed)
    entries = []
    for s, a in pairs:
        p = _row(mdp, s, a)
        succ = rng.choice(mdp.n_states, size=n, p=p / p.sum())
        entries.append(SimpleEntry(s, a, succ, float(mdp.reward[s, a])))
    return SimpleSampleSet(mdp.n_states, mdp.n_actions, mdp.discount, n, tuple(entries))


def subsample_pairs(mdp: TabularMdp, density: float, rng) -> list:
    """Each pair kept independently with probability ``density``; at least one is kept."""
    keep = rng.random(mdp.n_states * mdp.n_actions) < density
    if not keep.any():
        keep[rng.integers(keep.size)] = True
    return [(int(k // mdp.n_actions), int(k % mdp.n_actions)) for k in np.flatnonzero(keep)]


# --- sampled operators ------------------------------------------------------


def _backup(samples, v) -> PartialValueFunction:
    v = np.asarray(v, dtype=float)
    if v.shape != (samples.n_states,):
        raise SampleError(f"value function has shape {v.shape}, expected ({samples.n_states},)")
    if not samples.entries:
        return PartialValueFunction(samples.n_states, np.zeros(0, int), np.zeros(0))
    state = np.array([e.state for e in samples.entries])
    q = np.array([e.reward for e in samples.entries]) + samples.discount * samples.expected_next(v)
    states = np.unique(state)
    best = np.full(states.size, -np.inf)
    np.maximum.at(best, np.searchsorted(states, state), q)
    return PartialValueFunction(samples.n_states, states, best)


def sampled_bellman(samples: ExpectationSampleSet, v) -> PartialValueFunction:
    """Max over sampled actions of the exact one-step backup, on sampled states."""
    return _backup(samples, v)


def estimated_bellman(samples: SimpleSampleSet, v) -> PartialValueFunction:
    """Max over sampled actions of the empirical-mean backup, on sampled states."""
    return _backup(samples, v)


# --- sampled programs -------------------------------------------------------


def rows_from_samples(samples, basis: FeatureBasis) -> BellmanRows:
    if basis.n_states != samples.n_states:
        raise SampleError(f"basis covers {basis.n_states} states, samples {samples.n_states}")
    if not samples.entries:
        raise SampleError("empty sample set")
    phi = basis.matrix
    state = np.array([e.state for e in samples.entries])
    action = np.array([e.action for e in samples.entries])
    lhs = phi[state] - samples.discount * samples.feature_next(phi)
    reward = np.array([e.reward for e in samples.entries])
    return BellmanRows(state, action, lhs, reward, phi[state].copy(),
                       samples.n_states, samples.n_actions, samples.discount)


def _warn_missing(rows: BellmanRows):
    missing = rows.n_states - rows.states.size
    if missing:
        warnings.warn(f"{missing} states have no sampled actions and are left out of the program",
                      RuntimeWarning, stacklevel=3)


def build_sampled_abp(basis: FeatureBasis, samples, variant: AbpVariant | None = None):
    """Robust bilinear program restricted to the sampled pairs."""
    variant = variant or AbpVariant("robust_linf")
    if variant.kind != "robust_linf":
        raise SampleError("sampled programs support the robust variant only")
    rows = rows_from_samples(samples, basis)
    _warn_missing(rows)
    return build_rows_program(rows, variant)


def solve_sampled_abp(basis: FeatureBasis, samples, n_starts: int = 16, seed=0, max_iters: int = 500) -> AbpSolution:
    rows = rows_from_samples(samples, basis)
    _warn_missing(rows)
    return solve_abp_rows(rows, basis, AbpVariant("robust_linf"), n_starts, seed, None, max_iters)


def sampled_abp_oracle(basis: FeatureBasis, samples) -> AbpSolution:
    rows = rows_from_samples(samples, basis)
    _warn_missing(rows)
    return exact_rows_oracle(rows, basis, AbpVariant("robust_linf"))


def solve_sampled_alp(basis: FeatureBasis, samples, c_obj=None) -> LpSolution:
    """ALP over sampled constraints; the result may be unbounded."""
    c = np.full(basis.n_states, 1.0 / basis.n_states) if c_obj is None else np.asarray(c_obj, float)
    return alp_rows(rows_from_samples(samples, basis), c @ basis.matrix)


# --- sampling error estimates --------------------------------------------------


def _shift_into(v, backup: PartialValueFunction, discount):
    """Smallest upward constant shift making ``v >= backup`` on the backup's domain."""
    gap = float(np.max(backup.values - backup.restrict(v), initial=0.0))
    return v + max(gap, 0.0) / (1.0 - discount)


def estimate_epsilons(mdp: TabularMdp, basis: FeatureBasis, samples, n_probes: int = 200, seed=0,
                      extra_probes=()) -> tuple:
    """Probe-based lower estimates of ``(eps_p, eps_s)``.

    Each probe is a random representable function with standard normal
    coefficients scaled by ``||v*||_inf`` (``extra_probes`` are appended).
    ``eps_p`` is the largest violation ``Lv - v`` seen on probes shifted to
    be feasible for the expectation-sampled operator, so it witnesses how far
    sampled feasibility is from true feasibility.  ``eps_s`` is the largest
    gap between the estimated and expectation backups on sampled states.
    For simple samples the expectation operator uses the true distributions
    of the same pairs.  These are estimates, not certified bounds.
    """
    rng = np.random.default_rng(seed)
    scale = max(float(np.max(np.abs(mdp.optimal_value))), 1.0)
    coeffs = rng.standard_normal((n_probes, basis.n_features)) * scale
    probes = [basis.matrix @ c for c in coeffs] + [np.asarray(v, float) for v in extra_probes]
    pairs = [(e.state, e.action) for e in samples.entries]
    exact = expectation_samples(mdp, pairs)
    simple = samples if isinstance(samples, SimpleSampleSet) else None
    eps_p = eps_s = 0.0
    for v in probes:
        bar = sampled_bellman(exact, v)
        w = _shift_into(v, bar, mdp.discount)
        eps_p = max(eps_p, float(np.max(bellman_backup(mdp, w) - w)))
        if simple is not None:
            eps_s = max(eps_s, float(np.max(np.abs((estimated_bellman(simple, v) - bar).values))))
    return max(eps_p, 0.0), eps_s


def hoeffding_slack(values, n: int, discount: float, n_pairs: int, delta: float = 1e-3) -> float:
    """Bound on ``|empirical - expected| * gamma`` for one backup, union over ``n_pairs`` pairs."""
    span = float(np.max(values) - np.min(values))
    return discount * span * math.sqrt(math.log(2.0 * max(n_pairs, 1) / delta) / (2.0 * n))


@dataclass
class SampledBoundReport:
    min_residual: float
    eps_p: float
    eps_s: float
    slack: float
    losses: list = field(default_factory=list)
    bounds: list = field(default_factory=list)

    @property
    def holds(self) -> list:
        return [loss <= bound + 1e-9 for loss, bound in zip(self.losses, self.bounds)]


def check_sampled_bound(mdp: TabularMdp, basis: FeatureBasis, pairs, n: int = 10_000, seed=0,
                        n_probes: int = 200) -> SampledBoundReport:
    """Compare the losses of precise, expectation-sampled and estimated-sampled solutions with their bounds.

    ``pairs`` lists the sampled ``(state, action)`` pairs; simple samples draw
    ``n`` successors for each.  ``eps_s`` is inflated by a Hoeffding slack on
    the value functions that enter the bound.
    """
    full = exact_rows_oracle(BellmanRows.from_mdp(mdp, basis), basis, AbpVariant("robust_linf"))
    exp_set = expectation_samples(mdp, pairs)
    simple = draw_samples(mdp, pairs=pairs, n=n, seed=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        v2 = sampled_abp_oracle(basis, exp_set).value
        v3 = sampled_abp_oracle(basis, simple).value
    values = [full.value, v2, v3]
    eps_p, eps_s = estimate_epsilons(mdp, basis, simple, n_probes, seed, extra_probes=values)
    slack = max(hoeffding_slack(v, n, mdp.discount, len(pairs)) for v in values)
    min_res, _ = min_bellman_residual_over_span(mdp, basis)
    vstar = mdp.optimal_value
    losses = [float(np.max(np.abs(vstar - evaluate_policy(mdp, greedy_policy(mdp, v))))) for v in values]
    factor = 2.0 / (1.0 - mdp.discount)
    es = eps_s + slack
    bounds = [factor * min_res, factor * (min_res + eps_p), factor * (min_res + eps_p + 2 * es)]
    return SampledBoundReport(min_res, eps_p, eps_s, slack, losses, bounds)


# --- file format ------------------------------------------------------------------


def save_samples(samples, path) -> None:
    """JSON lines: a header record, then one record per entry."""
    header = {"n_states": samples.n_states, "n_actions": samples.n_actions,
              "gamma": samples.discount}
    lines = []
    if isinstance(samples, SimpleSampleSet):
        header["n"] = samples.n
        lines = [{"s": e.state, "a": e.action, "r": e.reward,
                  "successors": np.asarray(e.successors).tolist()} for e in samples.entries]
    else:
        lines = [{"s": e.state, "a": e.action, "r": e.reward,
                  "dist": np.asarray(e.dist).tolist()} for e in samples.entries]
    Path(path).write_text("\n".join(json.dumps(x) for x in [header, *lines]) + "\n")


def load_samples(path):
    records = [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]
    if not records:
        raise SampleError("empty sample file")
    head, body = records[0], records[1:]
    dims = (int(head["n_states"]), int(head["n_actions"]), float(head["gamma"]))
    if body and "dist" in body[0]:
        entries = tuple(ExpectationEntry(int(r["s"]), int(r["a"]), np.asarray(r["dist"], float),
                                         float(r["r"])) for r in body)
        return ExpectationSampleSet(*dims, entries)
    entries = tuple(SimpleEntry(int(r["s"]), int(r["a"]), np.asarray(r["successors"], int),
                                float(r["r"])) for r in body)
    return SimpleSampleSet(*dims, int(head.get("n", len(body[0]["successors"]) if body else 1)), entries)
