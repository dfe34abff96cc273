"""Time the compiled and numpy simplex kernels on the same LPs.

Usage: python bench/bench_kernels.py [--repeats 3] [--sizes 20x200 60x600 120x1200]

Each size ``n x m`` is a random bounded LP with ``n`` variables and ``m``
inequality rows, plus the approximate LP of the chain problem.  Both
kernels must return the same status and objective; the script exits
nonzero otherwise.
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from bilinvfa.benchmarks import ChainSpec, make_chain
from bilinvfa.features import chain_basis, random_chain_cutoffs
from bilinvfa.formulations import BellmanRows
from bilinvfa.linprog import LinearProgramSpec, solve_lp


def random_lp(n_vars: int, n_rows: int, seed: int) -> LinearProgramSpec:
    """Feasible (x = 0 is strictly inside) and bounded (a box on x)."""
    rng = np.random.default_rng(seed)
    G = rng.normal(size=(n_rows, n_vars))
    h = -rng.uniform(0.1, 1.0, size=n_rows)
    c = rng.normal(size=n_vars)
    return LinearProgramSpec(c, G=G, h=h, lower=-np.ones(n_vars) * 10, upper=np.ones(n_vars) * 10)


def chain_alp(n_features: int, seed: int) -> LinearProgramSpec:
    mdp = make_chain(ChainSpec())
    basis = chain_basis(mdp.n_states, random_chain_cutoffs(mdp.n_states, n_features, np.random.default_rng(seed)))
    rows = BellmanRows.from_mdp(mdp, basis)
    c = np.full(mdp.n_states, 1.0 / mdp.n_states) @ basis.matrix
    return LinearProgramSpec(c, G=rows.lhs, h=rows.rhs)


def time_kernel(spec, kernel: str, repeats: int):
    best, sol = np.inf, None
    for _ in range(repeats):
        t0 = time.perf_counter()
        sol = solve_lp(spec, kernel=kernel)
        best = min(best, time.perf_counter() - t0)
    return best, sol


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--sizes", nargs="+", default=["20x200", "60x600", "120x1200"])
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    try:
        from bilinvfa.linprog import _kernels  # noqa: F401
    except ImportError:
        print("compiled kernel is not built; run `pip install -e . --no-build-isolation`")
        return 1

    cases = []
    for size in args.sizes:
        n, m = (int(t) for t in size.lower().split("x"))
        cases.append((f"random {n}x{m}", random_lp(n, m, args.seed)))
    cases.append(("chain ALP 16x400", chain_alp(15, args.seed)))

    print(f"{'problem':<20}{'pivots':>8}{'python s':>12}{'compiled s':>12}{'speedup':>9}")
    ok = True
    for name, spec in cases:
        t_py, s_py = time_kernel(spec, "python", args.repeats)
        t_c, s_c = time_kernel(spec, "compiled", args.repeats)
        same = s_py.status == s_c.status and (
            not s_py.optimal or abs(s_py.objective_value - s_c.objective_value)
            <= 1e-8 * (1 + abs(s_py.objective_value)))
        ok &= same
        flag = "" if same else "  MISMATCH"
        print(f"{name:<20}{s_c.iterations:>8}{t_py:>12.4f}{t_c:>12.4f}{t_py / t_c:>8.1f}x{flag}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
