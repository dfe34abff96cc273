"""Command line entry point: ``bilinvfa <command> [options]``.

Exit status is 0 on success, 2 for configuration errors and 1 when a run
fails.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..benchmarks import (
    ChainSpec,
    MountainCarSpec,
    dump_dimacs,
    load_dimacs,
    make_chain,
    make_mountain_car,
    random_cnf,
    random_mdp,
    sat_to_mdp,
)
from ..features import save_basis
from ..formulations import AbpVariant, abp_exact_oracle
from ..mdp import save_mdp
from .experiment import (
    FORMATS,
    METHODS,
    ConfigError,
    ExperimentConfig,
    emit,
    run_experiment,
    summarize,
)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _experiment_flags(p):
    # defaults are suppressed so that only flags actually given override --config
    S = argparse.SUPPRESS
    p.add_argument("--config", help="JSON file with ExperimentConfig fields")
    p.add_argument("--methods", default=S, help=f"comma-separated subset of {','.join(METHODS)}")
    p.add_argument("--n-features", type=int, default=S)
    p.add_argument("--n-runs", type=int, default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--hybrid-k", type=float, default=S)
    p.add_argument("--n-starts", type=int, default=S)
    p.add_argument("--max-iters", type=int, default=S)
    p.add_argument("--api-max-iters", type=int, default=S)
    p.add_argument("--gamma", type=float, default=S)
    p.add_argument("--output", "-o", default=S, help="result file (stdout when omitted)")
    p.add_argument("--format", choices=FORMATS, default=S)
    p.add_argument("--summary", action="store_true",
                   help="emit mean/std per method and metric instead of raw records")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bilinvfa", description="Bilinear value function approximation experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    S = argparse.SUPPRESS

    p = sub.add_parser("bench-chain", help="chain problem comparison")
    _experiment_flags(p)
    p.add_argument("--n-states", type=int, default=S)

    p = sub.add_parser("bench-mcar", help="sampled mountain-car comparison")
    _experiment_flags(p)
    p.add_argument("--grid", type=int, default=S)
    p.add_argument("--n-sample-states", type=int, default=S)

    p = sub.add_parser("sat", help="methods on the reduction of a 3-CNF formula")
    _experiment_flags(p)
    p.add_argument("--cnf", dest="cnf_path", default=S, help="DIMACS file")
    p.add_argument("--with-constant", action="store_true", default=S,
                   help="use the variant with an all-ones feature and an anchor state")
    p.add_argument("--oracle", action="store_true",
                   help="print the exact robust residual and the satisfiability verdict instead")

    p = sub.add_parser("solve", help="one method on an MDP and basis read from JSON files")
    _experiment_flags(p)
    p.add_argument("--mdp", dest="mdp_path", default=S)
    p.add_argument("--basis", dest="basis_path", default=S)
    p.add_argument("--method", dest="methods", default=S)
    p.add_argument("--save-value", help="write the value function as a JSON list")

    p = sub.add_parser("gen-chain", help="write the chain MDP")
    p.add_argument("--out", required=True)
    p.add_argument("--n-states", type=int, default=200)
    p.add_argument("--gamma", type=float, default=0.95)

    p = sub.add_parser("gen-mcar", help="write the discretized mountain-car MDP")
    p.add_argument("--out", required=True)
    p.add_argument("--grid", type=int, default=60)
    p.add_argument("--gamma", type=float, default=0.99)

    p = sub.add_parser("gen-random", help="write a random MDP fixture")
    p.add_argument("--out", required=True)
    p.add_argument("--n-states", type=int, default=5)
    p.add_argument("--n-actions", type=int, default=2)
    p.add_argument("--gamma", type=float, default=0.9)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("gen-sat", help="write a random 3-CNF and optionally its reduction")
    p.add_argument("--out", required=True, help="DIMACS output")
    p.add_argument("--n-vars", type=int, default=4)
    p.add_argument("--n-clauses", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gamma", type=float, default=0.95)
    p.add_argument("--mdp-out")
    p.add_argument("--basis-out")
    return parser


_BENCHMARK = {"bench-chain": "chain", "bench-mcar": "mountain_car", "sat": "sat", "solve": "file"}
_CLI_ONLY = {"command", "config", "summary", "oracle", "save_value"}


def config_from_args(args) -> ExperimentConfig:
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"cannot read config {args.config}: {err}") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
    data.update({k: v for k, v in vars(args).items() if k not in _CLI_ONLY})
    data["benchmark"] = _BENCHMARK[args.command]
    try:
        return ExperimentConfig.from_dict(data)
    except TypeError as err:
        raise ConfigError(str(err)) from None


def _run(args) -> int:
    config = config_from_args(args)
    if args.command == "sat" and args.oracle:
        formula = load_dimacs(config.cnf_path)
        gamma = 0.95 if config.gamma is None else config.gamma
        mdp, basis = sat_to_mdp(formula, gamma, config.with_constant)
        value = abp_exact_oracle(mdp, basis, AbpVariant("robust_linf"), require_constant=False).objective
        print(json.dumps({"satisfiable": formula.is_satisfiable(), "residual": value,
                          "threshold": 1.0 - gamma ** 2}))
        return EXIT_OK
    if args.command == "solve" and len(config.methods) != 1:
        raise ConfigError("solve takes exactly one --method")
    records = run_experiment(config)
    items = summarize(records) if args.summary else records
    text = emit(items, config.format, config.output)
    if config.output is None:
        sys.stdout.write(text)
    if getattr(args, "save_value", None):
        value = records[0].value
        Path(args.save_value).write_text(json.dumps(None if value is None else value.tolist()))
    failed = [r for r in records if r.error]
    for r in failed:
        print(f"run {r.run_id} {r.method}: {r.error}", file=sys.stderr)
    return EXIT_FAIL if failed and len(failed) == len(records) else EXIT_OK


def _generate(args) -> int:
    if args.command == "gen-chain":
        save_mdp(make_chain(ChainSpec(n_states=args.n_states, gamma=args.gamma,
                                      init_state=min(130, args.n_states))), args.out)
    elif args.command == "gen-mcar":
        mdp, _ = make_mountain_car(MountainCarSpec(grid_pos=args.grid, grid_vel=args.grid, gamma=args.gamma))
        save_mdp(mdp, args.out)
    elif args.command == "gen-random":
        save_mdp(random_mdp(args.n_states, args.n_actions, seed=args.seed, gamma=args.gamma), args.out)
    else:
        formula = random_cnf(args.n_vars, args.n_clauses, seed=args.seed)
        Path(args.out).write_text(dump_dimacs(formula))
        if args.mdp_out or args.basis_out:
            mdp, basis = sat_to_mdp(formula, args.gamma)
            if args.mdp_out:
                save_mdp(mdp, args.mdp_out)
            if args.basis_out:
                save_basis(basis, args.basis_out)
    return EXIT_OK


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command.startswith("gen-"):
            return _generate(args)
        return _run(args)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as err:  # any runtime failure maps to a nonzero status
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
