"""Benchmark problem generators."""

from .chain import LEFT, RIGHT, ChainSpec, make_chain
from .fixtures import m2, random_mdp
from .mountain_car import MountainCarSpec, goal_state, make_mountain_car
from .sat import (
    CnfError,
    CnfFormula,
    dump_dimacs,
    enumerate_formulas,
    load_dimacs,
    parse_dimacs,
    random_cnf,
    sat_to_mdp,
    truth_assignment_coeffs,
)

__all__ = [name for name in dir() if not name.startswith("_")]
