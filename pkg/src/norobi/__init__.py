"""Exact toolkit for near-optimal robust bilevel and multilevel optimization."""

from .model import (
    Assignment,
    InstanceError,
    Kind,
    LevelProblem,
    LinearExpr,
    Mode,
    MultilevelInstance,
    NearOptimalitySpec,
    Variable,
    anticipation_graph,
    evaluate,
    load_instance,
    parse_instance,
    serialize_instance,
    validate,
)
from .reformulate import (
    build_adversarial,
    build_alt,
    build_gnormp_adversaries,
    build_pessimistic,
    epigraph_form,
    near_optimality_cut,
)
from .solve import compare, delta_sweep, solve, solve_canonical, solve_gnormp, solve_norbip
from .subsolver import (
    OptResult,
    Status,
    enumerate_integer,
    is_totally_unimodular,
    solve_hierarchical,
    solve_lp,
    solve_subproblem,
)
from .verify import verify, verify_gnormp, verify_nomimlp, verify_norbip

__version__ = "0.1.0"
