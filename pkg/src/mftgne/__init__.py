"""Constrained mean-field-type LQ difference games solved through one LCP."""

from .assembly import LcpAssembly, assemble
from .equilibrium import EquilibriumSolution, TrajectorySample, simulate_path, solve_equilibrium
from .lcp import LcpSolution, LcpStatus, enumeration_solve, lemke_solve, pgs_solve
from .microgrid import MicrogridConfig, build_microgrid
from .model import ConstraintSpec, CostSpec, DynamicsSpec, GameSpec, load_spec, save_spec, validate_spec
from .pipeline import SolveOptions, SolveResult, run_solve
from .recursion import RecursionState, backward_pass
from .verification import (TestStrategy, best_response_check, cost_identity_check, evaluate_profile_cost,
                           small_instance_cross_check)

__all__ = [
    "ConstraintSpec", "CostSpec", "DynamicsSpec", "EquilibriumSolution", "GameSpec", "LcpAssembly",
    "LcpSolution", "LcpStatus", "MicrogridConfig", "RecursionState", "SolveOptions", "SolveResult",
    "TestStrategy", "TrajectorySample", "assemble", "backward_pass", "best_response_check", "build_microgrid",
    "cost_identity_check", "enumeration_solve", "evaluate_profile_cost", "lemke_solve", "load_spec",
    "pgs_solve", "run_solve", "save_spec", "simulate_path", "small_instance_cross_check", "solve_equilibrium",
    "validate_spec",
]

__version__ = "0.1.0"
