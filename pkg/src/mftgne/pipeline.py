"""End-to-end solve: validate, recurse, assemble, solve the LCP, recover, certify."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .assembly import LcpAssembly, assemble
from .equilibrium import EquilibriumSolution, solve_equilibrium
from .errors import MftgneError, PipelineError, SpecError
from .lcp import LcpSolution, LcpStatus, enumeration_solve, lemke_solve, pgs_solve
from .model import GameSpec, ValidationReport, validate_spec
from .recursion import RecursionState, backward_pass

EXIT_OK = 0
EXIT_SOLVER = 1
EXIT_DATA = 2
EXIT_CERTIFICATION = 3

# stage name -> exit code when that stage raises
STAGE_EXIT = {
    "load": EXIT_DATA,
    "validate": EXIT_DATA,
    "recursion": EXIT_DATA,
    "assembly": EXIT_SOLVER,
    "lcp": EXIT_SOLVER,
    "recovery": EXIT_SOLVER,
    "simulate": EXIT_SOLVER,
    "verify": EXIT_CERTIFICATION,
    "export": EXIT_SOLVER,
}

# symmetric matrices may fall back to projected Gauss-Seidel
SYMMETRY_TOL = 1e-10
DUAL_ROUTE_TOL = 1e-10


class ValidationFailed(SpecError):
    def __init__(self, report: ValidationReport):
        self.report = report
        super().__init__("instance violates standing assumptions:\n  " + "\n  ".join(report.lines()))


@dataclass
class SolveOptions:
    solver: str = "lemke"
    tol: float = 1e-8
    max_pivots: int | None = None
    relaxed: bool = False
    enumerate: bool = False


@dataclass
class Certificate:
    name: str
    value: float
    limit: float

    @property
    def ok(self) -> bool:
        return bool(np.isfinite(self.value) and self.value <= self.limit)


@dataclass
class SolveResult:
    spec: GameSpec
    report: ValidationReport
    rec: RecursionState
    asm: LcpAssembly
    lcp: LcpSolution
    eq: EquilibriumSolution
    certificates: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    alternatives: list = field(default_factory=list)   # enumerated solutions, if requested

    @property
    def certified(self) -> bool:
        return all(c.ok for c in self.certificates)


def solve_lcp(M, q, options: SolveOptions) -> LcpSolution:
    """Run the requested solver; Lemke falls back to PGS on a ray for symmetric ``M``."""
    if options.solver == "pgs":
        return pgs_solve(M, q)
    if options.solver != "lemke":
        raise ValueError(f"unknown solver {options.solver!r}")
    sol = lemke_solve(M, q, max_pivots=options.max_pivots)
    if sol.status is LcpStatus.RAY_TERMINATION and np.allclose(M, M.T, rtol=0.0, atol=SYMMETRY_TOL):
        alt = pgs_solve(M, q)
        if alt.solved:
            return alt
    return sol


def certificates_for(eq: EquilibriumSolution, tol: float) -> list:
    c = eq.checks
    out = [
        Certificate("lcp_residual", c["lcp_residual"], tol * c["lcp_scale"]),
        Certificate("complementarity", c["complementarity"], tol * c["complementarity_scale"]),
    ]
    for name in ("delta_bar_solve_residual", "delta_bar_stacked_vs_stagewise", "beta_recursion_vs_closed_form",
                 "beta_recursion_vs_stagewise", "mean_u_stacked_vs_stagewise", "slack_raw_vs_substituted"):
        out.append(Certificate(name, c[name], DUAL_ROUTE_TOL))
    out.append(Certificate("slack_vs_lcp_w", c["slack_vs_lcp_w"], tol))
    return out


def _stage(name, timings, fn, *args, **kwargs):
    t0 = time.perf_counter()
    try:
        return fn(*args, **kwargs)
    except PipelineError:
        raise
    except (MftgneError, np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
        raise PipelineError(name, exc) from exc
    finally:
        timings[name] = time.perf_counter() - t0


def _validated(spec, relaxed):
    report = validate_spec(spec, relaxed=relaxed)
    if not report.ok:
        raise ValidationFailed(report)
    return report


def run_solve(spec: GameSpec, options: SolveOptions | None = None) -> SolveResult:
    """Solve ``spec`` and attach certificates.

    Raises :class:`PipelineError` naming the failing stage.  A solver that
    ends without a solution raises with stage ``"lcp"``.
    """
    options = options or SolveOptions()
    timings = {}
    report = _stage("validate", timings, _validated, spec, options.relaxed)
    rec = _stage("recursion", timings, backward_pass, spec)
    asm = _stage("assembly", timings, assemble, rec, spec)
    lcp = _stage("lcp", timings, solve_lcp, asm.lcp_M, asm.lcp_Q, options)
    if not lcp.solved:
        raise PipelineError("lcp", MftgneError(
            f"{lcp.method} ended with {lcp.status.value} after {lcp.pivots_or_sweeps} steps "
            f"(residual {lcp.residual:.3e}); equilibrium existence undetermined"))
    eq = _stage("recovery", timings, solve_equilibrium, spec, rec, asm, lcp.z)
    alternatives = []
    if options.enumerate:
        alternatives = _stage("lcp", timings, enumeration_solve, asm.lcp_M, asm.lcp_Q)
    return SolveResult(spec, report, rec, asm, lcp, eq, certificates_for(eq, options.tol), timings, alternatives)
