"""Command-line front end.

Subcommands::

    mftgne preset microgrid --output-dir DIR      write the microgrid instance file
    mftgne validate --input FILE                  check standing assumptions
    mftgne solve    --input FILE [--paths N]      equilibrium, means/paths/costs CSVs
    mftgne simulate --input FILE --paths N        Monte-Carlo paths and cost estimates
    mftgne verify   --input FILE --trials T       certification report
    mftgne export   --input FILE                  every CSV artifact, LCP data included

Exit codes: 0 success, 1 solver failure, 2 validation or data failure,
3 certification failure.  On failure a ``FAILED`` file naming the stage is
left in the output directory next to whatever was already written.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import export
from .equilibrium import monte_carlo_costs, simulate_paths, solve_equilibrium, stacked_gap
from .errors import MftgneError, PipelineError
from .microgrid import MicrogridConfig, build_microgrid
from .model import load_spec, save_spec, validate_spec
from .pipeline import (EXIT_CERTIFICATION, EXIT_DATA, EXIT_OK, STAGE_EXIT, SolveOptions, SolveResult,
                       ValidationFailed, run_solve)
from .verification import TestStrategy, best_response_check, cost_identity_check

IDENTITY_TOL = 1e-7
STACKED_NOISE_PATHS = 20


class _Failure(Exception):
    def __init__(self, stage, message, code):
        self.stage = stage
        self.code = code
        super().__init__(message)


def _common(p: argparse.ArgumentParser, paths_default: int = 1, trials_default: int = 200):
    p.add_argument("--input", required=True, help="instance JSON file")
    p.add_argument("--output-dir", default=".", help="directory for artifacts (created if missing)")
    p.add_argument("--solver", choices=("lemke", "pgs"), default="lemke")
    p.add_argument("--tol", type=float, default=1e-8, help="acceptance tolerance relative to 1 + max|Q|")
    p.add_argument("--max-pivots", type=int, default=None)
    p.add_argument("--paths", type=int, default=paths_default, help="number of sample paths")
    p.add_argument("--seed", type=int, default=0, help="first path seed; paths use seed, seed+1, ...")
    p.add_argument("--trials", type=int, default=trials_default, help="random deviations per player")
    p.add_argument("--enumerate", action="store_true", help="also enumerate every LCP solution (small m)")
    p.add_argument("--relaxed", action="store_true", help="skip cost sign checks; rely on recursion positivity")
    p.add_argument("--dump-recursion", action="store_true", help="write recursion.csv")
    p.add_argument("--dump-lcp", action="store_true", help="write lcp_M/Q/F/P.csv")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mftgne", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check an instance file")
    p.add_argument("--input", required=True)
    p.add_argument("--relaxed", action="store_true")

    _common(sub.add_parser("solve", help="solve and write means, paths and costs"))
    _common(sub.add_parser("simulate", help="solve and simulate sample paths"), paths_default=1000)
    _common(sub.add_parser("verify", help="solve and certify the equilibrium"))
    _common(sub.add_parser("export", help="solve and write every artifact"), paths_default=0)

    p = sub.add_parser("preset", help="write a built-in instance file")
    p.add_argument("name", choices=("microgrid",))
    p.add_argument("--output-dir", default=".")
    return parser


def _load(path) -> object:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise _Failure("load", f"cannot read {path}: {exc}", EXIT_DATA) from exc
    try:
        return load_spec(text)
    except MftgneError as exc:
        raise _Failure("load", str(exc), EXIT_DATA) from exc


def _solve(spec, args) -> SolveResult:
    opts = SolveOptions(solver=args.solver, tol=args.tol, max_pivots=args.max_pivots,
                        relaxed=args.relaxed, enumerate=args.enumerate)
    try:
        return run_solve(spec, opts)
    except PipelineError as exc:
        if isinstance(exc.cause, ValidationFailed):
            print("\n".join(exc.cause.report.lines()))
        raise _Failure(exc.stage, str(exc.cause), STAGE_EXIT.get(exc.stage, 1)) from exc


def _out_dir(args) -> Path:
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _summary(res: SolveResult) -> list:
    eq = res.eq
    K = res.spec.K
    active = int(np.count_nonzero(eq.mu > 0))
    lines = [
        f"instance: K={K} N={res.spec.N} m={res.spec.num_constraints}",
        f"solver: {res.lcp.method} {res.lcp.status.value} in {res.lcp.pivots_or_sweeps} steps",
        f"active multipliers: {active} of {eq.mu.size}",
        "",
        f"{'player':>6}  {'expected cost':>22}",
    ]
    lines += [f"{i:>6}  {c:>22.12g}" for i, c in enumerate(eq.expected_cost)]
    lines += ["", f"{'check':<34}{'value':>12}{'limit':>12}  ok"]
    lines += [f"{c.name:<34}{c.value:>12.3e}{c.limit:>12.3e}  {'yes' if c.ok else 'NO'}" for c in res.certificates]
    lines += ["", "timings: " + ", ".join(f"{k} {v:.3f}s" for k, v in res.timings.items())]
    return lines


def _write_solution(out: Path, res: SolveResult, args, batch=None, mc=None):
    export.write_means(out / "means.csv", res.spec, res.eq)
    mean, err = mc if mc is not None else (None, None)
    export.write_costs(out / "costs.csv", res.eq, mean, err)
    if args.dump_recursion:
        export.write_recursion(out / "recursion.csv", res.rec)
    if args.dump_lcp:
        export.write_lcp(out, res.asm)
    if args.enumerate:
        _write_enumeration(out, res, args)


def _write_enumeration(out: Path, res: SolveResult, args):
    spec = res.spec
    rows = []
    for n, sol in enumerate(res.alternatives):
        eq = solve_equilibrium(spec, res.rec, res.asm, sol.z)
        br = best_response_check(spec, res.rec, eq, trials=args.trials, seed=args.seed)
        comp = eq.checks["complementarity"]
        ok = comp <= args.tol * eq.checks["complementarity_scale"] and br.passed
        rows.append([n, "yes" if ok else "no", comp, br.worst, *eq.expected_cost, *sol.z])
    header = (["solution", "certified", "complementarity", "worst_gap"]
              + [f"expected_cost_{i}" for i in range(spec.N)] + export._mu_labels(res.asm))
    export.write_rows(out / "enumeration.csv", header, rows)


def _simulate(res: SolveResult, args):
    if args.paths <= 0:
        return None, None
    seeds = args.seed + np.arange(args.paths)
    batch = simulate_paths(res.rec, res.spec, res.eq.delta_bar, res.eq.mean_x, seeds)
    if args.paths == 1:
        return batch, (batch.realized_cost[0], None)
    return batch, monte_carlo_costs(res.rec, res.spec, res.eq, args.paths, seed=args.seed)


def cmd_validate(args) -> int:
    spec = _load(args.input)
    try:
        report = validate_spec(spec, relaxed=args.relaxed)
    except MftgneError as exc:
        raise _Failure("validate", str(exc), EXIT_DATA) from exc
    if report.ok:
        print(f"ok: K={spec.K} N={spec.N} m={spec.num_constraints}")
        return EXIT_OK
    print("\n".join(report.lines()))
    return EXIT_DATA


def cmd_solve(args) -> int:
    out = _out_dir(args)
    res = _solve(_load(args.input), args)
    batch, mc = _simulate(res, args)
    _write_solution(out, res, args, batch, mc)
    if batch is not None:
        export.write_paths(out / "paths.csv", res.spec, batch)
        export.write_plot_data(out / "plot_data.csv", res.spec, res.eq, batch)
    print("\n".join(_summary(res)))
    return EXIT_OK if res.certified else EXIT_CERTIFICATION


def cmd_export(args) -> int:
    out = _out_dir(args)
    res = _solve(_load(args.input), args)
    batch, mc = _simulate(res, args)
    args.dump_recursion = args.dump_lcp = True
    _write_solution(out, res, args, batch, mc)
    export.write_plot_data(out / "plot_data.csv", res.spec, res.eq, batch)
    if batch is not None:
        export.write_paths(out / "paths.csv", res.spec, batch)
    print("\n".join(_summary(res)))
    return EXIT_OK if res.certified else EXIT_CERTIFICATION


def certification_report(res: SolveResult, trials: int, seed: int) -> dict:
    """Every certificate of a solve plus identity, best-response and stacked-noise checks."""
    spec, rec, eq = res.spec, res.rec, res.eq
    rng = np.random.default_rng(seed)
    identity = 0.0
    for _ in range(trials):
        i = int(rng.integers(spec.N))
        mean_seq = eq.mean_u[:, i] + (1.0 + np.abs(eq.mean_u[:, i])) * rng.uniform(-1, 1, spec.K)
        gain_seq = rec.eta[:, i] + (1.0 + np.abs(rec.eta[:, i])) * rng.uniform(-1, 1, spec.K)
        identity = max(identity, cost_identity_check(spec, rec, eq, TestStrategy(i, mean_seq, gain_seq)))
    br = best_response_check(spec, rec, eq, trials=trials, seed=seed)
    seeds = seed + np.arange(STACKED_NOISE_PATHS)
    batch = simulate_paths(rec, spec, eq.delta_bar, eq.mean_x, seeds)
    noise_gap = float(np.max(stacked_gap(res.asm, spec, batch, eq.mean_u)))
    checks = {c.name: {"value": float(c.value), "limit": float(c.limit), "ok": c.ok} for c in res.certificates}
    checks["cost_identity"] = {"value": float(identity), "limit": IDENTITY_TOL, "ok": bool(identity <= IDENTITY_TOL)}
    checks["stacked_noise_law"] = {"value": noise_gap, "limit": 1e-10, "ok": bool(noise_gap <= 1e-10)}
    gaps = {str(i): float(g) for i, g in br.worst_gap.items()}
    checks["best_response"] = {"value": float(-br.worst), "limit": br.tolerance, "ok": bool(br.passed)}
    return {
        "certified": all(c["ok"] for c in checks.values()),
        "instance": {"K": spec.K, "N": spec.N, "m": spec.num_constraints},
        "solver": {"method": res.lcp.method, "status": res.lcp.status.value, "steps": res.lcp.pivots_or_sweeps},
        "trials": trials,
        "seed": seed,
        "expected_cost": [float(c) for c in eq.expected_cost],
        "worst_gap": gaps,
        "checks": checks,
    }


def report_lines(report: dict) -> list:
    lines = [f"{'check':<34}{'value':>12}{'limit':>12}  ok"]
    for name, c in report["checks"].items():
        lines.append(f"{name:<34}{c['value']:>12.3e}{c['limit']:>12.3e}  {'yes' if c['ok'] else 'NO'}")
    lines.append("worst best-response gap per player: "
                 + ", ".join(f"{i}: {g:.3e}" for i, g in report["worst_gap"].items()))
    lines.append("certified" if report["certified"] else "NOT certified")
    return lines


def cmd_verify(args) -> int:
    out = _out_dir(args)
    res = _solve(_load(args.input), args)
    try:
        report = certification_report(res, args.trials, args.seed)
    except MftgneError as exc:
        raise _Failure("verify", str(exc), EXIT_CERTIFICATION) from exc
    (out / "verification.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    lines = report_lines(report)
    (out / "verification.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    return EXIT_OK if report["certified"] else EXIT_CERTIFICATION


def cmd_simulate(args) -> int:
    out = _out_dir(args)
    res = _solve(_load(args.input), args)
    batch, mc = _simulate(res, args)
    if batch is None:
        raise _Failure("simulate", "--paths must be positive", EXIT_DATA)
    export.write_paths(out / "paths.csv", res.spec, batch)
    export.write_costs(out / "costs.csv", res.eq, *mc)
    export.write_plot_data(out / "plot_data.csv", res.spec, res.eq, batch)
    mean, err = mc
    for i, c in enumerate(res.eq.expected_cost):
        line = f"player {i}: analytic {c:.12g}  sample mean {mean[i]:.12g}"
        if err is not None:
            line += f"  stderr {err[i]:.3g}  z {(mean[i] - c) / err[i]:+.2f}"
        print(line)
    return EXIT_OK


def cmd_preset(args) -> int:
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{args.name}.json"
    path.write_text(save_spec(build_microgrid(MicrogridConfig())), encoding="utf-8")
    print(path)
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "export": cmd_export,
    "preset": cmd_preset,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(getattr(args, "output_dir", ".")) if args.command != "validate" else None
    marker = out / "FAILED" if out is not None else None
    try:
        code = COMMANDS[args.command](args)
    except _Failure as exc:
        print(f"error [{exc.stage}]: {exc}", file=sys.stderr)
        if marker is not None:
            marker.parent.mkdir(parents=True, exist_ok=True)
            marker.write_text(f"stage: {exc.stage}\n{exc}\n", encoding="utf-8")
        return exc.code
    if marker is not None:
        if code == EXIT_OK:
            marker.unlink(missing_ok=True)
        else:
            marker.write_text(f"stage: certification\nexit code {code}\n", encoding="utf-8")
    return code
