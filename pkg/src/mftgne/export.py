"""CSV artifacts.

Dialect: comma separated, header row, LF line endings, floats written with
17 significant digits so every value round-trips exactly.  Undefined cells
(controls at the terminal stage, an uncomputed estimate) are left empty.
Indices in files are 0-based, matching the in-memory arrays.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .assembly import LcpAssembly
from .equilibrium import EquilibriumSolution, TrajectoryBatch
from .model import GameSpec
from .recursion import RecursionState


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    v = float(value) + 0.0  # folds -0.0 into 0.0
    if np.isnan(v):
        return ""
    return format(v, ".17g")


def write_rows(path: Path, header, rows, comments=()) -> Path:
    buf = io.StringIO()
    for line in comments:
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) if not isinstance(v, str) else v for v in row])
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(buf.getvalue())
    return path


def read_rows(path: Path):
    """Header and rows of a CSV written by :func:`write_rows`, skipping comments."""
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    return header, list(reader)


def slack_labels(spec: GameSpec) -> list:
    return [f"slack_i{i}_r{r}" for i in range(spec.N) for r in range(spec.rows[i])]


def write_means(path, spec: GameSpec, eq: EquilibriumSolution) -> Path:
    K, N = spec.K, spec.N
    header = ["k", "mean_x"] + [f"mean_u_{i}" for i in range(N)] + slack_labels(spec)
    slacks = eq.slacks.reshape(K, spec.rows_per_stage)
    rows = []
    for k in range(K + 1):
        if k < K:
            rows.append([k, eq.mean_x[k], *eq.mean_u[k], *slacks[k]])
        else:
            rows.append([k, eq.mean_x[k]] + [None] * (N + spec.rows_per_stage))
    return write_rows(path, header, rows)


def write_paths(path, spec: GameSpec, batch: TrajectoryBatch) -> Path:
    K, N = spec.K, spec.N
    header = ["seed", "k", "x"] + [f"u_{i}" for i in range(N)] + ["w"]
    rows = []
    for p, seed in enumerate(batch.seeds):
        for k in range(K + 1):
            if k < K:
                rows.append([int(seed), k, batch.x[p, k], *batch.u[p, k], batch.w[p, k]])
            else:
                rows.append([int(seed), k, batch.x[p, k]] + [None] * (N + 1))
    return write_rows(path, header, rows)


def write_costs(path, eq: EquilibriumSolution, mc_mean=None, mc_stderr=None) -> Path:
    rows = []
    for i, cost in enumerate(eq.expected_cost):
        est = None if mc_mean is None else mc_mean[i]
        err = None if mc_stderr is None else mc_stderr[i]
        rows.append([i, cost, est, err])
    return write_rows(path, ["i", "expected_cost", "mc_estimate", "mc_stderr"], rows)


def write_plot_data(path, spec: GameSpec, eq: EquilibriumSolution, batch: TrajectoryBatch | None = None) -> Path:
    """Tidy per-stage columns: demand, mean and sampled controls, state, disturbance.

    ``load`` is the negated drift ``-c_k``; the sampled columns come from
    the first path of ``batch`` and are empty without one.
    """
    K, N = spec.K, spec.N
    header = (["k", "load"] + [f"mean_u_{i}" for i in range(N)] + [f"u_{i}" for i in range(N)]
              + ["mean_x", "x", "x_minus_mean", "w"])
    rows = []
    for k in range(K + 1):
        load = -spec.dynamics.c[k] if k < K else None
        mean_u = list(eq.mean_u[k]) if k < K else [None] * N
        if batch is not None:
            u = list(batch.u[0, k]) if k < K else [None] * N
            x = batch.x[0, k]
            dev = x - eq.mean_x[k]
            w = batch.w[0, k] if k < K else None
        else:
            u, x, dev, w = [None] * N, None, None, None
        rows.append([k, load, *mean_u, *u, eq.mean_x[k], x, dev, w])
    return write_rows(path, header, rows)


def write_recursion(path, rec: RecursionState) -> Path:
    K, N = rec.K, rec.N
    header = ["k", "i", "alpha", "alpha_bar", "eta", "delta", "A_pos", "D_pos"]
    rows = []
    for k in range(K + 1):
        for i in range(N):
            if k < K:
                rows.append([k, i, rec.alpha[k, i], rec.alpha_bar[k, i], rec.eta[k, i], rec.delta[k, i],
                             rec.A_pos[k, i], rec.D_pos[k, i]])
            else:
                rows.append([k, i, rec.alpha[k, i], rec.alpha_bar[k, i], None, None, None, None])
    return write_rows(path, header, rows)


def _mu_labels(asm: LcpAssembly) -> list:
    rows = np.diff(asm.row_offsets)
    return [f"mu_k{k}_i{i}_r{r}" for k in range(asm.K) for i in range(asm.players) for r in range(rows[i])]


def _u_labels(asm: LcpAssembly) -> list:
    return [f"ubar_k{k}_i{i}" for k in range(asm.K) for i in range(asm.players)]


def _index_map(asm: LcpAssembly) -> list:
    rows = [int(r) for r in np.diff(asm.row_offsets)]
    return [
        f"multiplier index = k * {asm.rows_per_stage} + offset[i] + r, offset = {list(map(int, asm.row_offsets[:-1]))},"
        f" rows per player = {rows}",
        f"control index = k * {asm.players} + i",
        "slack = M mu + Q ; mean control = F mu + P",
    ]


def write_matrix(path, matrix, row_labels, col_labels, comments=()) -> Path:
    matrix = np.atleast_2d(matrix)
    rows = [[row_labels[r], *matrix[r]] for r in range(matrix.shape[0])]
    return write_rows(path, ["row", *col_labels], rows, comments)


def write_lcp(out_dir, asm: LcpAssembly) -> list:
    out_dir = Path(out_dir)
    mu, ub = _mu_labels(asm), _u_labels(asm)
    notes = _index_map(asm)
    return [
        write_matrix(out_dir / "lcp_M.csv", asm.lcp_M, mu, mu, notes),
        write_matrix(out_dir / "lcp_Q.csv", asm.lcp_Q[:, None], mu, ["value"], notes),
        write_matrix(out_dir / "lcp_F.csv", asm.F, ub, mu, notes),
        write_matrix(out_dir / "lcp_P.csv", asm.P[:, None], ub, ["value"], notes),
    ]


def read_matrix(path) -> np.ndarray:
    _, rows = read_rows(path)
    return np.array([[float(v) for v in row[1:]] for row in rows])


def read_lcp(out_dir):
    """``(M, Q)`` from a directory written by :func:`write_lcp`."""
    out_dir = Path(out_dir)
    return read_matrix(out_dir / "lcp_M.csv"), read_matrix(out_dir / "lcp_Q.csv")[:, 0]
