"""Solvers for ``0 <= M z + q  _|_  z >= 0``.

``lemke_solve`` is the production path (complementary pivoting with an
all-ones covering vector and a lexicographic ratio test).  ``pgs_solve`` is
an iterative fallback for symmetric problems and ``enumeration_solve`` an
exhaustive oracle for small ``m``.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass

import numpy as np

from .errors import DimensionTooLarge, ZeroDiagonal

PIVOT_TOL = 1e-11
ACCEPT_TOL = 1e-8
MAX_ENUMERATION = 20


class LcpStatus(str, enum.Enum):
    SOLVED = "Solved"
    RAY_TERMINATION = "RayTermination"
    ITERATION_LIMIT = "IterationLimit"


@dataclass(frozen=True)
class LcpSolution:
    z: np.ndarray
    w: np.ndarray
    status: LcpStatus
    residual: float
    pivots_or_sweeps: int
    method: str = ""

    @property
    def solved(self) -> bool:
        return self.status is LcpStatus.SOLVED


def residual(M, q, z) -> float:
    """``|min(z, w)|_inf + |z^-|_inf + |w^-|_inf`` with ``w = M z + q``."""
    M = np.asarray(M, dtype=float)
    q = np.asarray(q, dtype=float)
    z = np.asarray(z, dtype=float)
    if z.size == 0:
        return 0.0
    w = M @ z + q
    comp = np.max(np.abs(np.minimum(z, w)))
    return float(comp + np.max(np.maximum(-z, 0.0)) + np.max(np.maximum(-w, 0.0)))


def acceptance_scale(q) -> float:
    return 1.0 + float(np.max(np.abs(q), initial=0.0))


def _finish(M, q, z, pivots, method, status=None):
    w = M @ z + q
    res = residual(M, q, z)
    if status is None:
        status = LcpStatus.SOLVED if res <= ACCEPT_TOL * acceptance_scale(q) else LcpStatus.ITERATION_LIMIT
    return LcpSolution(z, w, status, res, pivots, method)


def _lex_min_row(T, rows, col, m, ratio_col):
    """Lexicographic minimum ratio over candidate ``rows`` for entering ``col``.

    Compares ``(rhs_i, Binv_i) / d_i`` component by component; ``Binv`` are
    the tableau columns of the original slack block ``0..m-1``.
    """
    d = T[rows, col]
    cand = rows
    keys = T[cand, ratio_col] / d
    for j in itertools.chain([None], range(m)):
        if j is not None:
            keys = T[cand, j] / T[cand, col]
        best = keys.min()
        tie = np.abs(keys - best) <= 1e-12 * max(1.0, abs(best))
        cand = cand[tie]
        if cand.size == 1:
            return int(cand[0])
    return int(cand[0])


def lemke_solve(M, q, max_pivots: int | None = None, polish: bool = True) -> LcpSolution:
    """Lemke's complementary pivoting method.

    The tableau holds ``w - M z - e z0 = q``.  Termination on a secondary ray
    returns ``RayTermination``; exceeding ``max_pivots`` returns
    ``IterationLimit``.  On success the basis is re-solved directly
    (``M_SS z_S = -q_S``) when that tightens the residual.
    """
    M = np.asarray(M, dtype=float)
    q = np.asarray(q, dtype=float)
    m = q.shape[0]
    if max_pivots is None:
        max_pivots = 50 * m + 100
    if m == 0 or np.all(q >= 0):
        return _finish(M, q, np.zeros(m), 0, "lemke", LcpStatus.SOLVED)

    # columns: w_0..w_{m-1}, z_0..z_{m-1}, z0, rhs
    z0_col = 2 * m
    rhs = 2 * m + 1
    T = np.zeros((m, 2 * m + 2))
    T[:, :m] = np.eye(m)
    T[:, m:2 * m] = -M
    T[:, z0_col] = -1.0
    T[:, rhs] = q
    basis = np.arange(m)

    def pivot(row, col):
        T[row] /= T[row, col]
        colv = T[:, col].copy()
        colv[row] = 0.0
        T[:] -= np.outer(colv, T[row])
        leaving = basis[row]
        basis[row] = col
        return leaving

    # most negative q enters z0; ties go to the largest index to stay lex-feasible
    qmin = q.min()
    row = int(np.nonzero(q <= qmin + 1e-12 * max(1.0, abs(qmin)))[0][-1])
    leaving = pivot(row, z0_col)
    pivots = 1
    status = None
    while True:
        entering = leaving + m if leaving < m else leaving - m
        col = T[:, entering]
        rows = np.nonzero(col > PIVOT_TOL)[0]
        if rows.size == 0:
            status = LcpStatus.RAY_TERMINATION
            break
        if pivots >= max_pivots:
            status = LcpStatus.ITERATION_LIMIT
            break
        row = _lex_min_row(T, rows, entering, m, rhs)
        leaving = pivot(row, entering)
        pivots += 1
        if leaving == z0_col:
            break

    z = np.zeros(m)
    zb = basis >= m
    zb &= basis < 2 * m
    z[basis[zb] - m] = T[zb, rhs]
    if status is not None:
        return LcpSolution(z, M @ z + q, status, residual(M, q, z), pivots, "lemke")
    z = np.maximum(z, 0.0)
    if polish:
        support = np.sort(basis[zb] - m)
        if support.size:
            try:
                zs = np.linalg.solve(M[np.ix_(support, support)], -q[support])
            except np.linalg.LinAlgError:
                zs = None
            if zs is not None and np.all(np.isfinite(zs)):
                cand = np.zeros(m)
                cand[support] = np.maximum(zs, 0.0)
                if residual(M, q, cand) < residual(M, q, z):
                    z = cand
    return _finish(M, q, z, pivots, "lemke")


def pgs_solve(M, q, tol: float = 1e-12, max_sweeps: int = 100_000, z0=None) -> LcpSolution:
    """Projected Gauss-Seidel: ``z_i <- max(0, z_i - (M z + q)_i / M_ii)``."""
    M = np.asarray(M, dtype=float)
    q = np.asarray(q, dtype=float)
    m = q.shape[0]
    diag = np.diagonal(M)
    bad = np.nonzero(np.abs(diag) <= 1e-14)[0]
    if bad.size:
        raise ZeroDiagonal(int(bad[0]))
    z = np.zeros(m) if z0 is None else np.array(z0, dtype=float)
    for sweep in range(1, max_sweeps + 1):
        for i in range(m):
            wi = M[i] @ z + q[i]
            z[i] = max(0.0, z[i] - wi / diag[i])
        if residual(M, q, z) <= tol:
            return _finish(M, q, z, sweep, "pgs", LcpStatus.SOLVED)
    return _finish(M, q, z, max_sweeps, "pgs", LcpStatus.ITERATION_LIMIT)


def enumeration_solve(M, q, dedup_tol: float = 1e-9) -> list:
    """Every solution found over all ``2^m`` complementary supports.

    Supports are visited in increasing bitmask order, so the result order is
    deterministic.  Singular principal submatrices are skipped.
    """
    M = np.asarray(M, dtype=float)
    q = np.asarray(q, dtype=float)
    m = q.shape[0]
    if m > MAX_ENUMERATION:
        raise DimensionTooLarge(f"enumeration limited to m <= {MAX_ENUMERATION}, got {m}")
    found = []
    scale = acceptance_scale(q)
    for mask in range(1 << m):
        S = np.array([i for i in range(m) if mask >> i & 1], dtype=int)
        z = np.zeros(m)
        if S.size:
            sub = M[np.ix_(S, S)]
            if np.linalg.cond(sub) > 1e12:
                continue
            z[S] = np.linalg.solve(sub, -q[S])
        if np.any(z < -dedup_tol):
            continue
        w = M @ z + q
        comp = np.ones(m, dtype=bool)
        comp[S] = False
        if np.any(w[comp] < -dedup_tol * scale):
            continue
        z = np.maximum(z, 0.0)
        if any(np.max(np.abs(z - other.z)) <= dedup_tol for other in found):
            continue
        found.append(_finish(M, q, z, mask, "enumeration", LcpStatus.SOLVED))
    return found
