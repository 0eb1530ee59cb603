"""Stacked transition matrices and the single LCP in the multipliers.

Index maps (all zero-based, stage-major):

* controls / ``delta_bar``: ``k * N + i``
* multipliers / constraint rows: ``k * S + offset[i] + row`` with
  ``S = sum_i rows_i`` and ``offset`` the per-player row starts
* stacked states: ``k`` for ``k = 0..K-1`` (the terminal mean is not stacked)

Eliminating the mean state and the linear ``beta`` recursion leaves::

    P1 delta_bar = P2 mu + P3 c                     (P1 block upper triangular)
    slack        = M mu + Q,       0 <= slack  _|_  mu >= 0
    E[u]         = F mu + P
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

import numpy as np

from .errors import NonFiniteError, SingularP1
from .model import GameSpec, _ArrayRecord
from .recursion import CONDITION_LIMIT, RecursionState


def transition_products(rec: RecursionState):
    """Tables ``psi[k, tau]`` and ``phi[k, tau]`` for ``0 <= tau <= k <= K``.

    ``psi`` chains the closed-loop deviation coefficients ``A_cl``, ``phi``
    the mean coefficients ``A_bar_cl``; entries above the diagonal are zero.
    """
    K = rec.K
    psi = np.zeros((K + 1, K + 1))
    phi = np.zeros((K + 1, K + 1))
    for k in range(K + 1):
        psi[k, k] = 1.0
        phi[k, k] = 1.0
        if k > 0:
            # one multiply per entry from the row above
            psi[k, :k] = rec.A_cl[k - 1] * psi[k - 1, :k]
            phi[k, :k] = rec.A_bar_cl[k - 1] * phi[k - 1, :k]
    if not (np.all(np.isfinite(psi)) and np.all(np.isfinite(phi))):
        raise NonFiniteError("state transition products overflowed")
    return psi, phi


class StageBlocks(NamedTuple):
    P1: np.ndarray      # (N, N), zero diagonal
    P2: np.ndarray      # (N, S)
    P3: np.ndarray      # (N,)
    M_bar: np.ndarray   # (S,)
    N_bar: np.ndarray   # (S, N)
    N_own: np.ndarray   # (S, N), block diagonal in the players


def build_stage_blocks(k: int, rec: RecursionState, spec: GameSpec) -> StageBlocks:
    N = spec.N
    S = spec.rows_per_stage
    off = spec.row_offsets
    bt = spec.dynamics.b_total[k]
    ab_next = rec.alpha_bar[k + 1]
    Abar = rec.A_bar_cl[k]
    delta = rec.delta[k]

    r_tot = np.array([c.r[k] + c.r_bar[k] for c in spec.costs])   # [i, j]
    P1 = r_tot * delta[None, :] + Abar * np.outer(ab_next, bt)
    np.fill_diagonal(P1, 0.0)
    P3 = Abar * ab_next

    M_bar = np.zeros(S)
    N_bar = np.zeros((S, N))
    N_own = np.zeros((S, N))
    P2 = np.zeros((N, S))
    for i, con in enumerate(spec.constraints):
        rows = slice(off[i], off[i + 1])
        M_bar[rows] = con.m_bar[k] + delta @ con.n_bar[k]
        N_bar[rows] = con.n_bar[k].T
        N_own[rows, i] = con.n_bar[k, i]
        P2[i, rows] = M_bar[rows]
    return StageBlocks(P1, P2, P3, M_bar, N_bar, N_own)


@dataclass(frozen=True, eq=False)
class LcpAssembly(_ArrayRecord):
    psi: np.ndarray
    phi: np.ndarray
    Psi0: np.ndarray        # (K,)
    Psi1: np.ndarray        # (K, K)
    Phi0: np.ndarray        # (K,)
    Phi1: np.ndarray        # (K, N K)
    Phi2: np.ndarray        # (K, K)
    P1: np.ndarray          # (N K, N K)
    P2: np.ndarray          # (N K, m)
    P3: np.ndarray          # (N K, K)
    M_bar: np.ndarray       # (m, K)
    N_bar: np.ndarray       # (m, N K)
    p_stack: np.ndarray     # (m,)
    c_stack: np.ndarray     # (K,)
    eta_stack: np.ndarray   # (N K, K)
    delta_stack: np.ndarray  # (N K, K)
    stage_blocks: tuple
    players: int
    row_offsets: np.ndarray
    lcp_M: Optional[np.ndarray] = None
    lcp_Q: Optional[np.ndarray] = None
    F: Optional[np.ndarray] = None
    P: Optional[np.ndarray] = None
    solve_residual: float = float("nan")

    @property
    def K(self) -> int:
        return self.Phi0.shape[0]

    @property
    def m(self) -> int:
        return self.p_stack.shape[0]

    @property
    def rows_per_stage(self) -> int:
        return int(self.row_offsets[-1])

    def constraint_index(self, k: int, i: int, row: int) -> int:
        return k * self.rows_per_stage + int(self.row_offsets[i]) + row

    def control_index(self, k: int, i: int) -> int:
        return k * self.players + i


def build_stacked(rec: RecursionState, spec: GameSpec) -> LcpAssembly:
    K, N = spec.K, spec.N
    S = spec.rows_per_stage
    m = K * S
    dyn = spec.dynamics
    bt = dyn.b_total
    psi, phi = transition_products(rec)
    blocks = tuple(build_stage_blocks(k, rec, spec) for k in range(K))

    Psi0 = psi[:K, 0].copy()
    Phi0 = phi[:K, 0].copy()
    Psi1 = np.zeros((K, K))
    Phi1 = np.zeros((K, N * K))
    Phi2 = np.zeros((K, K))
    for k in range(1, K):
        for tau in range(k):
            Psi1[k, tau] = psi[k, tau + 1] * dyn.sigma[tau]
            Phi2[k, tau] = phi[k, tau + 1]
            Phi1[k, tau * N:(tau + 1) * N] = phi[k, tau + 1] * bt[tau]

    P1 = np.zeros((N * K, N * K))
    P2 = np.zeros((N * K, m))
    P3 = np.zeros((N * K, K))
    M_bar = np.zeros((m, K))
    N_bar = np.zeros((m, N * K))
    eta_stack = np.zeros((N * K, K))
    delta_stack = np.zeros((N * K, K))
    for k in range(K):
        blk = blocks[k]
        r = slice(k * N, (k + 1) * N)
        rows = slice(k * S, (k + 1) * S)
        P1[r, r] = rec.Lambda_bar[k]
        P2[r, rows] = blk.N_own.T
        P3[r, k] = -bt[k] * rec.alpha_bar[k + 1]
        for tau in range(k + 1, K):
            # delta_bar_k feels later stages through beta_{k+1}
            coupling = phi[tau, k + 1] * bt[k][:, None]
            P1[r, tau * N:(tau + 1) * N] = coupling * blocks[tau].P1
            P2[r, tau * S:(tau + 1) * S] = coupling * blocks[tau].P2
            P3[r, tau] = -(coupling[:, 0] * blocks[tau].P3)
        M_bar[rows, k] = blk.M_bar
        N_bar[rows, r] = blk.N_bar
        eta_stack[r, k] = rec.eta[k]
        delta_stack[r, k] = rec.delta[k]

    p_stack = np.concatenate([np.concatenate([con.p[k] for con in spec.constraints]) for k in range(K)])
    return LcpAssembly(
        psi=psi, phi=phi, Psi0=Psi0, Psi1=Psi1, Phi0=Phi0, Phi1=Phi1, Phi2=Phi2,
        P1=P1, P2=P2, P3=P3, M_bar=M_bar, N_bar=N_bar, p_stack=p_stack,
        c_stack=np.array(dyn.c, dtype=float), eta_stack=eta_stack, delta_stack=delta_stack,
        stage_blocks=blocks, players=N, row_offsets=spec.row_offsets,
    )


def block_back_substitute(P1: np.ndarray, rhs: np.ndarray, N: int) -> np.ndarray:
    """Solve ``P1 x = rhs`` for block upper-triangular ``P1`` with N x N blocks."""
    nK = P1.shape[0]
    K = nK // N
    vector = rhs.ndim == 1
    x = np.zeros((nK, 1) if vector else rhs.shape)
    b = rhs.reshape(nK, -1)
    for k in range(K - 1, -1, -1):
        r = slice(k * N, (k + 1) * N)
        acc = b[r] - P1[r, (k + 1) * N:] @ x[(k + 1) * N:]
        diag = P1[r, r]
        cond = np.linalg.cond(diag)
        if not np.isfinite(cond) or cond > CONDITION_LIMIT:
            raise SingularP1(k)
        x[r] = np.linalg.solve(diag, acc)
    return x[:, 0] if vector else x


def build_lcp(asm: LcpAssembly, spec: GameSpec) -> LcpAssembly:
    """Fill ``lcp_M``, ``lcp_Q``, ``F`` and ``P`` using block back-substitution."""
    N = spec.N
    x0 = spec.dynamics.initial_mean
    c = asm.c_stack
    X2 = block_back_substitute(asm.P1, asm.P2, N)
    x3 = block_back_substitute(asm.P1, asm.P3 @ c, N)
    res2 = np.max(np.abs(asm.P1 @ X2 - asm.P2), initial=0.0) / (1.0 + np.max(np.abs(asm.P2), initial=0.0))
    rhs3 = asm.P3 @ c
    res3 = np.max(np.abs(asm.P1 @ x3 - rhs3), initial=0.0) / (1.0 + np.max(np.abs(rhs3), initial=0.0))

    slack_map = asm.M_bar @ asm.Phi1 + asm.N_bar
    mean_feed = asm.M_bar @ (asm.Phi0 * x0 + asm.Phi2 @ c)
    lcp_M = slack_map @ X2
    lcp_Q = slack_map @ x3 + mean_feed + asm.p_stack

    gain_map = asm.delta_stack @ asm.Phi1 + np.eye(N * asm.K)
    F = gain_map @ X2
    P = asm.delta_stack @ (asm.Phi0 * x0) + gain_map @ x3 + asm.delta_stack @ (asm.Phi2 @ c)
    for arr in (lcp_M, lcp_Q, F, P):
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError("LCP data contains non-finite entries")
    return replace(asm, lcp_M=lcp_M, lcp_Q=lcp_Q, F=F, P=P, solve_residual=float(max(res2, res3)))


def assemble(rec: RecursionState, spec: GameSpec) -> LcpAssembly:
    return build_lcp(build_stacked(rec, spec), spec)
