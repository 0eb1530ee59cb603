"""Equilibrium recovery from a solved multiplier vector.

Given ``mu`` (stacked stage-major, player-minor, row-innermost) this module
rebuilds the affine mean terms ``delta_bar``, the linear value coefficients
``beta`` and constants ``gamma``, the mean trajectory, expected costs and
sample paths.  Each quantity that has two algebraically equivalent routes is
computed both ways and the gap is recorded in ``EquilibriumSolution.checks``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import streams
from .assembly import LcpAssembly, block_back_substitute, build_stage_blocks, transition_products
from .lcp import acceptance_scale, residual
from .model import GameSpec, _ArrayRecord
from .recursion import RecursionState


def _mu_blocks(mu, spec: GameSpec) -> np.ndarray:
    return np.asarray(mu, dtype=float).reshape(spec.K, spec.rows_per_stage)


def _player_rows(spec: GameSpec, i: int) -> slice:
    off = spec.row_offsets
    return slice(off[i], off[i + 1])


def _r_total(spec: GameSpec, k: int) -> np.ndarray:
    return np.array([c.r[k] + c.r_bar[k] for c in spec.costs])


def recover_delta_bar(asm: LcpAssembly, mu, spec: GameSpec):
    """Solve the stacked system for ``delta_bar``; returns ``(delta_bar[k, i], residual)``."""
    mu = np.asarray(mu, dtype=float)
    rhs = asm.P2 @ mu + asm.P3 @ asm.c_stack
    x = block_back_substitute(asm.P1, rhs, spec.N)
    res = np.max(np.abs(asm.P1 @ x - rhs), initial=0.0) / (1.0 + np.max(np.abs(rhs), initial=0.0))
    return x.reshape(spec.K, spec.N), float(res)


def stagewise_delta_bar(rec: RecursionState, spec: GameSpec, mu):
    """Backward solve of the third stage equation interleaved with ``beta``.

    Independent of the stacked matrices; used to cross-check them.
    """
    K, N = spec.K, spec.N
    dyn = spec.dynamics
    mu_k = _mu_blocks(mu, spec)
    delta_bar = np.zeros((K, N))
    beta = np.zeros((K + 1, N))
    for k in range(K - 1, -1, -1):
        bt = dyn.b_total[k]
        own = np.array([spec.constraints[i].n_bar[k, i] @ mu_k[k, _player_rows(spec, i)] for i in range(N)])
        rhs = -bt * rec.alpha_bar[k + 1] * dyn.c[k] - bt * beta[k + 1] + own
        delta_bar[k] = np.linalg.solve(rec.Lambda_bar[k], rhs)
        beta[k] = _beta_step(k, rec, spec, mu_k[k], delta_bar[k], beta[k + 1])
    return delta_bar, beta


def _beta_step(k, rec, spec, mu_stage, delta_bar_k, beta_next):
    dyn = spec.dynamics
    N = spec.N
    Abar = rec.A_bar_cl[k]
    r_tot = _r_total(spec, k)
    bt = dyn.b_total[k]
    out = np.empty(N)
    for i in range(N):
        con = spec.constraints[i]
        cross = sum(
            (r_tot[i, j] * rec.delta[k, j] + Abar * rec.alpha_bar[k + 1, i] * bt[j]) * delta_bar_k[j]
            for j in range(N) if j != i
        )
        row_coef = con.m_bar[k] + rec.delta[k] @ con.n_bar[k]
        out[i] = (Abar * beta_next[i] + cross - row_coef @ mu_stage[_player_rows(spec, i)]
                  + Abar * rec.alpha_bar[k + 1, i] * dyn.c[k])
    return out


def recover_beta(rec: RecursionState, spec: GameSpec, mu, delta_bar):
    """Backward ``beta`` recursion; returns ``(beta[k, i], closed_form_gap)``.

    The gap compares against the unrolled sum over transition products
    ``beta_k = sum_tau phi(tau, k) (P1_tau dbar_tau - P2_tau mu_tau + P3_tau c_tau)``.
    """
    K, N = spec.K, spec.N
    mu_k = _mu_blocks(mu, spec)
    delta_bar = np.asarray(delta_bar, dtype=float).reshape(K, N)
    beta = np.zeros((K + 1, N))
    for k in range(K - 1, -1, -1):
        beta[k] = _beta_step(k, rec, spec, mu_k[k], delta_bar[k], beta[k + 1])

    _, phi = transition_products(rec)
    src = np.zeros((K, N))
    for tau in range(K):
        blk = build_stage_blocks(tau, rec, spec)
        src[tau] = blk.P1 @ delta_bar[tau] - blk.P2 @ mu_k[tau] + blk.P3 * spec.dynamics.c[tau]
    closed = np.zeros((K + 1, N))
    for k in range(K):
        closed[k] = phi[k:K, k] @ src[k:K]
    gap = np.max(np.abs(closed - beta)) / (1.0 + np.max(np.abs(beta)))
    return beta, float(gap)


def mean_rollout(rec: RecursionState, spec: GameSpec, delta_bar):
    """Forward mean state and stage-wise mean controls ``delta * E[x] + delta_bar``."""
    K = spec.K
    dyn = spec.dynamics
    delta_bar = np.asarray(delta_bar, dtype=float).reshape(K, spec.N)
    mean_x = np.zeros(K + 1)
    mean_x[0] = dyn.initial_mean
    for k in range(K):
        mean_x[k + 1] = rec.A_bar_cl[k] * mean_x[k] + dyn.b_total[k] @ delta_bar[k] + dyn.c[k]
    mean_u = rec.delta * mean_x[:K, None] + delta_bar
    return mean_x, mean_u


def stacked_means(asm: LcpAssembly, mu) -> np.ndarray:
    return (asm.F @ np.asarray(mu, dtype=float) + asm.P).reshape(asm.K, asm.players)


def gamma_and_costs(rec: RecursionState, spec: GameSpec, mu, delta_bar, beta):
    """Constant value terms ``gamma[k, i]`` and expected equilibrium costs."""
    K, N = spec.K, spec.N
    dyn = spec.dynamics
    mu_k = _mu_blocks(mu, spec)
    delta_bar = np.asarray(delta_bar, dtype=float).reshape(K, N)
    gamma = np.zeros((K + 1, N))
    for k in range(K - 1, -1, -1):
        bt = dyn.b_total[k]
        r_tot = _r_total(spec, k)
        drive = bt * delta_bar[k]             # (b^j + b_bar^j) dbar^j
        total_in = drive.sum() + dyn.c[k]
        for i in range(N):
            con = spec.constraints[i]
            mu_i = mu_k[k, _player_rows(spec, i)]
            others = [j for j in range(N) if j != i]
            others_in = drive[others].sum() + dyn.c[k]
            row_drive = delta_bar[k] @ con.n_bar[k]          # sum_j n_bar^{ij} dbar^j
            own_drive = con.n_bar[k, i] * delta_bar[k, i]
            gamma[k, i] = (
                gamma[k + 1, i]
                - 0.5 * beta[k + 1, i] * bt[i] * delta_bar[k, i]
                + 0.5 * sum(r_tot[i, j] * delta_bar[k, j] ** 2 for j in others)
                + 0.5 * total_in * (rec.alpha_bar[k + 1, i] * others_in + 2.0 * beta[k + 1, i])
                - 0.5 * mu_i @ (2.0 * row_drive - own_drive + 2.0 * con.p[k])
                + 0.5 * rec.alpha[k + 1, i] * dyn.sigma[k] ** 2 * dyn.noise_second_moment[k]
            )
    m0, v0 = dyn.initial_mean, dyn.initial_variance
    cost = 0.5 * rec.alpha[0] * v0 + 0.5 * rec.alpha_bar[0] * m0 ** 2 + beta[0] * m0 + gamma[0]
    return gamma, cost


@dataclass(frozen=True)
class ComplementarityReport:
    slacks: np.ndarray
    products: np.ndarray
    max_violation: float
    raw_gap: float
    scale: float

    @property
    def active(self) -> np.ndarray:
        return self.slacks <= 1e-8 * self.scale


def constraint_values(spec: GameSpec, rec: RecursionState, mean_x, delta_bar) -> np.ndarray:
    """Row values with the equilibrium mean-control law substituted, stacked."""
    K = spec.K
    delta_bar = np.asarray(delta_bar, dtype=float).reshape(K, spec.N)
    out = np.zeros((K, spec.rows_per_stage))
    for k in range(K):
        for i, con in enumerate(spec.constraints):
            coef = con.m_bar[k] + rec.delta[k] @ con.n_bar[k]
            out[k, _player_rows(spec, i)] = coef * mean_x[k] + delta_bar[k] @ con.n_bar[k] + con.p[k]
    return out.ravel()


def raw_constraint_values(spec: GameSpec, mean_x, mean_u) -> np.ndarray:
    """Row values from the original mean-state / mean-control form."""
    K = spec.K
    out = np.zeros((K, spec.rows_per_stage))
    for k in range(K):
        for i, con in enumerate(spec.constraints):
            out[k, _player_rows(spec, i)] = con.m_bar[k] * mean_x[k] + mean_u[k] @ con.n_bar[k] + con.p[k]
    return out.ravel()


def check_complementarity(spec, rec, mean_x, delta_bar, mu) -> ComplementarityReport:
    mu = np.asarray(mu, dtype=float)
    slacks = constraint_values(spec, rec, mean_x, delta_bar)
    mean_u = rec.delta * np.asarray(mean_x)[:spec.K, None] + np.asarray(delta_bar).reshape(spec.K, spec.N)
    raw = raw_constraint_values(spec, mean_x, mean_u)
    scale = 1.0 + max(np.max(np.abs(slacks), initial=0.0), np.max(np.abs(raw), initial=0.0))
    viol = np.max(np.abs(np.minimum(slacks, mu)), initial=0.0) \
        + np.max(np.maximum(-slacks, 0.0), initial=0.0) + np.max(np.maximum(-mu, 0.0), initial=0.0)
    raw_gap = float(np.max(np.abs(raw - slacks), initial=0.0) / scale)
    return ComplementarityReport(slacks, slacks * mu, float(viol), raw_gap, scale)


@dataclass(frozen=True, eq=False)
class EquilibriumSolution(_ArrayRecord):
    mu: np.ndarray
    delta_bar: np.ndarray       # (K, N)
    beta: np.ndarray            # (K + 1, N)
    gamma: np.ndarray           # (K + 1, N)
    mean_x: np.ndarray          # (K + 1,)
    mean_u: np.ndarray          # (K, N)
    expected_cost: np.ndarray   # (N,)
    slacks: np.ndarray          # (m,)
    checks: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return self.delta_bar.shape[0]

    @property
    def N(self) -> int:
        return self.delta_bar.shape[1]


def solve_equilibrium(spec: GameSpec, rec: RecursionState, asm: LcpAssembly, mu) -> EquilibriumSolution:
    """Recover the full equilibrium for multipliers ``mu`` and record dual-route gaps."""
    mu = np.asarray(mu, dtype=float)
    delta_bar, db_res = recover_delta_bar(asm, mu, spec)
    db_stage, beta_stage = stagewise_delta_bar(rec, spec, mu)
    beta, beta_gap = recover_beta(rec, spec, mu, delta_bar)
    mean_x, mean_u = mean_rollout(rec, spec, delta_bar)
    gamma, cost = gamma_and_costs(rec, spec, mu, delta_bar, beta)
    comp = check_complementarity(spec, rec, mean_x, delta_bar, mu)

    def rel(a, b):
        return float(np.max(np.abs(a - b), initial=0.0) / (1.0 + np.max(np.abs(b), initial=0.0)))

    checks = {
        "delta_bar_solve_residual": db_res,
        "delta_bar_stacked_vs_stagewise": rel(delta_bar, db_stage),
        "beta_recursion_vs_closed_form": beta_gap,
        "beta_recursion_vs_stagewise": rel(beta, beta_stage),
        "mean_u_stacked_vs_stagewise": rel(stacked_means(asm, mu), mean_u),
        "slack_raw_vs_substituted": comp.raw_gap,
        "complementarity": comp.max_violation,
        "complementarity_scale": comp.scale,
    }
    if asm.lcp_M is not None:
        checks["slack_vs_lcp_w"] = rel(asm.lcp_M @ mu + asm.lcp_Q, comp.slacks)
        checks["lcp_residual"] = residual(asm.lcp_M, asm.lcp_Q, mu)
        checks["lcp_scale"] = acceptance_scale(asm.lcp_Q)
    return EquilibriumSolution(mu, delta_bar, beta, gamma, mean_x, mean_u, cost, comp.slacks, checks)


# -- sample paths ---------------------------------------------------------------

@dataclass(frozen=True)
class TrajectorySample:
    seed: int
    x: np.ndarray               # (K + 1,)
    u: np.ndarray               # (K, N)
    w: np.ndarray               # (K,)
    realized_cost: np.ndarray   # (N,)
    stacked_gap: float = float("nan")


@dataclass(frozen=True)
class TrajectoryBatch:
    seeds: np.ndarray
    x: np.ndarray               # (P, K + 1)
    u: np.ndarray               # (P, K, N)
    w: np.ndarray               # (P, K)
    realized_cost: np.ndarray   # (P, N)

    def sample(self, p: int) -> TrajectorySample:
        return TrajectorySample(int(self.seeds[p]), self.x[p], self.u[p], self.w[p], self.realized_cost[p])


def draw_noise(spec: GameSpec, seeds):
    """Initial states ``x0`` (P,) and disturbances ``w`` (P, K) for each seed."""
    dyn = spec.dynamics
    seeds = np.atleast_1d(np.asarray(seeds, dtype=np.int64))
    x0 = dyn.initial_mean + np.sqrt(dyn.initial_variance) * streams.standard_normals(
        seeds, streams.initial_state_stream())
    w = np.empty((seeds.size, spec.K))
    for k in range(spec.K):
        w[:, k] = np.sqrt(dyn.noise_second_moment[k]) * streams.standard_normals(seeds, streams.noise_stream(k))
    return x0, w


def realized_costs(spec: GameSpec, x, u, mean_x, mean_u) -> np.ndarray:
    """Stage-additive cost of each path with population means in the mean terms."""
    K, N = spec.K, spec.N
    x = np.atleast_2d(x)
    u = u.reshape(x.shape[0], K, N)
    out = np.zeros((x.shape[0], N))
    for i, c in enumerate(spec.costs):
        state = c.q[None, :] * x ** 2 + (c.q_bar * mean_x ** 2)[None, :]
        ctrl = np.zeros(x.shape[0])
        for k in range(K):
            for j in range(N):
                ctrl = ctrl + c.r[k, j] * u[:, k, j] ** 2
        ctrl = ctrl + np.sum(c.r_bar * mean_u ** 2)
        out[:, i] = 0.5 * (state.sum(axis=1) + ctrl)
    return out


def simulate_paths(rec: RecursionState, spec: GameSpec, delta_bar, mean_x, seeds) -> TrajectoryBatch:
    """Roll the equilibrium feedback law forward along counter-based noise."""
    K = spec.K
    dyn = spec.dynamics
    seeds = np.atleast_1d(np.asarray(seeds, dtype=np.int64))
    mean_x = np.asarray(mean_x, dtype=float)
    mean_u = rec.delta * mean_x[:K, None] + np.asarray(delta_bar).reshape(K, spec.N)
    x0, w = draw_noise(spec, seeds)
    P = seeds.size
    x = np.empty((P, K + 1))
    u = np.empty((P, K, spec.N))
    x[:, 0] = x0
    for k in range(K):
        u[:, k] = mean_u[k][None, :] + rec.eta[k][None, :] * (x[:, k] - mean_x[k])[:, None]
        # per-player accumulation keeps each path bit-identical for any batch size
        nxt = dyn.a[k] * x[:, k] + (dyn.a_bar[k] * mean_x[k] + dyn.b_bar[k] @ mean_u[k] + dyn.c[k])
        for j in range(spec.N):
            nxt = nxt + dyn.b[k, j] * u[:, k, j]
        x[:, k + 1] = nxt + dyn.sigma[k] * w[:, k]
    cost = realized_costs(spec, x, u, mean_x, mean_u)
    return TrajectoryBatch(seeds, x, u, w, cost)


def stacked_control_deviation(asm: LcpAssembly, x0_dev, w) -> np.ndarray:
    """``eta_K (Psi0 (x0 - E x0) + Psi1 w)`` reshaped to ``(.., K, N)``."""
    w = np.atleast_2d(w)
    x0_dev = np.atleast_1d(x0_dev)
    dev_x = asm.Psi0[None, :] * x0_dev[:, None] + w @ asm.Psi1.T
    return (dev_x @ asm.eta_stack.T).reshape(w.shape[0], asm.K, asm.players)


def stacked_gap(asm: LcpAssembly, spec: GameSpec, batch: TrajectoryBatch, mean_u) -> np.ndarray:
    """Per-path max gap between stacked and recursive control deviations."""
    dev_rec = batch.u - np.asarray(mean_u)[None]
    dev_st = stacked_control_deviation(asm, batch.x[:, 0] - spec.dynamics.initial_mean, batch.w)
    scale = 1.0 + np.max(np.abs(dev_rec), axis=(1, 2))
    return np.max(np.abs(dev_rec - dev_st), axis=(1, 2)) / scale


def simulate_path(rec, spec, delta_bar, mean_x, seed: int, asm: LcpAssembly | None = None) -> TrajectorySample:
    batch = simulate_paths(rec, spec, delta_bar, mean_x, [seed])
    sample = batch.sample(0)
    if asm is not None:
        mean_u = rec.delta * np.asarray(mean_x)[:spec.K, None] + np.asarray(delta_bar).reshape(spec.K, spec.N)
        gap = float(stacked_gap(asm, spec, batch, mean_u)[0])
        sample = TrajectorySample(sample.seed, sample.x, sample.u, sample.w, sample.realized_cost, gap)
    return sample


def monte_carlo_costs(rec, spec, eq: EquilibriumSolution, n_paths: int, seed: int = 0, chunk: int = 20_000):
    """Sample mean and standard error of realized costs over ``n_paths`` seeds."""
    total = np.zeros(spec.N)
    total_sq = np.zeros(spec.N)
    for start in range(0, n_paths, chunk):
        seeds = seed + np.arange(start, min(n_paths, start + chunk))
        batch = simulate_paths(rec, spec, eq.delta_bar, eq.mean_x, seeds)
        total += batch.realized_cost.sum(axis=0)
        total_sq += (batch.realized_cost ** 2).sum(axis=0)
    mean = total / n_paths
    var = np.maximum(total_sq / n_paths - mean ** 2, 0.0) * n_paths / max(n_paths - 1, 1)
    return mean, np.sqrt(var / n_paths)
