"""Independent certification of a computed equilibrium.

Deviations of one player are drawn from the family
``u_k = mean_seq[k] + gain_seq[k] * (x_k - E[x_k])`` while every opponent
keeps its equilibrium law.  Inside this family first and second moments
propagate in closed form, so expected costs are exact.  Three checks are
built on that:

* the completion-of-squares identity: a deviation's cost equals the
  equilibrium baseline plus multiplier-weighted slacks plus two quadratic
  penalties weighted by ``A_pos`` and ``D_pos``;
* randomized best-response search over feasible deviations;
* exhaustive LCP enumeration on small instances.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import streams
from .assembly import assemble
from .equilibrium import EquilibriumSolution, check_complementarity, solve_equilibrium
from .errors import InfeasibleProjection
from .lcp import acceptance_scale, enumeration_solve
from .model import GameSpec
from .recursion import RecursionState, backward_pass


@dataclass(frozen=True)
class TestStrategy:
    player: int
    mean_seq: np.ndarray
    gain_seq: np.ndarray

    __test__ = False  # not a pytest class


def equilibrium_strategy(rec: RecursionState, eq: EquilibriumSolution, player: int) -> TestStrategy:
    return TestStrategy(player, np.array(eq.mean_u[:, player]), np.array(rec.eta[:, player]))


def _opponent_terms(spec, rec, eq, i):
    """Mean-channel and deviation-channel coefficients contributed by ``-i``."""
    dyn = spec.dynamics
    others = np.array([j for j in range(spec.N) if j != i], dtype=int)
    bt = dyn.b_total
    mean_gain = dyn.a + dyn.a_bar + np.sum(bt[:, others] * rec.delta[:, others], axis=1)
    mean_shift = np.sum(bt[:, others] * eq.delta_bar[:, others], axis=1) + dyn.c
    dev_gain = dyn.a + np.sum(dyn.b[:, others] * rec.eta[:, others], axis=1)
    return others, mean_gain, mean_shift, dev_gain


def propagate_moments(spec, rec, eq, player, mean_seq, gain_seq):
    """Closed-form ``E[x_k]`` and ``Var[x_k]`` under a deviation; batch over leading axis."""
    dyn = spec.dynamics
    K = spec.K
    i = player
    mean_seq = np.atleast_2d(mean_seq)
    gain_seq = np.broadcast_to(np.atleast_2d(gain_seq), mean_seq.shape)
    _, mean_gain, mean_shift, dev_gain = _opponent_terms(spec, rec, eq, i)
    B = mean_seq.shape[0]
    mx = np.empty((B, K + 1))
    vx = np.empty((B, K + 1))
    mx[:, 0] = dyn.initial_mean
    vx[:, 0] = dyn.initial_variance
    for k in range(K):
        mx[:, k + 1] = mean_gain[k] * mx[:, k] + dyn.b_total[k, i] * mean_seq[:, k] + mean_shift[k]
        closed = dev_gain[k] + dyn.b[k, i] * gain_seq[:, k]
        vx[:, k + 1] = closed ** 2 * vx[:, k] + dyn.sigma[k] ** 2 * dyn.noise_second_moment[k]
    return mx, vx


def _profile_costs(spec, rec, eq, player, mean_seq, gain_seq):
    K, N = spec.K, spec.N
    i = player
    mean_seq = np.atleast_2d(mean_seq)
    gain_seq = np.broadcast_to(np.atleast_2d(gain_seq), mean_seq.shape)
    mx, vx = propagate_moments(spec, rec, eq, i, mean_seq, gain_seq)
    c = spec.costs[i]
    cost = 0.5 * (vx @ c.q + mx ** 2 @ (c.q + c.q_bar))
    for j in range(N):
        if j == i:
            mu_j, g_j = mean_seq, gain_seq
        else:
            mu_j = rec.delta[:, j][None, :] * mx[:, :K] + eq.delta_bar[:, j][None, :]
            g_j = rec.eta[:, j][None, :]
        cost = cost + 0.5 * ((g_j ** 2 * vx[:, :K]) @ c.r[:, j] + mu_j ** 2 @ (c.r[:, j] + c.r_bar[:, j]))
    return cost, mx, vx


def evaluate_profile_cost(spec: GameSpec, rec: RecursionState, eq: EquilibriumSolution,
                          test: TestStrategy) -> float:
    """Exact expected cost of ``test.player`` when the others play the equilibrium."""
    cost, _, _ = _profile_costs(spec, rec, eq, test.player, test.mean_seq, test.gain_seq)
    return float(cost[0])


def player_row_terms(spec, rec, eq, i):
    """Row data ``(coef_x, own, rest)`` of player ``i`` with opponents substituted.

    A row reads ``coef_x[k] * E[x_k] + own[k] * E[u_k^i] + rest[k] >= 0``.
    """
    con = spec.constraints[i]
    K = spec.K
    others = [j for j in range(spec.N) if j != i]
    coef_x = np.array(con.m_bar)
    rest = np.array(con.p)
    for j in others:
        coef_x = coef_x + rec.delta[:, j][:, None] * con.n_bar[:, j]
        rest = rest + eq.delta_bar[:, j][:, None] * con.n_bar[:, j]
    own = np.array(con.n_bar[:, i])
    return coef_x.reshape(K, -1), own.reshape(K, -1), rest.reshape(K, -1)


def cost_identity_terms(spec, rec, eq, test: TestStrategy) -> dict:
    """Both sides of the completion-of-squares identity for one deviation."""
    i = test.player
    K = spec.K
    dyn = spec.dynamics
    lhs, mx, vx = _profile_costs(spec, rec, eq, i, test.mean_seq, test.gain_seq)
    mx, vx = mx[0], vx[0]
    mean_seq = np.asarray(test.mean_seq, dtype=float)
    gain_seq = np.asarray(test.gain_seq, dtype=float)

    baseline = (0.5 * rec.alpha[0, i] * dyn.initial_variance + 0.5 * rec.alpha_bar[0, i] * dyn.initial_mean ** 2
                + eq.beta[0, i] * dyn.initial_mean + eq.gamma[0, i])
    coef_x, own, rest = player_row_terms(spec, rec, eq, i)
    rows = coef_x * mx[:K, None] + own * mean_seq[:, None] + rest
    off = spec.row_offsets
    mu_i = eq.mu.reshape(K, spec.rows_per_stage)[:, off[i]:off[i + 1]]
    multiplier = float(np.sum(mu_i * rows))
    dev_pen = 0.5 * float(np.sum(rec.A_pos[:, i] * (gain_seq - rec.eta[:, i]) ** 2 * vx[:K]))
    mean_gap = mean_seq - rec.delta[:, i] * mx[:K] - eq.delta_bar[:, i]
    mean_pen = 0.5 * float(np.sum(rec.D_pos[:, i] * mean_gap ** 2))
    rhs = baseline + multiplier + dev_pen + mean_pen
    return {"lhs": float(lhs[0]), "rhs": rhs, "baseline": float(baseline), "multiplier": multiplier,
            "deviation_penalty": dev_pen, "mean_penalty": mean_pen}


def cost_identity_check(spec, rec, eq, test: TestStrategy) -> float:
    """Relative gap ``|lhs - rhs| / (1 + |lhs|)`` of the cost identity."""
    t = cost_identity_terms(spec, rec, eq, test)
    return abs(t["lhs"] - t["rhs"]) / (1.0 + abs(t["lhs"]))


_ZERO = 1e-14


def _stage_inequalities(coef_x, own, rest, gain, drive, shift, lo_next, hi_next):
    """Inequalities ``al * x + be * u + ga >= 0`` coupling stage state and own mean control."""
    al, be, ga = list(coef_x), list(own), list(rest)
    if np.isfinite(lo_next):
        al.append(gain); be.append(drive); ga.append(shift - lo_next)
    if np.isfinite(hi_next):
        al.append(-gain); be.append(-drive); ga.append(hi_next - shift)
    return np.array(al, dtype=float), np.array(be, dtype=float), np.array(ga, dtype=float)


def _eliminate_control(al, be, ga, tol=1e-12):
    """Interval of ``x`` for which some ``u`` satisfies every inequality."""
    low = be > _ZERO
    up = be < -_ZERO
    free = ~(low | up)
    A = [al[free]]
    C = [ga[free]]
    if low.any() and up.any():
        A.append((al[up][None, :] * be[low][:, None] - al[low][:, None] * be[up][None, :]).ravel())
        C.append((ga[up][None, :] * be[low][:, None] - ga[low][:, None] * be[up][None, :]).ravel())
    A = np.concatenate(A)
    C = np.concatenate(C)
    flat = np.abs(A) <= _ZERO
    if np.any(C[flat] < -tol * (1.0 + np.abs(C[flat]))):
        return np.inf, -np.inf
    lo = np.max(-C[A > _ZERO] / A[A > _ZERO], initial=-np.inf)
    hi = np.min(-C[A < -_ZERO] / A[A < -_ZERO], initial=np.inf)
    return lo, hi


def viable_state_bounds(spec, rec, eq, player):
    """Interval ``[lo_k, hi_k]`` of mean states from which ``player`` can stay feasible.

    Computed backward by eliminating the own mean control from each stage's
    rows together with the next stage's interval; exact for a scalar state.
    """
    K = spec.K
    i = player
    coef_x, own, rest = player_row_terms(spec, rec, eq, i)
    _, mean_gain, mean_shift, _ = _opponent_terms(spec, rec, eq, i)
    bt = spec.dynamics.b_total[:, i]
    lo = np.full(K + 1, -np.inf)
    hi = np.full(K + 1, np.inf)
    for k in range(K - 1, -1, -1):
        ineq = _stage_inequalities(coef_x[k], own[k], rest[k], mean_gain[k], bt[k], mean_shift[k],
                                   lo[k + 1], hi[k + 1])
        lo[k], hi[k] = _eliminate_control(*ineq)
    return lo, hi


def project_means(spec, rec, eq, player, mean_seq, tol: float = 1e-7, details: bool = False):
    """Clip mean sequences stage by stage onto ``player``'s feasible set.

    At each stage the own mean control is clipped to the interval that keeps
    the stage rows satisfied and the next mean state viable, so a sequence
    that starts from a viable state never dead-ends.  Accepts a batch
    (B, K); returns the projected batch and a mask of feasible rows.  With
    ``details=True`` the first failing stage and its bounds are returned too.
    """
    K = spec.K
    i = player
    dyn = spec.dynamics
    out = np.array(np.atleast_2d(mean_seq), dtype=float)
    B = out.shape[0]
    fail = np.full(B, -1)
    fail_lo = np.full(B, np.nan)
    fail_hi = np.full(B, np.nan)
    coef_x, own, rest = player_row_terms(spec, rec, eq, i)
    _, mean_gain, mean_shift, _ = _opponent_terms(spec, rec, eq, i)
    xlo, xhi = viable_state_bounds(spec, rec, eq, i)
    bt = dyn.b_total[:, i]
    mx = np.full(B, dyn.initial_mean)
    for k in range(K):
        al, be, ga = _stage_inequalities(coef_x[k], own[k], rest[k], mean_gain[k], bt[k], mean_shift[k],
                                         xlo[k + 1], xhi[k + 1])
        val = al[None, :] * mx[:, None] + ga[None, :]
        pos = be > _ZERO
        neg = be < -_ZERO
        lo = np.max(-val[:, pos] / be[pos], axis=1, initial=-np.inf)
        hi = np.min(-val[:, neg] / be[neg], axis=1, initial=np.inf)
        stuck = np.any(val[:, ~(pos | neg)] < -tol, axis=1)
        bad = (lo > hi + tol * (1.0 + np.abs(lo))) | stuck
        new = bad & (fail < 0)
        fail[new] = k
        fail_lo[new] = lo[new]
        fail_hi[new] = hi[new]
        out[:, k] = np.clip(out[:, k], lo, np.maximum(lo, hi))
        mx = mean_gain[k] * mx + bt[k] * out[:, k] + mean_shift[k]
    ok = fail < 0
    if details:
        return out, ok, fail, fail_lo, fail_hi
    return out, ok


def project_strategy(spec, rec, eq, test: TestStrategy) -> TestStrategy:
    """Single-strategy projection; raises :class:`InfeasibleProjection`."""
    proj, ok, fail, lo, hi = project_means(spec, rec, eq, test.player, test.mean_seq, details=True)
    if not ok[0]:
        raise InfeasibleProjection(test.player, int(fail[0]), float(lo[0]), float(hi[0]))
    return TestStrategy(test.player, proj[0], np.array(test.gain_seq, dtype=float))


def mean_rows(spec, rec, eq, player, mean_seq) -> np.ndarray:
    """Row values (B, K, s_i) of ``player`` for a batch of mean sequences."""
    coef_x, own, rest = player_row_terms(spec, rec, eq, player)
    means = np.atleast_2d(mean_seq)
    mx, _ = propagate_moments(spec, rec, eq, player, means, np.zeros_like(means))
    return coef_x[None] * mx[:, :spec.K, None] + own[None] * means[:, :, None] + rest[None]


def random_deviations(spec, rec, eq, player, trials, step=0.1, rng=None, max_halvings=30):
    """Feasible random perturbations of the player's equilibrium strategy.

    Means move by ``step * (1 + |mean|) * U(-1, 1)`` and gains by
    ``step * (1 + |gain|) * U(-1, 1)``; the means are then projected.  A
    draw the projection rejects is redrawn with a halved step.  Returns
    ``(mean_seqs, gain_seqs)`` of shape (trials, K).
    """
    rng = np.random.default_rng(rng)
    K = spec.K
    base_u = np.array(eq.mean_u[:, player])
    base_g = np.array(rec.eta[:, player])
    means = np.empty((trials, K))
    gains = np.empty((trials, K))
    pending = np.arange(trials)
    scale = np.full(trials, float(step))
    for _ in range(max_halvings + 1):
        n = pending.size
        cand = base_u + scale[pending, None] * (1.0 + np.abs(base_u)) * rng.uniform(-1, 1, (n, K))
        gcand = base_g + scale[pending, None] * (1.0 + np.abs(base_g)) * rng.uniform(-1, 1, (n, K))
        proj, ok, fail, lo, hi = project_means(spec, rec, eq, player, cand, details=True)
        means[pending[ok]] = proj[ok]
        gains[pending[ok]] = gcand[ok]
        if ok.all():
            return means, gains
        first = int(np.nonzero(~ok)[0][0])
        pending = pending[~ok]
        scale[pending] *= 0.5
    raise InfeasibleProjection(player, int(fail[first]), float(lo[first]), float(hi[first]))


@dataclass
class BestResponseReport:
    worst_gap: dict = field(default_factory=dict)          # player -> relative gap
    worst_identity_residual: dict = field(default_factory=dict)
    trials: int = 0
    tolerance: float = 1e-6

    @property
    def worst(self) -> float:
        return min(self.worst_gap.values()) if self.worst_gap else 0.0

    @property
    def passed(self) -> bool:
        return self.worst >= -self.tolerance


def best_response_check(spec, rec, eq, trials: int = 200, step: float = 0.1, seed: int = 0,
                        players=None, tolerance: float = 1e-6) -> BestResponseReport:
    """Search random feasible deviations for a profitable one.

    The gap of a deviation is ``(cost - eq_cost) / (1 + |eq_cost|)``; a
    certified equilibrium never shows a gap below ``-tolerance``.
    """
    report = BestResponseReport(trials=trials, tolerance=tolerance)
    for i in (range(spec.N) if players is None else players):
        means, gains = random_deviations(spec, rec, eq, i, trials, step, rng=[seed, i])
        costs, _, _ = _profile_costs(spec, rec, eq, i, means, gains)
        ref = eq.expected_cost[i]
        report.worst_gap[i] = float(np.min((costs - ref) / (1.0 + abs(ref))))
        worst_id = 0.0
        for t in range(trials):
            worst_id = max(worst_id, cost_identity_check(spec, rec, eq, TestStrategy(i, means[t], gains[t])))
        report.worst_identity_residual[i] = worst_id
    return report


def simulate_profile_costs(spec, rec, eq, test: TestStrategy, n_paths: int, seed: int = 0):
    """Monte-Carlo estimate (mean, stderr) of ``test.player``'s cost.

    Paths are rolled forward from the realized dynamics; the population
    means entering the feedback laws come from a separate mean recursion.
    """
    dyn = spec.dynamics
    K, N = spec.K, spec.N
    i = test.player
    mean_x = np.empty(K + 1)
    mean_u = np.empty((K, N))
    gains = np.array(rec.eta)
    gains[:, i] = test.gain_seq
    mean_x[0] = dyn.initial_mean
    for k in range(K):
        mean_u[k] = rec.delta[k] * mean_x[k] + eq.delta_bar[k]
        mean_u[k, i] = test.mean_seq[k]
        mean_x[k + 1] = (dyn.a[k] + dyn.a_bar[k]) * mean_x[k] + dyn.b_total[k] @ mean_u[k] + dyn.c[k]
    seeds = seed + np.arange(n_paths)
    x = dyn.initial_mean + np.sqrt(dyn.initial_variance) * streams.standard_normals(seeds, streams.initial_state_stream())
    c = spec.costs[i]
    cost = np.zeros(n_paths)
    for k in range(K):
        u = mean_u[k][None, :] + gains[k][None, :] * (x - mean_x[k])[:, None]
        cost += 0.5 * (c.q[k] * x ** 2 + c.q_bar[k] * mean_x[k] ** 2
                       + (u ** 2) @ c.r[k] + c.r_bar[k] @ mean_u[k] ** 2)
        w = np.sqrt(dyn.noise_second_moment[k]) * streams.standard_normals(seeds, streams.noise_stream(k))
        x = (dyn.a[k] * x + dyn.a_bar[k] * mean_x[k] + u @ dyn.b[k] + dyn.b_bar[k] @ mean_u[k]
             + dyn.c[k] + dyn.sigma[k] * w)
    cost += 0.5 * (c.q[K] * x ** 2 + c.q_bar[K] * mean_x[K] ** 2)
    return float(cost.mean()), float(cost.std(ddof=1) / np.sqrt(n_paths))


@dataclass
class CrossCheckEntry:
    mu: np.ndarray
    complementarity: float
    worst_gap: float
    identity_residual: float
    certified: bool


def small_instance_cross_check(spec: GameSpec, max_m: int = 12, trials: int = 50, seed: int = 0) -> list:
    """Certify every LCP solution of a small instance as an equilibrium."""
    m = spec.num_constraints
    if m > max_m:
        raise ValueError(f"cross-check needs K * sum(rows) <= {max_m}, got {m}")
    rec = backward_pass(spec)
    asm = assemble(rec, spec)
    scale = acceptance_scale(asm.lcp_Q)
    out = []
    for sol in enumeration_solve(asm.lcp_M, asm.lcp_Q):
        eq = solve_equilibrium(spec, rec, asm, sol.z)
        comp = check_complementarity(spec, rec, eq.mean_x, eq.delta_bar, sol.z)
        br = best_response_check(spec, rec, eq, trials=trials, seed=seed)
        ident = max(br.worst_identity_residual.values())
        ok = comp.max_violation <= 1e-8 * scale and br.passed and ident <= 1e-7
        out.append(CrossCheckEntry(sol.z, comp.max_violation, br.worst, ident, ok))
    return out
