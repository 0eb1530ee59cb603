"""Multiplier-independent backward pass.

For every stage ``k = K-1, ..., 0`` the feedback gains ``eta_k`` (deviation
channel) and ``delta_k`` (mean channel) solve the coupled N x N systems::

    Lambda_k     eta_k   = -diag(b_k) alpha_{k+1} a_k
    Lambda_bar_k delta_k = -diag(b_k + b_bar_k) alpha_bar_{k+1} (a_k + a_bar_k)

after which the quadratic value coefficients ``alpha_k`` and ``alpha_bar_k``
are propagated.  Nothing here depends on the constraint multipliers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import PositivityViolation, SingularStageMatrix
from .model import GameSpec, _ArrayRecord, check_shapes

CONDITION_LIMIT = 1e12
POSITIVITY_FLOOR = 1e-12


class StageGains(NamedTuple):
    eta: np.ndarray
    delta: np.ndarray
    Lambda: np.ndarray
    Lambda_bar: np.ndarray


@dataclass(frozen=True, eq=False)
class RecursionState(_ArrayRecord):
    """Backward-pass output; per-player arrays are indexed ``[k, i]``.

    ``alpha``/``alpha_bar`` have ``K + 1`` stages (terminal included), the
    gains and the completion-of-squares weights ``A_pos``/``D_pos`` have ``K``.
    """

    alpha: np.ndarray
    alpha_bar: np.ndarray
    eta: np.ndarray
    delta: np.ndarray
    A_cl: np.ndarray
    A_bar_cl: np.ndarray
    Lambda: np.ndarray
    Lambda_bar: np.ndarray
    A_pos: np.ndarray
    D_pos: np.ndarray

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            getattr(self, name).setflags(write=False)

    @property
    def K(self) -> int:
        return self.eta.shape[0]

    @property
    def N(self) -> int:
        return self.eta.shape[1]


def stage_matrices(k: int, alpha_next, alpha_bar_next, spec: GameSpec):
    """``Lambda_k`` and ``Lambda_bar_k`` for given next-stage value coefficients."""
    dyn = spec.dynamics
    r_own = np.array([c.r[k, i] for i, c in enumerate(spec.costs)])
    r_tot = np.array([c.r[k, i] + c.r_bar[k, i] for i, c in enumerate(spec.costs)])
    b = dyn.b[k]
    bt = dyn.b_total[k]
    Lam = np.diag(r_own) + np.outer(b * alpha_next, b)
    Lam_bar = np.diag(r_tot) + np.outer(bt * alpha_bar_next, bt)
    return Lam, Lam_bar


def _solve_checked(mat, rhs, k, which):
    cond = np.linalg.cond(mat)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise SingularStageMatrix(k, which, float(cond))
    return np.linalg.solve(mat, rhs)


def solve_stage_gains(k: int, alpha_next, alpha_bar_next, spec: GameSpec) -> StageGains:
    dyn = spec.dynamics
    alpha_next = np.asarray(alpha_next, dtype=float)
    alpha_bar_next = np.asarray(alpha_bar_next, dtype=float)
    Lam, Lam_bar = stage_matrices(k, alpha_next, alpha_bar_next, spec)
    rhs_eta = -dyn.b[k] * alpha_next * dyn.a[k]
    rhs_delta = -dyn.b_total[k] * alpha_bar_next * (dyn.a[k] + dyn.a_bar[k])
    eta = _solve_checked(Lam, rhs_eta, k, "Lambda")
    delta = _solve_checked(Lam_bar, rhs_delta, k, "Lambda_bar")
    return StageGains(eta, delta, Lam, Lam_bar)


def backward_pass(spec: GameSpec) -> RecursionState:
    """Run the value/gain recursion from the terminal stage down to ``k = 0``.

    Raises :class:`SingularStageMatrix` if a stage system is singular and
    :class:`PositivityViolation` if ``A_pos`` or ``D_pos`` is not strictly
    positive; stage matrices are checked before the weights at each stage.
    """
    check_shapes(spec)
    dyn = spec.dynamics
    K, N = spec.K, spec.N
    q = np.array([c.q for c in spec.costs]).T            # (K+1, N)
    q_tot = np.array([c.q + c.q_bar for c in spec.costs]).T
    r = np.array([c.r for c in spec.costs]).transpose(1, 0, 2)         # (K, i, j)
    r_tot = np.array([c.r + c.r_bar for c in spec.costs]).transpose(1, 0, 2)

    alpha = np.zeros((K + 1, N))
    alpha_bar = np.zeros((K + 1, N))
    eta = np.zeros((K, N))
    delta = np.zeros((K, N))
    A_cl = np.zeros(K)
    A_bar_cl = np.zeros(K)
    Lam = np.zeros((K, N, N))
    Lam_bar = np.zeros((K, N, N))
    A_pos = np.zeros((K, N))
    D_pos = np.zeros((K, N))

    alpha[K] = q[K]
    alpha_bar[K] = q_tot[K]
    for k in range(K - 1, -1, -1):
        g = solve_stage_gains(k, alpha[k + 1], alpha_bar[k + 1], spec)
        eta[k], delta[k], Lam[k], Lam_bar[k] = g

        A_pos[k] = np.diagonal(r[k]) + alpha[k + 1] * dyn.b[k] ** 2
        D_pos[k] = np.diagonal(r_tot[k]) + alpha_bar[k + 1] * dyn.b_total[k] ** 2
        for i in range(N):
            if not A_pos[k, i] > POSITIVITY_FLOOR:
                raise PositivityViolation(i, k, "A_pos", float(A_pos[k, i]))
            if not D_pos[k, i] > POSITIVITY_FLOOR:
                raise PositivityViolation(i, k, "D_pos", float(D_pos[k, i]))

        A_cl[k] = dyn.a[k] + dyn.b[k] @ eta[k]
        A_bar_cl[k] = dyn.a[k] + dyn.a_bar[k] + dyn.b_total[k] @ delta[k]
        alpha[k] = alpha[k + 1] * A_cl[k] ** 2 + r[k] @ eta[k] ** 2 + q[k]
        alpha_bar[k] = alpha_bar[k + 1] * A_bar_cl[k] ** 2 + r_tot[k] @ delta[k] ** 2 + q_tot[k]

    if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(alpha_bar))):
        raise FloatingPointError("value coefficients overflowed in the backward pass")
    return RecursionState(alpha, alpha_bar, eta, delta, A_cl, A_bar_cl, Lam, Lam_bar, A_pos, D_pos)
