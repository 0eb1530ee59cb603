"""Two-generator / one-storage microgrid preset.

The storage level evolves as ``x_{k+1} = a x_k + b1 u1 + b2 u2 - L_k + sigma w_k``.
Each generator keeps its mean output inside ``[u_lb, u_ub]`` and both share
the reserve row ``E[x_{k+1}] >= x_reserve``.

The numeric load profile behind the published figures is not available, so
:func:`synthetic_load` provides a documented stand-in: a two-level daily
pattern with linear ramps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SpecError
from .model import ConstraintSpec, CostSpec, DynamicsSpec, GameSpec


class InvalidBounds(SpecError):
    pass


def synthetic_load(K: int = 140, low: float = 3.0, high: float = 8.5, period: int = 24,
                   rise: float = 7.0, fall: float = 19.0, ramp: float = 3.0) -> np.ndarray:
    """Daily two-level load: ``low`` at night, ``high`` by day, linear ramps of ``ramp`` hours.

    ``rise`` and ``fall`` are the hours (mod ``period``) at which the ramps start.
    """
    t = np.arange(K, dtype=float) % period
    up = np.clip((t - rise) / ramp, 0.0, 1.0)
    down = np.clip((t - fall) / ramp, 0.0, 1.0)
    return low + (high - low) * (up - down)


@dataclass
class MicrogridConfig:
    a: float = 0.9
    b1: float = 0.90
    b2: float = 0.94
    x_reserve: float = 1.5
    u_lb: tuple = (1.5, 0.5)
    u_ub: tuple = (4.5, 7.0)
    r: float = 0.5
    r_bar: float = 2.5
    q: float = 3.5
    q_bar: float = 0.5
    sigma: float = 0.2
    x0: float = 3.0
    x0_variance: float = 0.0
    noise_second_moment: float = 1.0
    load: np.ndarray = field(default_factory=synthetic_load)

    @property
    def K(self) -> int:
        return len(self.load)


def build_microgrid(cfg: MicrogridConfig) -> GameSpec:
    """Expand the config into a two-player instance with three rows per player.

    Rows per stage, for player ``i``: reserve (shared), lower bound, upper bound.
    There are no terminal costs and no cross-player control weights.
    """
    load = np.asarray(cfg.load, dtype=float)
    K = load.size
    N = 2
    for i in range(N):
        if not cfg.u_lb[i] < cfg.u_ub[i]:
            raise InvalidBounds(f"player {i}: u_lb {cfg.u_lb[i]} must be below u_ub {cfg.u_ub[i]}")
    if K < 1:
        raise InvalidBounds("load profile must have at least one stage")
    b = np.array([cfg.b1, cfg.b2])

    dynamics = DynamicsSpec(
        horizon=K, players=N,
        a=np.full(K, cfg.a), a_bar=np.zeros(K),
        b=np.tile(b, (K, 1)), b_bar=np.zeros((K, N)),
        c=-load, sigma=np.full(K, cfg.sigma),
        initial_mean=cfg.x0, initial_variance=cfg.x0_variance,
        noise_second_moment=np.full(K, cfg.noise_second_moment),
    )

    costs = []
    constraints = []
    for i in range(N):
        q = np.full(K + 1, cfg.q)
        q_bar = np.full(K + 1, cfg.q_bar)
        q[K] = q_bar[K] = 0.0
        r = np.zeros((K, N))
        r_bar = np.zeros((K, N))
        r[:, i] = cfg.r
        r_bar[:, i] = cfg.r_bar
        costs.append(CostSpec(q, q_bar, r, r_bar))

        m_bar = np.zeros((K, 3))
        n_bar = np.zeros((K, N, 3))
        p = np.zeros((K, 3))
        # reserve: a E[x_k] + b1 E[u1] + b2 E[u2] - L_k - x_reserve >= 0
        m_bar[:, 0] = cfg.a
        n_bar[:, :, 0] = b
        p[:, 0] = -load - cfg.x_reserve
        n_bar[:, i, 1] = 1.0
        p[:, 1] = -cfg.u_lb[i]
        n_bar[:, i, 2] = -1.0
        p[:, 2] = cfg.u_ub[i]
        constraints.append(ConstraintSpec(3, m_bar, n_bar, p))

    meta = {"name": "microgrid", "description": "two generators, one storage unit, synthetic load"}
    return GameSpec(dynamics, tuple(costs), tuple(constraints), meta)
