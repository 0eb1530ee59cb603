import numpy as np
import pytest

from mftgne.assembly import assemble
from mftgne.equilibrium import solve_equilibrium
from mftgne.lcp import lemke_solve
from mftgne.microgrid import MicrogridConfig, build_microgrid
from mftgne.model import ConstraintSpec, CostSpec, DynamicsSpec, GameSpec
from mftgne.recursion import backward_pass


def const(K, value):
    return np.full(K, float(value))


def scalar_spec(K=1, a=1.0, a_bar=0.0, b=1.0, b_bar=0.0, c=0.0, sigma=0.0, x0=1.0, x0_var=0.0,
                noise=1.0, q=1.0, q_bar=0.0, r=1.0, r_bar=0.0, rows=None):
    """One-player instance with stage-constant data.

    ``rows`` is a list of ``(m_bar, n_bar, p)`` triples applied at every stage.
    """
    dyn = DynamicsSpec(K, 1, const(K, a), const(K, a_bar), np.full((K, 1), b), np.full((K, 1), b_bar),
                       const(K, c), const(K, sigma), x0, x0_var, const(K, noise))
    cost = CostSpec(const(K + 1, q), const(K + 1, q_bar), np.full((K, 1), r), np.full((K, 1), r_bar))
    rows = rows if rows is not None else [(0.0, 1.0, 1e6)]
    s = len(rows)
    m_bar = np.tile([m for m, _, _ in rows], (K, 1))
    n_bar = np.tile(np.array([n for _, n, _ in rows])[None, None, :], (K, 1, 1))
    p = np.tile([p for _, _, p in rows], (K, 1))
    return GameSpec(dyn, (cost,), (ConstraintSpec(s, m_bar, n_bar, p),), {})


def random_spec(seed, K=4, N=2, sigma=0.2, x0_var=0.3, shift=0.0, coupled=True) -> GameSpec:
    """Random convex instance with box-like bounds on each player's mean control.

    Player ``i`` has a lower row ``E[u^i] >= l + (small coupling)`` and an upper
    row ``E[u^i] <= h``.  Lower bounds are drawn around the unconstrained
    optimum so a fraction of rows binds.  ``shift`` is added to every ``p``.
    """
    rng = np.random.default_rng(seed)
    dyn = DynamicsSpec(
        K, N,
        a=rng.uniform(0.6, 1.1, K), a_bar=rng.uniform(-0.2, 0.2, K),
        b=rng.uniform(0.5, 1.5, (K, N)), b_bar=rng.uniform(-0.2, 0.2, (K, N)),
        c=rng.uniform(-1.0, 1.0, K), sigma=np.full(K, sigma),
        initial_mean=float(rng.uniform(-1.0, 1.0)), initial_variance=x0_var,
        noise_second_moment=np.ones(K),
    )
    costs = []
    constraints = []
    for i in range(N):
        r = rng.uniform(0.0, 0.4, (K, N))
        r_bar = rng.uniform(0.0, 0.4, (K, N))
        r[:, i] = rng.uniform(0.5, 2.0, K)
        r_bar[:, i] = rng.uniform(0.0, 1.0, K)
        costs.append(CostSpec(rng.uniform(0.5, 2.0, K + 1), rng.uniform(0.0, 1.0, K + 1), r, r_bar))
        m_bar = np.zeros((K, 2))
        n_bar = np.zeros((K, N, 2))
        p = np.zeros((K, 2))
        if coupled:
            m_bar[:, 0] = rng.uniform(-0.2, 0.2, K)
            n_bar[:, :, 0] = rng.uniform(-0.2, 0.2, (K, N))
        n_bar[:, i, 0] = 1.0
        p[:, 0] = -rng.uniform(-0.8, 0.8, K)
        n_bar[:, i, 1] = -1.0
        p[:, 1] = rng.uniform(2.0, 3.0, K)
        constraints.append(ConstraintSpec(2, m_bar, n_bar, p + shift))
    return GameSpec(dyn, tuple(costs), tuple(constraints), {"seed": seed})


def solved(spec):
    rec = backward_pass(spec)
    asm = assemble(rec, spec)
    sol = lemke_solve(asm.lcp_M, asm.lcp_Q)
    assert sol.solved, sol.status
    return rec, asm, sol, solve_equilibrium(spec, rec, asm, sol.z)


@pytest.fixture(scope="session")
def microgrid_spec():
    return build_microgrid(MicrogridConfig())


@pytest.fixture(scope="session")
def microgrid_solution(microgrid_spec):
    return solved(microgrid_spec)


@pytest.fixture(scope="session")
def small_solution():
    spec = random_spec(3)
    return (spec, *solved(spec))
