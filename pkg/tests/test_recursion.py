import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_spec, scalar_spec
from mftgne.errors import PositivityViolation, SingularStageMatrix
from mftgne.recursion import backward_pass, solve_stage_gains


def scalar_riccati(K, a, b, q, r):
    """Textbook scalar LQR cost-to-go, written independently of the library."""
    P = np.zeros(K + 1)
    P[K] = q[K]
    gains = np.zeros(K)
    for k in range(K - 1, -1, -1):
        gains[k] = -a[k] * b[k] * P[k + 1] / (r[k] + b[k] ** 2 * P[k + 1])
        P[k] = q[k] + a[k] ** 2 * P[k + 1] - (a[k] * b[k] * P[k + 1]) ** 2 / (r[k] + b[k] ** 2 * P[k + 1])
    return P, gains


def test_two_stage_hand_recursion():
    rec = backward_pass(scalar_spec(K=2, a=1.0, b=1.0, q=1.0, r=1.0))
    assert rec.alpha[2, 0] == 1.0
    assert rec.Lambda[1, 0, 0] == pytest.approx(2.0)
    assert rec.eta[1, 0] == pytest.approx(-0.5)
    assert rec.alpha[1, 0] == pytest.approx(1.5)
    assert rec.Lambda[0, 0, 0] == pytest.approx(2.5)
    assert rec.eta[0, 0] == pytest.approx(-0.6)
    assert rec.alpha[0, 0] == pytest.approx(1.6, abs=1e-14)


def test_single_stage_gains_by_hand():
    spec = scalar_spec(K=1, a=1.0, b=1.0, r=1.0)
    g = solve_stage_gains(0, [1.0], [1.0], spec)
    assert g.Lambda[0, 0] == 2.0 and g.Lambda_bar[0, 0] == 2.0
    assert g.eta[0] == -0.5 and g.delta[0] == -0.5


def test_zero_input_channel():
    spec = scalar_spec(K=1, b=0.0, r=3.0)
    g = solve_stage_gains(0, [2.0], [2.0], spec)
    assert g.eta[0] == 0.0 and g.delta[0] == 0.0
    assert g.Lambda[0, 0] == 3.0


def test_zero_game():
    rec = backward_pass(scalar_spec(K=3, b=0.0, q=0.0))
    assert not rec.alpha.any() and not rec.alpha_bar.any()
    assert not rec.eta.any() and not rec.delta.any()


def test_terminal_boundary(microgrid_spec):
    rec = backward_pass(microgrid_spec)
    K = microgrid_spec.K
    for i, c in enumerate(microgrid_spec.costs):
        assert rec.alpha[K, i] == c.q[K]
        assert rec.alpha_bar[K, i] == c.q[K] + c.q_bar[K]
    # no terminal weight: the last stage has nothing to steer
    assert not rec.eta[K - 1].any() and not rec.delta[K - 1].any()


def test_singular_stage_matrix_reported_before_positivity():
    spec = scalar_spec(K=1, b=0.0, r=0.0, r_bar=0.0)
    with pytest.raises(SingularStageMatrix) as err:
        backward_pass(spec)
    assert err.value.stage == 0 and err.value.which == "Lambda"


def test_positivity_violation():
    spec = scalar_spec(K=1, q=0.0, r=-1.0, r_bar=3.0)
    with pytest.raises(PositivityViolation) as err:
        backward_pass(spec)
    assert (err.value.player, err.value.stage, err.value.which) == (0, 0, "A_pos")


def test_recursion_outputs_are_read_only():
    rec = backward_pass(random_spec(1))
    with pytest.raises(ValueError):
        rec.alpha[0, 0] = 1.0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 100_000), K=st.integers(1, 6))
def test_single_player_matches_textbook_riccati(seed, K):
    spec = random_spec(seed, K=K, N=1)
    dyn, c = spec.dynamics, spec.costs[0]
    rec = backward_pass(spec)
    P, gains = scalar_riccati(K, dyn.a, dyn.b[:, 0], c.q, c.r[:, 0])
    np.testing.assert_allclose(rec.alpha[:, 0], P, rtol=1e-12)
    np.testing.assert_allclose(rec.eta[:, 0], gains, rtol=1e-12, atol=1e-15)
    P_bar, gains_bar = scalar_riccati(K, dyn.a + dyn.a_bar, dyn.b_total[:, 0], c.q + c.q_bar,
                                      c.r[:, 0] + c.r_bar[:, 0])
    np.testing.assert_allclose(rec.alpha_bar[:, 0], P_bar, rtol=1e-12)
    np.testing.assert_allclose(rec.delta[:, 0], gains_bar, rtol=1e-12, atol=1e-15)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 100_000), K=st.integers(1, 5), N=st.integers(2, 4))
def test_gains_are_mutual_best_responses(seed, K, N):
    # each player's stage gain minimizes alpha * (closed loop coefficient)^2 + r * gain^2
    spec = random_spec(seed, K=K, N=N)
    dyn = spec.dynamics
    rec = backward_pass(spec)
    for k in range(K):
        for i in range(N):
            c = spec.costs[i]
            rest = dyn.a[k] + dyn.b[k] @ rec.eta[k] - dyn.b[k, i] * rec.eta[k, i]
            best = -rec.alpha[k + 1, i] * dyn.b[k, i] * rest / (c.r[k, i] + rec.alpha[k + 1, i] * dyn.b[k, i] ** 2)
            assert rec.eta[k, i] == pytest.approx(best, rel=1e-10, abs=1e-12)
            rest_bar = dyn.a[k] + dyn.a_bar[k] + dyn.b_total[k] @ rec.delta[k] - dyn.b_total[k, i] * rec.delta[k, i]
            r_tot = c.r[k, i] + c.r_bar[k, i]
            best_bar = -rec.alpha_bar[k + 1, i] * dyn.b_total[k, i] * rest_bar / (
                r_tot + rec.alpha_bar[k + 1, i] * dyn.b_total[k, i] ** 2)
            assert rec.delta[k, i] == pytest.approx(best_bar, rel=1e-10, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 100_000), K=st.integers(1, 6), N=st.integers(1, 3))
def test_convex_data_gives_nonnegative_values(seed, K, N):
    rec = backward_pass(random_spec(seed, K=K, N=N))
    assert np.all(rec.alpha >= 0) and np.all(rec.alpha_bar >= 0)
    assert np.all(rec.A_pos > 0) and np.all(rec.D_pos > 0)
