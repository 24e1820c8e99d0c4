import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tofsi.errors import ConfigError
from tofsi.mma import MmaSettings, MmaState, SubproblemError, minmax_update, mma_update

S = MmaSettings()


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 30), st.integers(0, 2**31 - 1))
def test_move_limit_and_bounds(n, seed):
    rng = np.random.default_rng(seed)
    state = MmaState()
    x = rng.uniform(0, 1, n)
    for _ in range(3):
        objectives = rng.uniform(0, 2, 3)
        grads = rng.normal(size=(3, n))
        xnew = minmax_update(state, x, objectives, grads, [-0.5], rng.uniform(0.1, 1, (1, n)), S)
        assert np.all(np.abs(xnew - x) <= S.move + 1e-12)
        assert np.all((xnew >= 0) & (xnew <= 1))
        x = xnew


def test_single_variable_moves_to_upper_move_bound():
    x, *_ = mma_update(MmaState(), np.array([0.5]), 0, 1, 0.0, np.array([-1.0]), np.array([-1.0]),
                       np.array([[0.0]]), 1.0, np.zeros(1), S)
    assert x[0] == pytest.approx(0.6, abs=1e-6)


def test_two_variable_subproblem_matches_brute_force():
    state = MmaState()
    x0 = np.array([0.5, 0.5])
    x, sub, y, lam = mma_update(state, x0, 0, 1, 1.0, np.array([0.8, -0.5]), np.array([0.05]),
                                np.array([[1.0, 1.0]]), 1.0, np.zeros(1), S)
    grid = np.linspace(0, 1, 10001)
    gx = grid[(grid >= sub.alfa[0]) & (grid <= sub.beta[0])]
    gy = grid[(grid >= sub.alfa[1]) & (grid <= sub.beta[1])]
    pts = np.stack(np.meshgrid(gx, gy, indexing="ij"), axis=-1)
    f0, fi = sub.evaluate(pts)
    f0 = np.where(fi[..., 0] <= 0, f0, np.inf)
    best = pts[np.unravel_index(np.argmin(f0), f0.shape)]
    assert np.allclose(x, best, atol=1e-3)
    assert lam[0] > 0  # constraint active


def test_minmax_prefers_worst_objective():
    # objective 0 increases with x, objective 1 decreases: optimum balances them
    state = MmaState()
    x = np.array([0.5])
    for _ in range(30):
        f = np.array([x[0], 1 - x[0]])
        g = np.array([[1.0], [-1.0]])
        x = minmax_update(state, x, f, g, [-1.0], [[0.0]], S)
    assert x[0] == pytest.approx(0.5, abs=1e-3)


def _unreachable_step(state):
    # x >= 0.9 is required but the move limit allows at most 0.6
    return mma_update(state, np.array([0.5]), 0, 1, 0.0, np.array([0.0]), np.array([0.4]),
                      np.array([[-1.0]]), 1.0, np.zeros(1), S)


def test_transient_infeasibility_moves_toward_feasibility():
    x, _, y, _ = _unreachable_step(MmaState())
    assert y[0] > S.infeasible_tol
    assert x[0] == pytest.approx(0.6, abs=1e-6)


def test_persistent_infeasibility_raises():
    state = MmaState()
    for _ in range(S.infeasible_patience):
        _unreachable_step(state)
    with pytest.raises(SubproblemError, match="consecutive"):
        _unreachable_step(state)


def test_feasible_step_resets_streak():
    state = MmaState()
    _unreachable_step(state)
    mma_update(state, np.array([0.5]), 0, 1, 0.0, np.array([1.0]), np.array([-0.4]), np.array([[1.0]]),
               1.0, np.zeros(1), S)
    assert state.infeasible_streak == 0


@pytest.mark.parametrize("kw", [dict(move=0), dict(move=1.5), dict(offset=-1), dict(asydecr=1.1)])
def test_invalid_settings(kw):
    with pytest.raises(ConfigError):
        MmaSettings(**kw).validate()
