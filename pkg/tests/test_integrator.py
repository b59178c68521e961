import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from kdstrap.integrator import EVENT, MAX_STEPS, SPAN, STEP_FAILURE, integrate_batch


def oscillator(Y):
    return np.stack([Y[:, 1], -Y[:, 0]], axis=1)


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-20, 20))
def test_oscillator_exact(x0, v0, T):
    res = integrate_batch(oscillator, [[x0, v0]], T, rtol=1e-11, atol=1e-13)
    exact = [x0 * np.cos(T) + v0 * np.sin(T), -x0 * np.sin(T) + v0 * np.cos(T)]
    assert res.status[0] == SPAN
    assert res.s[0] == T
    assert np.allclose(res.y[0], exact, atol=1e-8 * (1 + abs(T)) * (1 + abs(x0) + abs(v0)))


def test_rows_are_independent():
    y0 = np.array([[1.0, 0.0], [0.0, 2.0], [3.0, -1.0]])
    spans = np.array([1.0, -2.0, 0.0])
    res = integrate_batch(oscillator, y0, spans)
    for i in range(3):
        single = integrate_batch(oscillator, y0[i:i + 1], spans[i])
        assert np.allclose(res.y[i], single.y[0], atol=1e-10)
    assert np.array_equal(res.y[2], y0[2])
    assert res.n_steps[2] == 0


def test_forward_then_backward_returns():
    y0 = np.array([[0.3, -0.7]])
    fwd = integrate_batch(oscillator, y0, 7.0, rtol=1e-12, atol=1e-14)
    back = integrate_batch(oscillator, fwd.y, -7.0, rtol=1e-12, atol=1e-14)
    assert np.allclose(back.y, y0, atol=1e-10)


def test_matches_solve_ivp():
    def lorenz(Y):
        x, y, z = Y.T
        return np.stack([10 * (y - x), x * (28 - z) - y, x * y - 8 / 3 * z], axis=1)

    y0 = [1.0, 1.0, 1.0]
    ours = integrate_batch(lorenz, [y0], 1.0, rtol=1e-12, atol=1e-12)
    ref = solve_ivp(lambda t, y: lorenz(y[None, :])[0], (0, 1.0), y0, method="DOP853",
                    rtol=1e-13, atol=1e-13)
    assert np.allclose(ours.y[0], ref.y[:, -1], rtol=1e-8)


def test_terminal_event_located():
    # x = cos s crosses 0 at s = pi/2
    res = integrate_batch(oscillator, [[1.0, 0.0], [1.0, 0.0]], [10.0, 1.0],
                          events=[lambda Y: Y[:, 0]], event_tol=1e-12)
    assert res.status[0] == EVENT and res.event_index[0] == 0
    assert res.s[0] == pytest.approx(np.pi / 2, abs=1e-10)
    assert abs(res.y[0, 0]) < 1e-9
    assert res.status[1] == SPAN
    assert res.events == [(0, 0, res.s[0])]


def test_first_of_two_events_wins():
    res = integrate_batch(oscillator, [[1.0, 0.0]], 10.0,
                          events=[lambda Y: Y[:, 0] + 0.5, lambda Y: Y[:, 0] - 0.5])
    assert res.event_index[0] == 1
    assert res.s[0] == pytest.approx(np.arccos(0.5), abs=1e-9)


def test_record_and_monitor():
    calls = []
    res = integrate_batch(oscillator, [[1.0, 0.0]], 3.0, record=True,
                          monitor=lambda rows, s, y: calls.append(len(rows)))
    s, y = res.trajectory(0)
    assert s[0] == 0.0 and s[-1] == 3.0
    assert np.all(np.diff(s) > 0)
    assert len(s) == res.n_steps[0] + 1
    assert len(calls) == res.n_steps[0] + 1
    with pytest.raises(ValueError):
        integrate_batch(oscillator, [[1.0, 0.0]], 1.0).trajectory(0)


def test_blow_up_is_a_step_failure():
    # y' = y^2 blows up at s = 1
    res = integrate_batch(lambda Y: Y * Y, [[1.0]], 2.0)
    assert res.status[0] == STEP_FAILURE
    assert res.s[0] < 1.0


def test_max_steps():
    res = integrate_batch(oscillator, [[1.0, 0.0]], 1e4, max_steps=10)
    assert res.status[0] == MAX_STEPS
    assert res.n_steps[0] == 10
