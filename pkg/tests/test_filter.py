import numpy as np
import pytest
from hypothesis import given, strategies as st

from reluiqc.filter import build_psi, stacked_output
from reluiqc.lti import Trajectory, simulate


def test_dimensions():
    f = build_psi(3, 2)
    assert f.n_states == 12 and f.n_out == 16
    assert f.A.shape == (12, 12) and f.B1.shape == (12, 2) and f.D2.shape == (16, 2)
    assert np.count_nonzero(np.linalg.matrix_power(f.A, 3)) == 0  # FIR: nilpotent of index N


def test_horizon_zero_is_identity():
    f = build_psi(0, 3)
    assert f.n_states == 0
    assert np.array_equal(np.hstack([f.D1, f.D2]), np.eye(6))


def test_invalid():
    with pytest.raises(ValueError):
        build_psi(-1, 1)
    with pytest.raises(ValueError):
        build_psi(1, 0)


def test_hand_example():
    v = np.array([[1.0, 2.0, 3.0]])
    w = np.array([[4.0, 5.0, 6.0]])
    r = stacked_output(Trajectory({"v": v, "w": w}), 1)["r"]
    assert np.array_equal(r, [[1, 2, 3], [0, 1, 2], [4, 5, 6], [0, 4, 5]])


@given(st.integers(0, 2**32 - 1), st.integers(0, 5), st.integers(1, 3), st.integers(1, 20))
def test_filter_simulation_equals_direct_stacking(seed, N, m, T):
    rng = np.random.default_rng(seed)
    vw = Trajectory({"v": rng.standard_normal((m, T)), "w": rng.standard_normal((m, T))})
    sim = simulate(build_psi(N, m).psi, vw)["r"]
    assert np.array_equal(sim, stacked_output(vw, N)["r"])
