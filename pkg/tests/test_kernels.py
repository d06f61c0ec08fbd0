import numpy as np
import pytest
from hypothesis import given, strategies as st

from reluiqc import _kernels
from reluiqc._kernels import _pykernels

needs_ext = pytest.mark.skipif("cython" not in _kernels.available_backends(), reason="extension not built")


def test_backend_flag_is_consistent():
    assert _kernels.BACKEND in _kernels.available_backends()


def test_unknown_backend():
    with pytest.raises(ValueError):
        _kernels.iqc_partial_sums(np.zeros((1, 2, 2)), np.eye(2), backend="fortran")


def _system(rng, nx, nu, ny, sparse):
    mats = [rng.standard_normal(s) for s in [(nx, nx), (nx, nu), (ny, nx), (ny, nu)]]
    if sparse:
        mats = [M * (rng.random(M.shape) < 0.3) for M in mats]
    mats[0] *= 0.9 / max(1e-9, np.max(np.abs(np.linalg.eigvals(mats[0])), initial=0.0)) if nx else 1.0
    return mats


@needs_ext
@given(st.integers(0, 2**32 - 1), st.integers(0, 5), st.integers(1, 4), st.integers(1, 4), st.booleans())
def test_lti_response_backends_agree(seed, nx, nu, ny, sparse):
    rng = np.random.default_rng(seed)
    A, B, C, D = _system(rng, nx, nu, ny, sparse)
    U = rng.standard_normal((3, 9, nu))
    x0 = rng.standard_normal((3, nx))
    ya, xa = _kernels.lti_response(A, B, C, D, U, x0, backend="python")
    yb, xb = _kernels.lti_response(A, B, C, D, U, x0, backend="cython")
    assert np.allclose(ya, yb, rtol=1e-12, atol=1e-12)
    assert np.allclose(xa, xb, rtol=1e-12, atol=1e-12)


@needs_ext
@given(st.integers(0, 2**32 - 1), st.sampled_from([0, 1, 2, 3]), st.floats(0, 1))
def test_lurye_response_backends_agree(seed, code, lam):
    rng = np.random.default_rng(seed)
    nx, m, nd, ne = 3, 2, 2, 1
    A = rng.standard_normal((nx, nx))
    A *= 0.9 / np.max(np.abs(np.linalg.eigvals(A)))
    blocks = [A] + [rng.standard_normal(s) for s in [(nx, m), (nx, nd), (m, nx), (ne, nx), (m, nd), (ne, m), (ne, nd)]]
    Dist = rng.standard_normal((4, 15, nd)) * 3
    x0 = rng.standard_normal((4, nx))
    a = _kernels.lurye_response(*blocks, Dist, x0, code, lam, backend="python")
    b = _kernels.lurye_response(*blocks, Dist, x0, code, lam, backend="cython")
    for p, q in zip(a, b):
        assert np.allclose(p, q, rtol=1e-12, atol=1e-12)


@needs_ext
@given(st.integers(0, 2**32 - 1), st.integers(1, 8))
def test_partial_sums_backends_agree(seed, n):
    rng = np.random.default_rng(seed)
    R = rng.standard_normal((5, 11, n))
    M = rng.standard_normal((n, n))
    a = _kernels.iqc_partial_sums(R, M, backend="python")
    b = _kernels.iqc_partial_sums(R, M, backend="cython")
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("code,v,expect", [
    (_pykernels.RELU, [-1.0, 0.0, 2.0], [0.0, 0.0, 2.0]),
    (_pykernels.SATURATION, [-3.0, 0.5, 2.0], [-1.0, 0.5, 1.0]),
    (_pykernels.SCALED_IDENTITY, [-2.0, 4.0], [-1.0, 2.0]),
    (_pykernels.TANH, [0.0, 1.0], [0.0, np.tanh(1.0)]),
])
def test_nonlinearity_codes(code, v, expect):
    assert np.allclose(_pykernels.apply_nonlinearity(np.array(v), code, 0.5), expect)


def test_partial_sums_hand_case():
    R = np.array([[[1.0, 0.0], [0.0, 2.0], [1.0, 1.0]]])
    M = np.array([[1.0, 0.0], [0.0, -1.0]])
    for be in _kernels.available_backends():
        assert np.allclose(_kernels.iqc_partial_sums(R, M, backend=be), [[1.0, -3.0, -3.0]])


def test_fallback_env_var(monkeypatch):
    import importlib

    monkeypatch.setenv("RELUIQC_PURE_PYTHON", "1")
    mod = importlib.reload(_kernels)
    try:
        assert mod.BACKEND == "python"
    finally:
        monkeypatch.delenv("RELUIQC_PURE_PYTHON")
        importlib.reload(_kernels)
