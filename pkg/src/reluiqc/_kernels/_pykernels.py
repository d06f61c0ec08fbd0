"""NumPy reference kernels.

Every function here has a twin with the same signature in ``_ckernels.pyx``.
Arrays are time-major per batch: ``U[b, k, :]`` is the input of trajectory
``b`` at time ``k``.
"""
import numpy as np

RELU = 0
SATURATION = 1
SCALED_IDENTITY = 2
TANH = 3


def apply_nonlinearity(v, code, lam):
    if code == RELU:
        return np.maximum(v, 0.0)
    if code == SATURATION:
        return np.clip(v, -1.0, 1.0)
    if code == SCALED_IDENTITY:
        return lam * v
    if code == TANH:
        return np.tanh(v)
    raise ValueError(f"unknown nonlinearity code {code}")


def lti_response(A, B, C, D, U, x0):
    """Batched state-space recursion; returns outputs (batch, T, ny) and states (batch, T+1, nx)."""
    batch, T, _ = U.shape
    nx = A.shape[0]
    X = np.empty((batch, T + 1, nx))
    X[:, 0, :] = x0
    At = A.T
    Bt = B.T
    for k in range(T):
        X[:, k + 1, :] = X[:, k, :] @ At + U[:, k, :] @ Bt
    Y = X[:, :T, :] @ C.T + U @ D.T
    return Y, X


def lurye_response(A, B1, B2, C1, C2, D12, D21, D22, Dist, x0, code, lam):
    """Closed loop with w = f(v) elementwise; D11 must be zero so v(k) is explicit.

    Returns (X, V, W, E) with X of shape (batch, T+1, nx) and the rest (batch, T, .).
    """
    batch, T, _ = Dist.shape
    nx = A.shape[0]
    m = C1.shape[0]
    ne = C2.shape[0]
    X = np.empty((batch, T + 1, nx))
    V = np.empty((batch, T, m))
    W = np.empty((batch, T, m))
    E = np.empty((batch, T, ne))
    X[:, 0, :] = x0
    for k in range(T):
        x = X[:, k, :]
        d = Dist[:, k, :]
        v = x @ C1.T + d @ D12.T
        w = apply_nonlinearity(v, code, lam)
        V[:, k, :] = v
        W[:, k, :] = w
        E[:, k, :] = x @ C2.T + w @ D21.T + d @ D22.T
        X[:, k + 1, :] = x @ A.T + w @ B1.T + d @ B2.T
    return X, V, W, E


def iqc_partial_sums(R, M):
    """Running sums of r(k)' M r(k) along time, shape (batch, T)."""
    q = np.einsum("btj,jk,btk->bt", R, M, R)
    return np.cumsum(q, axis=1)
