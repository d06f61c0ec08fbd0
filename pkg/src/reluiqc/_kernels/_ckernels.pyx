# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of the kernels in ``_pykernels``.

Inputs must be C-contiguous float64; the dispatcher in ``__init__`` takes
care of that.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport tanh

cnp.import_array()

cdef enum:
    RELU = 0
    SATURATION = 1
    SCALED_IDENTITY = 2
    TANH = 3


cdef inline double _phi(double v, int code, double lam) noexcept nogil:
    if code == RELU:
        return v if v > 0.0 else 0.0
    elif code == SATURATION:
        if v > 1.0:
            return 1.0
        if v < -1.0:
            return -1.0
        return v
    elif code == SCALED_IDENTITY:
        return lam * v
    else:
        return tanh(v)


def _compress_rows(M):
    """CSR-style (row pointers, column indices, values) of a dense matrix."""
    M = np.asarray(M)
    rows, cols = np.nonzero(M)
    ptr = np.zeros(M.shape[0] + 1, dtype=np.intp)
    np.add.at(ptr, rows + 1, 1)
    return np.cumsum(ptr), cols.astype(np.intp), np.ascontiguousarray(M[rows, cols], dtype=np.float64)


def lti_response(const double[:, ::1] A, const double[:, ::1] B,
                 const double[:, ::1] C, const double[:, ::1] D,
                 const double[:, :, ::1] U, const double[:, ::1] x0):
    # shift-register filters are mostly zeros, so iterate over the nonzeros of [A B] and [C D]
    cdef Py_ssize_t batch = U.shape[0], T = U.shape[1], nu = U.shape[2]
    cdef Py_ssize_t nx = A.shape[0], ny = C.shape[0]
    cdef Py_ssize_t b, k, i, p, j
    cdef double s
    sp_ab = _compress_rows(np.hstack([np.asarray(A), np.asarray(B)]).reshape(nx, nx + nu))
    sp_cd = _compress_rows(np.hstack([np.asarray(C), np.asarray(D)]).reshape(ny, nx + nu))
    cdef Py_ssize_t[::1] ab_ptr = sp_ab[0], ab_col = sp_ab[1], cd_ptr = sp_cd[0], cd_col = sp_cd[1]
    cdef double[::1] ab_val = sp_ab[2], cd_val = sp_cd[2]
    Y_arr = np.zeros((batch, T, ny))
    X_arr = np.zeros((batch, T + 1, nx))
    cdef double[:, :, ::1] Y = Y_arr
    cdef double[:, :, ::1] X = X_arr
    with nogil:
        for b in range(batch):
            for i in range(nx):
                X[b, 0, i] = x0[b, i]
            for k in range(T):
                for i in range(ny):
                    s = 0.0
                    for p in range(cd_ptr[i], cd_ptr[i + 1]):
                        j = cd_col[p]
                        s = s + cd_val[p] * (X[b, k, j] if j < nx else U[b, k, j - nx])
                    Y[b, k, i] = s
                for i in range(nx):
                    s = 0.0
                    for p in range(ab_ptr[i], ab_ptr[i + 1]):
                        j = ab_col[p]
                        s = s + ab_val[p] * (X[b, k, j] if j < nx else U[b, k, j - nx])
                    X[b, k + 1, i] = s
    return Y_arr, X_arr


def lurye_response(const double[:, ::1] A, const double[:, ::1] B1,
                   const double[:, ::1] B2, const double[:, ::1] C1,
                   const double[:, ::1] C2, const double[:, ::1] D12,
                   const double[:, ::1] D21, const double[:, ::1] D22,
                   const double[:, :, ::1] Dist, const double[:, ::1] x0,
                   int code, double lam):
    cdef Py_ssize_t batch = Dist.shape[0], T = Dist.shape[1], nd = Dist.shape[2]
    cdef Py_ssize_t nx = A.shape[0], m = C1.shape[0], ne = C2.shape[0]
    cdef Py_ssize_t b, k, i, j
    cdef double s
    X_arr = np.zeros((batch, T + 1, nx))
    V_arr = np.zeros((batch, T, m))
    W_arr = np.zeros((batch, T, m))
    E_arr = np.zeros((batch, T, ne))
    cdef double[:, :, ::1] X = X_arr
    cdef double[:, :, ::1] V = V_arr
    cdef double[:, :, ::1] W = W_arr
    cdef double[:, :, ::1] E = E_arr
    with nogil:
        for b in range(batch):
            for i in range(nx):
                X[b, 0, i] = x0[b, i]
            for k in range(T):
                for i in range(m):
                    s = 0.0
                    for j in range(nx):
                        s = s + C1[i, j] * X[b, k, j]
                    for j in range(nd):
                        s = s + D12[i, j] * Dist[b, k, j]
                    V[b, k, i] = s
                    W[b, k, i] = _phi(s, code, lam)
                for i in range(ne):
                    s = 0.0
                    for j in range(nx):
                        s = s + C2[i, j] * X[b, k, j]
                    for j in range(m):
                        s = s + D21[i, j] * W[b, k, j]
                    for j in range(nd):
                        s = s + D22[i, j] * Dist[b, k, j]
                    E[b, k, i] = s
                for i in range(nx):
                    s = 0.0
                    for j in range(nx):
                        s = s + A[i, j] * X[b, k, j]
                    for j in range(m):
                        s = s + B1[i, j] * W[b, k, j]
                    for j in range(nd):
                        s = s + B2[i, j] * Dist[b, k, j]
                    X[b, k + 1, i] = s
    return X_arr, V_arr, W_arr, E_arr


def iqc_partial_sums(const double[:, :, ::1] R, const double[:, ::1] M):
    cdef Py_ssize_t batch = R.shape[0], T = R.shape[1], nr = R.shape[2]
    cdef Py_ssize_t b, k, i, j
    cdef double acc, s
    S_arr = np.zeros((batch, T))
    cdef double[:, ::1] S = S_arr
    with nogil:
        for b in range(batch):
            acc = 0.0
            for k in range(T):
                for i in range(nr):
                    if R[b, k, i] == 0.0:
                        continue
                    s = 0.0
                    for j in range(nr):
                        s = s + M[i, j] * R[b, k, j]
                    acc = acc + R[b, k, i] * s
                S[b, k] = acc
    return S_arr
