"""Hot loops of the time-domain oracle.

The compiled module ``_ckernels`` is used when it was built; otherwise the
NumPy implementations in ``_pykernels`` are used.  Set
``RELUIQC_PURE_PYTHON=1`` to force the fallback.
"""
import os

import numpy as np

from . import _pykernels
from ._pykernels import RELU, SATURATION, SCALED_IDENTITY, TANH

_compiled = None
if not os.environ.get("RELUIQC_PURE_PYTHON"):
    try:
        from . import _ckernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "cython" if _compiled is not None else "python"


def _f64(a, ndim):
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {a.shape}")
    return a


def _impl(backend):
    if backend is None:
        backend = BACKEND
    if backend == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not available")
        return _compiled
    if backend == "python":
        return _pykernels
    raise ValueError(f"unknown kernel backend {backend!r}")


def lti_response(A, B, C, D, U, x0, backend=None):
    return _impl(backend).lti_response(
        _f64(A, 2), _f64(B, 2), _f64(C, 2), _f64(D, 2), _f64(U, 3), _f64(x0, 2)
    )


def lurye_response(A, B1, B2, C1, C2, D12, D21, D22, Dist, x0, code, lam=1.0, backend=None):
    return _impl(backend).lurye_response(
        _f64(A, 2), _f64(B1, 2), _f64(B2, 2), _f64(C1, 2), _f64(C2, 2),
        _f64(D12, 2), _f64(D21, 2), _f64(D22, 2), _f64(Dist, 3), _f64(x0, 2),
        int(code), float(lam),
    )


def iqc_partial_sums(R, M, backend=None):
    return _impl(backend).iqc_partial_sums(_f64(R, 3), _f64(M, 2))


def available_backends():
    return ["python"] + (["cython"] if _compiled is not None else [])


__all__ = [
    "BACKEND",
    "RELU",
    "SATURATION",
    "SCALED_IDENTITY",
    "TANH",
    "available_backends",
    "iqc_partial_sums",
    "lti_response",
    "lurye_response",
]
