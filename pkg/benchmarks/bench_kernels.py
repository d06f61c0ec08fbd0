"""Time the compiled kernels against the NumPy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from reluiqc import _kernels
from reluiqc.filter import build_psi
from reluiqc.lti import realize_first_order_bank

GRID = [
    ["-0.13/(z-0.98)", "0.21/(z-0.92)", 1, 0],
    ["-0.3/(z-0.97)", "-0.1/(z-0.91)", 0, 1],
    [1, 0, 0, 0],
]


def cases(rng):
    G = realize_first_order_bank(GRID, (2, 2), (2, 1), ("w", "d"), ("v", "e"))
    b = G.lurye_blocks()
    D = rng.standard_normal((1000, 300, 2))
    x0 = np.zeros((1000, G.n_x))
    psi = build_psi(4, 3).psi
    V = rng.standard_normal((1000, 31, 3))
    U = np.concatenate([V, np.maximum(V, 0)], axis=2)
    R, _ = _kernels.lti_response(psi.A, psi.B, psi.C, psi.D, U, np.zeros((1000, psi.n_x)), backend="python")
    M = rng.standard_normal((R.shape[2],) * 2)
    M = M + M.T
    return {
        "lurye_response 1000x300": lambda be: _kernels.lurye_response(
            b.A, b.B1, b.B2, b.C1, b.C2, b.D12, b.D21, b.D22, D, x0, _kernels.RELU, backend=be),
        "lti_response (filter N=4) 1000x31": lambda be: _kernels.lti_response(
            psi.A, psi.B, psi.C, psi.D, U, np.zeros((1000, psi.n_x)), backend=be),
        "iqc_partial_sums 1000x31": lambda be: _kernels.iqc_partial_sums(R, M, backend=be),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = _kernels.available_backends()
    print(f"backends: {', '.join(backends)}")
    for name, fn in cases(np.random.default_rng(0)).items():
        times = {be: min(timeit.repeat(lambda: fn(be), number=1, repeat=args.repeat)) for be in backends}
        line = "  ".join(f"{be}={t * 1e3:8.2f} ms" for be, t in times.items())
        if "cython" in times:
            line += f"  speedup={times['python'] / times['cython']:.1f}x"
        print(f"{name:36s} {line}")


if __name__ == "__main__":
    main()
