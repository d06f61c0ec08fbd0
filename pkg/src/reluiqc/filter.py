"""The FIR filter that stacks current and delayed copies of (v, w)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lti import StateSpace, Trajectory


@dataclass(frozen=True)
class FilterRealization:
    """Shift-register realization of the stacking filter of horizon ``N``.

    States: v(k-1) .. v(k-N) in the first m*N slots, then w(k-1) .. w(k-N).
    Output: r(k) = [v(k); ...; v(k-N); w(k); ...; w(k-N)].
    """

    N: int
    m: int
    psi: StateSpace

    @property
    def n_states(self) -> int:
        return 2 * self.m * self.N

    @property
    def n_out(self) -> int:
        return 2 * self.m * (self.N + 1)

    @property
    def A(self):
        return self.psi.A

    @property
    def B1(self):
        return self.psi.B[:, : self.m]

    @property
    def B2(self):
        return self.psi.B[:, self.m :]

    @property
    def C(self):
        return self.psi.C

    @property
    def D1(self):
        return self.psi.D[:, : self.m]

    @property
    def D2(self):
        return self.psi.D[:, self.m :]


def _shift_register(N, m):
    S = np.zeros((m * N, m * N))
    if N > 1:
        S[m:, : m * (N - 1)] = np.eye(m * (N - 1))
    return S


def build_psi(N: int, m: int) -> FilterRealization:
    if N < 0 or m < 1:
        raise ValueError(f"need N >= 0 and m >= 1, got N={N}, m={m}")
    nh = m * N
    S = _shift_register(N, m)
    A = np.block([[S, np.zeros((nh, nh))], [np.zeros((nh, nh)), S]])

    B1 = np.zeros((2 * nh, m))
    B2 = np.zeros((2 * nh, m))
    if N > 0:
        B1[:m] = np.eye(m)
        B2[nh : nh + m] = np.eye(m)

    n_r = 2 * m * (N + 1)
    half = m * (N + 1)
    C = np.zeros((n_r, 2 * nh))
    C[m:half, :nh] = np.eye(nh)
    C[half + m :, nh:] = np.eye(nh)
    D1 = np.zeros((n_r, m))
    D2 = np.zeros((n_r, m))
    D1[:m] = np.eye(m)
    D2[half : half + m] = np.eye(m)

    psi = StateSpace(
        A,
        np.hstack([B1, B2]),
        C,
        np.hstack([D1, D2]),
        input_partition=(m, m),
        output_partition=(n_r,),
        input_names=("v", "w"),
        output_names=("r",),
    )
    return FilterRealization(N, m, psi)


def stacked_output(vw: Trajectory, N: int) -> Trajectory:
    """Build r(k) by direct indexing with zeros before time 0."""
    v, w = vw["v"], vw["w"]
    if v.shape != w.shape:
        raise ValueError("v and w must have equal width")
    m, T = v.shape
    r = np.zeros((2 * m * (N + 1), T))
    half = m * (N + 1)
    for lag in range(N + 1):
        if lag >= T:
            break
        r[lag * m : (lag + 1) * m, lag:] = v[:, : T - lag]
        r[half + lag * m : half + (lag + 1) * m, lag:] = w[:, : T - lag]
    return Trajectory({"v": v, "w": w, "r": r})
