"""Augmented plant and the affine matrix function of the dissipation LMI.

The LMI variable ordering is (x_hat, w, d): the first block has the
augmented state width, then the nonlinearity channel, then the disturbance.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .filter import FilterRealization
from .lti import StateSpace, lurye_plant
from .multiplier import MultiplierLayout


@dataclass(frozen=True, eq=False)
class AugmentedPlant:
    """Plant and filter combined: inputs (w, d), outputs (r, e), state [x; psi]."""

    ghat: StateSpace
    plant: StateSpace
    filt: FilterRealization

    @property
    def n_xhat(self) -> int:
        return self.ghat.n_x

    @property
    def m(self) -> int:
        return self.filt.m

    @property
    def N(self) -> int:
        return self.filt.N

    @property
    def n_d(self) -> int:
        return self.ghat.input_partition[1]

    @property
    def n_e(self) -> int:
        return self.ghat.output_partition[1]

    @property
    def n_r(self) -> int:
        return self.ghat.output_partition[0]

    @property
    def lmi_size(self) -> int:
        return self.n_xhat + self.m + self.n_d

    def blocks(self):
        return self.ghat.lurye_blocks()


def augment(plant: StateSpace, filt: FilterRealization) -> AugmentedPlant:
    A, B1, B2, C1, C2, D11, D12, D21, D22 = plant.lurye_blocks()
    m = filt.m
    if B1.shape[1] != m or C1.shape[0] != m:
        raise ValueError(
            f"plant nonlinearity channels are ({C1.shape[0]} out, {B1.shape[1]} in), filter expects width {m}"
        )
    Ap, Bp1, Bp2, Cp, Dp1, Dp2 = filt.A, filt.B1, filt.B2, filt.C, filt.D1, filt.D2
    nx, npsi = A.shape[0], Ap.shape[0]
    Ahat = np.block([[A, np.zeros((nx, npsi))], [Bp1 @ C1, Ap]])
    B1hat = np.vstack([B1, Bp1 @ D11 + Bp2])
    B2hat = np.vstack([B2, Bp1 @ D12])
    C1hat = np.hstack([Dp1 @ C1, Cp])
    C2hat = np.hstack([C2, np.zeros((C2.shape[0], npsi))])
    D11hat = Dp1 @ D11 + Dp2
    D12hat = Dp1 @ D12
    ghat = lurye_plant(Ahat, B1hat, B2hat, C1hat, C2hat, D11hat, D12hat, D21, D22)
    ghat = StateSpace(
        ghat.A, ghat.B, ghat.C, ghat.D,
        input_partition=ghat.input_partition,
        output_partition=ghat.output_partition,
        input_names=("w", "d"),
        output_names=("r", "e"),
    )
    return AugmentedPlant(ghat, plant, filt)


def lifted_lmi(aug: AugmentedPlant, P, M, gamma2: float) -> np.ndarray:
    """Dense evaluation of L(P, M, gamma^2), block by block."""
    A, B1, B2, C1, C2, D11, D12, D21, D22 = aug.blocks()
    P = np.asarray(P, dtype=float)
    M = np.asarray(M, dtype=float)
    n_d = B2.shape[1]
    top = np.block([
        [A.T @ P @ A - P, A.T @ P @ B1, A.T @ P @ B2],
        [B1.T @ P @ A, B1.T @ P @ B1, B1.T @ P @ B2],
        [B2.T @ P @ A, B2.T @ P @ B1, B2.T @ P @ B2 - gamma2 * np.eye(n_d)],
    ])
    perf = np.vstack([C2.T, D21.T, D22.T])
    iqc = np.vstack([C1.T, D11.T, D12.T])
    return top + perf @ perf.T + iqc @ M @ iqc.T


@dataclass(frozen=True, eq=False)
class LmiAssembly:
    """L = L0 + sum_k x_k F_k over the decision vector x = (P entries, multiplier entries, t).

    P contributes its upper triangle (row-major over i <= j), the multiplier
    contributes per ``layout``, and the last coordinate is t = gamma^2.
    """

    aug: AugmentedPlant
    layout: MultiplierLayout
    L0: np.ndarray
    F: np.ndarray  # (n_vars, n, n)
    p_index: tuple = field(repr=False)

    @property
    def size(self) -> int:
        return self.L0.shape[0]

    @property
    def n_p(self) -> int:
        return len(self.p_index)

    @property
    def n_q(self) -> int:
        return self.layout.n_vars

    @property
    def n_vars(self) -> int:
        return self.F.shape[0]

    @property
    def t_slot(self) -> int:
        return self.n_vars - 1

    def q_slice(self) -> slice:
        return slice(self.n_p, self.n_p + self.n_q)

    def evaluate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.L0 + np.tensordot(x, self.F, axes=1)

    def pack(self, P, multiplier, gamma2: float) -> np.ndarray:
        P = np.asarray(P, dtype=float)
        iu = tuple(np.array(ix) for ix in zip(*self.p_index))
        p = 0.5 * (P[iu] + P.T[iu])
        return np.concatenate([p, self.layout.to_vector(multiplier), [gamma2]])

    def unpack(self, x):
        """Split a decision vector into (P, multiplier, t)."""
        x = np.asarray(x, dtype=float)
        n = self.aug.n_xhat
        P = np.zeros((n, n))
        for val, (i, j) in zip(x[: self.n_p], self.p_index):
            P[i, j] = val
            P[j, i] = val
        return P, self.layout.from_vector(x[self.q_slice()]), float(x[self.t_slot])

    def evaluate_at(self, P, multiplier, gamma2: float) -> np.ndarray:
        return self.evaluate(self.pack(P, multiplier, gamma2))


def assemble_L(aug: AugmentedPlant, kind: str) -> LmiAssembly:
    A, B1, B2, C1, C2, D11, D12, D21, D22 = aug.blocks()
    n = aug.n_xhat
    size = aug.lmi_size
    layout = MultiplierLayout(kind, aug.N, aug.m)

    AB = np.hstack([A, B1, B2])  # rows indexed by state
    E = np.hstack([np.eye(n), np.zeros((n, size - n))])
    iu, ju = np.triu_indices(n)
    # coefficient of P[i, j] (i <= j): AB_i' AB_j + AB_j' AB_i - (E_i' E_j + E_j' E_i), halved on the diagonal
    Fp = np.einsum("ka,kb->kab", AB[iu], AB[ju]) - np.einsum("ka,kb->kab", E[iu], E[ju])
    Fp = Fp + Fp.transpose(0, 2, 1)
    Fp[iu == ju] *= 0.5

    iqc = np.hstack([C1, D11, D12])  # r = iqc @ (x_hat, w, d)
    Fq = np.einsum("ra,krs,sb->kab", iqc, layout.basis_middles(), iqc)

    Ft = np.zeros((1, size, size))
    Ft[0, size - aug.n_d :, size - aug.n_d :] = -np.eye(aug.n_d)

    perf = np.hstack([C2, D21, D22])
    L0 = perf.T @ perf

    F = np.concatenate([Fp, Fq, Ft])
    F.setflags(write=False)
    L0.setflags(write=False)
    return LmiAssembly(aug, layout, L0, F, tuple(zip(iu.tolist(), ju.tolist())))


def embed_state(P, aug_from: AugmentedPlant, aug_to: AugmentedPlant, fill: float = 0.0) -> np.ndarray:
    """Place a storage matrix for horizon N into the state space of a longer horizon.

    Plant states keep their position; the delayed-v and delayed-w registers
    keep their leading lags.  The new (oldest) lags get ``fill`` on the
    diagonal.
    """
    nx = aug_from.plant.n_x
    m = aug_from.m
    N0, N1 = aug_from.N, aug_to.N
    if N1 < N0 or aug_to.m != m:
        raise ValueError("target horizon must be at least as long with the same width")
    idx = list(range(nx))
    idx += [nx + j for j in range(m * N0)]
    idx += [nx + m * N1 + j for j in range(m * N0)]
    out = np.zeros((aug_to.n_xhat, aug_to.n_xhat))
    out[np.ix_(idx, idx)] = P
    new = sorted(set(range(aug_to.n_xhat)) - set(idx))
    out[new, new] = fill
    return out
