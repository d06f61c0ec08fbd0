"""Time-domain checks that do not go through any LMI.

Closed-loop simulation, hard-IQC partial sums on random signals, and
empirical lower bounds on the loop gain.  All randomness is seeded and the
seed is echoed in the returned reports.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from . import _kernels
from .filter import build_psi
from .lti import StateSpace, Trajectory
from .multiplier import RELU, SLOPE, MiddleMatrix

_CODES = {
    "relu": _kernels.RELU,
    "saturation": _kernels.SATURATION,
    "scaled-identity": _kernels.SCALED_IDENTITY,
    "tanh": _kernels.TANH,
}

STRATEGIES = ("random-gaussian", "sinusoid-grid", "coordinate-ascent")


@dataclass(frozen=True)
class NonlinearityKind:
    """A scalar map applied elementwise; every tag is slope-restricted to [0, 1] with f(0) = 0."""

    tag: str
    lam: float = 1.0

    def __post_init__(self):
        if self.tag not in _CODES:
            raise ValueError(f"unknown nonlinearity {self.tag!r}; expected one of {sorted(_CODES)}")
        if self.tag == "scaled-identity" and not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"scaled-identity needs lam in [0, 1], got {self.lam}")

    @property
    def code(self) -> int:
        return _CODES[self.tag]

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        if self.tag == "relu":
            return np.maximum(v, 0.0)
        if self.tag == "saturation":
            return np.clip(v, -1.0, 1.0)
        if self.tag == "scaled-identity":
            return self.lam * v
        return np.tanh(v)

    def admitted_by(self, kind: str) -> bool:
        """Whether multipliers of ``kind`` are valid for this map."""
        return kind == SLOPE or (kind == RELU and self.tag == "relu")


def _loop_blocks(plant: StateSpace):
    b = plant.lurye_blocks()
    if np.any(b.D11 != 0):
        raise ValueError("closed-loop simulation needs D11 = 0 (explicit loop equation)")
    return b


def _loop_batch(plant, nl, D, backend=None):
    """D has shape (batch, T, n_d); returns (X, V, W, E) time-major."""
    b = _loop_blocks(plant)
    x0 = np.zeros((D.shape[0], b.A.shape[0]))
    return _kernels.lurye_response(
        b.A, b.B1, b.B2, b.C1, b.C2, b.D12, b.D21, b.D22, D, x0, nl.code, nl.lam, backend=backend
    )


def simulate_loop(plant: StateSpace, nl: NonlinearityKind, d, x0=None, backend=None) -> Trajectory:
    """Simulate the loop w = f(v) from x0 under disturbance ``d``.

    ``d`` is a Trajectory with channel ``"d"`` or an array (n_d, T0+1).
    Returns channels x, v, w, e on k = 0..T0.
    """
    b = _loop_blocks(plant)
    d = d["d"] if isinstance(d, Trajectory) else np.atleast_2d(np.asarray(d, dtype=float))
    if d.shape[0] != b.B2.shape[1]:
        raise ValueError(f"disturbance width {d.shape[0]} does not match plant ({b.B2.shape[1]})")
    nx = b.A.shape[0]
    x0 = np.zeros(nx) if x0 is None else np.asarray(x0, dtype=float).reshape(nx)
    X, V, W, E = _kernels.lurye_response(
        b.A, b.B1, b.B2, b.C1, b.C2, b.D12, b.D21, b.D22, d.T[None], x0[None], nl.code, nl.lam, backend=backend
    )
    T = d.shape[1]
    return Trajectory({"x": X[0, :T].T, "v": V[0].T, "w": W[0].T, "e": E[0].T, "d": d})


@dataclass(frozen=True)
class HardIqcReport:
    min_partial_sum: float
    min_normalized: float  # min over trials of partial sum / (1 + energy of r)
    worst_trial: int
    worst_T0: int
    trials: int
    T0max: int
    seed: int
    tol: float

    @property
    def passed(self) -> bool:
        return self.min_normalized >= -self.tol


def _draw_v(rng, trials, T, m, amplitude):
    """Gaussian trials at log-uniform scales, a quarter of them sparse, a few with shared sign patterns."""
    scale = amplitude * 10.0 ** rng.uniform(-2, 2, size=(trials, 1, 1))
    v = rng.standard_normal((trials, T, m)) * scale
    sparse = rng.random(trials) < 0.25
    v[sparse] *= rng.random((int(sparse.sum()), T, m)) < 0.2
    same = rng.random(trials) < 0.1
    v[same] = np.abs(v[same]) * np.sign(rng.standard_normal((int(same.sum()), 1, m)))
    return v


def check_hard_iqc(nl: NonlinearityKind, M, N: int, trials: int = 1000, T0max: int = 30, seed: int = 0,
                   amplitude: float = 1.0, tol: float = 1e-9, v=None, backend=None) -> HardIqcReport:
    """Minimum over trials and T0 <= T0max of sum_{k<=T0} r(k)' M r(k).

    r is produced by simulating the stacking filter on (v, f(v)).  Pass
    ``v`` with shape (trials, T0max+1, m) to bypass the random draw.
    """
    if isinstance(M, MiddleMatrix):
        if not nl.admitted_by(M.kind):
            raise ValueError(f"{M.kind} multipliers do not cover {nl.tag}")
        M = M.M
    M = np.asarray(M, dtype=float)
    m = M.shape[0] // (2 * (N + 1))
    if M.shape != (2 * m * (N + 1),) * 2:
        raise ValueError(f"middle matrix shape {M.shape} does not fit horizon N={N}")
    rng = np.random.default_rng(seed)
    if v is None:
        v = _draw_v(rng, trials, T0max + 1, m, amplitude)
    v = np.asarray(v, dtype=float)
    w = nl(v)
    psi = build_psi(N, m).psi
    R, _ = _kernels.lti_response(psi.A, psi.B, psi.C, psi.D, np.concatenate([v, w], axis=2),
                                 np.zeros((v.shape[0], psi.n_x)), backend=backend)
    S = _kernels.iqc_partial_sums(R, M, backend=backend)
    energy = np.cumsum(np.sum(R**2, axis=2), axis=1)
    norm = S / (1.0 + energy)
    b, k = np.unravel_index(np.argmin(norm), norm.shape)
    return HardIqcReport(float(S.min()), float(norm[b, k]), int(b), int(k), v.shape[0], v.shape[1] - 1, seed, tol)


@dataclass(frozen=True)
class GainEstimate:
    value: float
    strategy: str
    evaluations: int
    horizon: int
    seed: int
    d: np.ndarray  # best disturbance found, (n_d, horizon)


def _ratios(plant, nl, D, backend=None):
    _, _, _, E = _loop_batch(plant, nl, D, backend)
    num = np.sum(E**2, axis=(1, 2))
    den = np.sum(D**2, axis=(1, 2))
    return np.sqrt(num / np.where(den > 0, den, np.inf))


def _open_loop_direction(plant, omega):
    b = plant.lurye_blocks()
    z = np.exp(1j * omega)
    G = b.C2 @ np.linalg.solve(z * np.eye(b.A.shape[0]) - b.A, b.B2) + b.D22 if b.A.size else b.D22
    _, _, vh = np.linalg.svd(np.atleast_2d(G))
    return vh[0].conj()


def empirical_gain(plant: StateSpace, nl: NonlinearityKind, strategy: str = "random-gaussian",
                   budget: int = 5000, horizon: int = 200, seed: int = 0, batch: int = 250,
                   backend=None) -> GainEstimate:
    """Largest ||e|| / ||d|| seen over ``budget`` simulated disturbances from rest.

    Every value is achieved by an actual trajectory, so the result is a
    lower bound on the induced gain of the loop.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    if budget < 1:
        raise ValueError("budget must be positive")
    rng = np.random.default_rng(seed)
    n_d = plant.input_partition[1]
    best_val, best_d, used = -np.inf, None, 0

    def consider(D):
        nonlocal best_val, best_d, used
        r = _ratios(plant, nl, D, backend)
        used += D.shape[0]
        i = int(np.argmax(r))
        if r[i] > best_val:
            best_val, best_d = float(r[i]), D[i].copy()
        return r

    def random_batch(n):
        D = rng.standard_normal((n, horizon, n_d))
        D *= 10.0 ** rng.uniform(-1, 1, size=(n, 1, 1))
        # bias some trials toward low frequencies, where lightly damped poles live
        smooth = rng.random(n) < 0.5
        D[smooth] = np.cumsum(D[smooth], axis=1) / np.sqrt(horizon)
        return D

    if strategy == "sinusoid-grid":
        k = np.arange(horizon)
        n_dirs = 2
        n_freq = max(1, budget // n_dirs)
        for lo in range(0, n_freq, batch):
            omegas = np.pi * (np.arange(lo, min(lo + batch, n_freq)) + 0.5) / n_freq
            omegas = omegas**2 / np.pi  # denser near zero
            D = np.empty((2 * len(omegas), horizon, n_d))
            for j, om in enumerate(omegas):
                u = _open_loop_direction(plant, om)
                D[2 * j] = np.abs(u)[None, :] * np.cos(om * k[:, None] + np.angle(u)[None, :])
                u2 = rng.standard_normal(n_d)
                D[2 * j + 1] = np.cos(om * k)[:, None] * u2[None, :]
            D *= 10.0 ** rng.uniform(-1, 1, size=(D.shape[0], 1, 1))
            consider(D)
    elif strategy == "random-gaussian":
        while used < budget:
            consider(random_batch(min(batch, budget - used)))
    else:
        seed_n = max(1, min(budget // 5, 1000))
        consider(random_batch(seed_n))
        step = 0.5 * np.sqrt(np.mean(best_d**2))
        while used < budget:
            n = min(batch, budget - used)
            D = np.repeat(best_d[None], n, axis=0)
            # perturb a random time window in each candidate
            starts = rng.integers(0, horizon, size=n)
            widths = rng.integers(1, max(2, horizon // 4), size=n)
            for i in range(n):
                sl = slice(starts[i], min(horizon, starts[i] + widths[i]))
                D[i, sl] += step * rng.standard_normal((sl.stop - sl.start, n_d))
            before = best_val
            consider(D)
            step *= 1.1 if best_val > before else 0.9
    return GainEstimate(best_val, strategy, used, horizon, seed, best_d.T)


def hinf_norm_grid(sys: StateSpace, input_channel=None, output_channel=None, *, n_grid: int = 4000) -> float:
    """H-infinity norm of a stable system by frequency gridding plus local refinement.

    Optional channel indices restrict to one input/output partition block.
    """
    A = sys.A
    B = sys.B if input_channel is None else sys.B[:, sys.input_slice(input_channel)]
    C = sys.C if output_channel is None else sys.C[sys.output_slice(output_channel), :]
    D = sys.D
    if input_channel is not None:
        D = D[:, sys.input_slice(input_channel)]
    if output_channel is not None:
        D = D[sys.output_slice(output_channel), :]
    if A.size and np.max(np.abs(np.linalg.eigvals(A))) >= 1.0:
        return float("inf")
    eye = np.eye(A.shape[0])

    def sigma(om):
        G = D if not A.size else C @ np.linalg.solve(np.exp(1j * om) * eye - A, B) + D
        return float(np.linalg.norm(G, 2)) if G.size else 0.0

    # quadratic spacing resolves peaks from poles near z = 1
    grid = np.pi * np.linspace(0.0, 1.0, n_grid) ** 2
    vals = np.array([sigma(om) for om in grid])
    best = float(vals.max())
    for i in np.argsort(vals)[-5:]:
        lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, n_grid - 1)]
        if hi > lo:
            res = minimize_scalar(lambda om: -sigma(om), bounds=(lo, hi), method="bounded",
                                  options={"xatol": 1e-12})
            best = max(best, -float(res.fun))
    return best


__all__ = [
    "GainEstimate",
    "HardIqcReport",
    "NonlinearityKind",
    "STRATEGIES",
    "check_hard_iqc",
    "empirical_gain",
    "hinf_norm_grid",
    "simulate_loop",
]
