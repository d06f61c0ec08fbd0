"""Discrete-time LTI systems: realization, stability, simulation."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from . import _kernels


def _check_partition(part, total, what):
    part = tuple(int(p) for p in part)
    if any(p <= 0 for p in part):
        raise ValueError(f"{what} partition must be positive integers, got {part}")
    if sum(part) != total:
        raise ValueError(f"{what} partition {part} does not sum to {total}")
    return part


@dataclass(frozen=True)
class StateSpace:
    """x(k+1) = A x(k) + B u(k),  y(k) = C x(k) + D u(k).

    Inputs and outputs are split into named channels by ``input_partition``
    and ``output_partition``.  ``n_x == 0`` is a pure feedthrough.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    input_partition: tuple = ()
    output_partition: tuple = ()
    input_names: tuple = ()
    output_names: tuple = ()

    def __post_init__(self):
        D = np.atleast_2d(np.array(self.D, dtype=float))
        if D.ndim != 2:
            raise ValueError(f"D must be 2-d, got shape {D.shape}")
        ny, nu = D.shape
        A = np.atleast_2d(np.array(self.A, dtype=float)) if np.size(self.A) else np.zeros((0, 0))
        nx = A.shape[0]
        if A.shape != (nx, nx):
            raise ValueError(f"A must be square, got shape {A.shape}")
        B = np.array(self.B, dtype=float) if nx else np.zeros((0, nu))
        C = np.array(self.C, dtype=float) if nx else np.zeros((ny, 0))
        if B.shape != (nx, nu) or C.shape != (ny, nx):
            raise ValueError(
                f"inconsistent state-space dimensions: A {A.shape}, B {B.shape}, C {C.shape}, D {D.shape}"
            )
        in_part = _check_partition(self.input_partition or (nu,), nu, "input") if nu else ()
        out_part = _check_partition(self.output_partition or (ny,), ny, "output") if ny else ()
        in_names = tuple(self.input_names) or tuple(f"u{i}" for i in range(len(in_part)))
        out_names = tuple(self.output_names) or tuple(f"y{i}" for i in range(len(out_part)))
        if len(in_names) != len(in_part) or len(out_names) != len(out_part):
            raise ValueError("channel names must match the partitions")
        for arr in (A, B, C, D):
            arr.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "input_partition", in_part)
        object.__setattr__(self, "output_partition", out_part)
        object.__setattr__(self, "input_names", in_names)
        object.__setattr__(self, "output_names", out_names)

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    @property
    def n_y(self) -> int:
        return self.C.shape[0]

    def input_slice(self, i: int) -> slice:
        start = sum(self.input_partition[:i])
        return slice(start, start + self.input_partition[i])

    def output_slice(self, i: int) -> slice:
        start = sum(self.output_partition[:i])
        return slice(start, start + self.output_partition[i])

    def transfer(self, z: complex) -> np.ndarray:
        """Evaluate C (zI - A)^{-1} B + D at a complex point."""
        if self.n_x == 0:
            return self.D.astype(complex)
        return self.C @ np.linalg.solve(z * np.eye(self.n_x) - self.A, self.B) + self.D

    def lurye_blocks(self) -> "LuryeBlocks":
        """Split a plant with inputs (w, d) and outputs (v, e) into its nine blocks."""
        if len(self.input_partition) != 2 or len(self.output_partition) != 2:
            raise ValueError("plant needs exactly two input channels (w, d) and two output channels (v, e)")
        w, d = self.input_slice(0), self.input_slice(1)
        v, e = self.output_slice(0), self.output_slice(1)
        return LuryeBlocks(
            self.A, self.B[:, w], self.B[:, d],
            self.C[v, :], self.C[e, :],
            self.D[v, w], self.D[v, d], self.D[e, w], self.D[e, d],
        )


class LuryeBlocks(NamedTuple):
    A: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    D11: np.ndarray
    D12: np.ndarray
    D21: np.ndarray
    D22: np.ndarray


def lurye_plant(A, B1, B2, C1, C2, D11, D12, D21, D22) -> StateSpace:
    """Assemble a plant with inputs (w, d) and outputs (v, e) from its blocks."""
    B1, B2, C1, C2 = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (B1, B2, C1, C2))
    D11, D12, D21, D22 = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (D11, D12, D21, D22))
    m, nd, ne = D11.shape[1], D12.shape[1], D21.shape[0]
    return StateSpace(
        A,
        np.hstack([B1, B2]),
        np.vstack([C1, C2]),
        np.block([[D11, D12], [D21, D22]]),
        input_partition=(m, nd),
        output_partition=(D11.shape[0], ne),
        input_names=("w", "d"),
        output_names=("v", "e"),
    )


@dataclass(frozen=True)
class Trajectory:
    """Sampled signals on k = 0..T0; ``channels[name][:, k]`` is the value at time k.

    Values before k = 0 are zero by convention.
    """

    channels: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        chans = {}
        horizon = None
        for name, arr in self.channels.items():
            arr = np.array(arr, dtype=float)
            if arr.ndim == 1:
                arr = arr.reshape(1, -1)
            if arr.ndim != 2:
                raise ValueError(f"channel {name!r} must be (width, T0+1)")
            if horizon is None:
                horizon = arr.shape[1]
            elif arr.shape[1] != horizon:
                raise ValueError("all channels must share the same horizon")
            arr.setflags(write=False)
            chans[name] = arr
        object.__setattr__(self, "channels", chans)

    @property
    def T0(self) -> int:
        if not self.channels:
            return -1
        return next(iter(self.channels.values())).shape[1] - 1

    @property
    def n_samples(self) -> int:
        return self.T0 + 1

    def __getitem__(self, name: str) -> np.ndarray:
        return self.channels[name]

    def __contains__(self, name: str) -> bool:
        return name in self.channels

    def energy(self, name: str) -> float:
        return float(np.sum(self.channels[name] ** 2))


@dataclass(frozen=True)
class FirstOrder:
    """The scalar term gain / (z - pole)."""

    gain: float
    pole: float


_FIRST_ORDER_RE = re.compile(
    r"^\s*(?P<c>[-+]?[\d.eE+-]+)\s*/\s*\(\s*z\s*(?P<sign>[-+])\s*(?P<a>[\d.eE+-]+)\s*\)\s*$"
)
_PURE_DELAY_RE = re.compile(r"^\s*(?P<c>[-+]?[\d.eE+-]+)\s*/\s*z\s*$")


def parse_entry(entry):
    """Normalize one grid entry to a float or a FirstOrder term.

    Accepts numbers, FirstOrder, strings like ``"-0.13/(z-0.98)"``, mappings
    ``{"gain": c, "pole": a}`` and polynomial pairs ``(num, den)`` in
    descending powers of z.
    """
    if isinstance(entry, FirstOrder):
        return entry
    if isinstance(entry, (int, float, np.floating, np.integer)):
        return float(entry)
    if isinstance(entry, Mapping):
        if set(entry) == {"gain", "pole"}:
            return FirstOrder(float(entry["gain"]), float(entry["pole"]))
        if set(entry) == {"num", "den"}:
            return parse_entry((entry["num"], entry["den"]))
        raise ValueError(f"unrecognised transfer entry {entry!r}")
    if isinstance(entry, str):
        s = entry.strip()
        try:
            return float(s)
        except ValueError:
            pass
        mt = _FIRST_ORDER_RE.match(s)
        if mt:
            a = float(mt["a"]) * (1.0 if mt["sign"] == "-" else -1.0)
            return FirstOrder(float(mt["c"]), a)
        mt = _PURE_DELAY_RE.match(s)
        if mt:
            return FirstOrder(float(mt["c"]), 0.0)
        raise ValueError(f"cannot parse transfer entry {entry!r}; expected 'c/(z-a)' or a constant")
    if isinstance(entry, Sequence) and len(entry) == 2:
        num = np.trim_zeros(np.atleast_1d(np.asarray(entry[0], dtype=float)), "f")
        den = np.trim_zeros(np.atleast_1d(np.asarray(entry[1], dtype=float)), "f")
        if den.size == 0:
            raise ValueError("zero denominator")
        if num.size == 0:
            return 0.0
        if num.size > den.size:
            raise ValueError(f"improper transfer entry {entry!r}")
        if den.size > 2:
            raise ValueError(f"entry {entry!r} is higher than first order")
        if den.size == 1:
            return float(num[0] / den[0])
        if num.size == 2:
            raise ValueError(f"entry {entry!r} is not strictly proper")
        return FirstOrder(float(num[0] / den[0]), float(-den[1] / den[0]))
    raise ValueError(f"unrecognised transfer entry {entry!r}")


def realize_first_order_bank(
    entries,
    input_partition=None,
    output_partition=None,
    input_names=(),
    output_names=(),
) -> StateSpace:
    """Realize a grid of constants and first-order terms c/(z-a).

    One state per non-constant entry, ordered row-major over the grid, so A is
    diagonal with the poles, B injects a unit from the entry's column and C
    reads the entry's gain into its row.
    """
    grid = [[parse_entry(e) for e in row] for row in entries]
    ny = len(grid)
    nu = len(grid[0]) if ny else 0
    if any(len(row) != nu for row in grid):
        raise ValueError("transfer grid rows have unequal length")
    terms = [(i, j, e) for i, row in enumerate(grid) for j, e in enumerate(row) if isinstance(e, FirstOrder)]
    nx = len(terms)
    A = np.zeros((nx, nx))
    B = np.zeros((nx, nu))
    C = np.zeros((ny, nx))
    D = np.array([[0.0 if isinstance(e, FirstOrder) else e for e in row] for row in grid]).reshape(ny, nu)
    for s, (i, j, e) in enumerate(terms):
        A[s, s] = e.pole
        B[s, j] = 1.0
        C[i, s] = e.gain
    return StateSpace(
        A, B, C, D,
        input_partition=tuple(input_partition or ((nu,) if nu else ())),
        output_partition=tuple(output_partition or ((ny,) if ny else ())),
        input_names=tuple(input_names),
        output_names=tuple(output_names),
    )


def spectral_radius(sys: StateSpace) -> float:
    if sys.n_x == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(sys.A))))


def _stack_inputs(sys: StateSpace, inputs: Trajectory) -> np.ndarray:
    if all(name in inputs for name in sys.input_names):
        blocks = []
        for i, name in enumerate(sys.input_names):
            arr = inputs[name]
            if arr.shape[0] != sys.input_partition[i]:
                raise ValueError(
                    f"input channel {name!r} has width {arr.shape[0]}, expected {sys.input_partition[i]}"
                )
            blocks.append(arr)
        return np.vstack(blocks) if blocks else np.zeros((0, inputs.n_samples))
    if "u" in inputs and inputs["u"].shape[0] == sys.n_u:
        return inputs["u"]
    raise ValueError(f"trajectory lacks input channels {sys.input_names}")


def simulate(sys: StateSpace, inputs: Trajectory, x0=None) -> Trajectory:
    """Run the state recursion over the input horizon.

    Returns the output channels (named per ``sys.output_names``) and the
    state channel ``"x"`` holding x(0) .. x(T0).
    """
    U = _stack_inputs(sys, inputs)
    T = U.shape[1]
    x0 = np.zeros(sys.n_x) if x0 is None else np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape != (sys.n_x,):
        raise ValueError(f"x0 must have length {sys.n_x}")
    Y, X = _kernels.lti_response(sys.A, sys.B, sys.C, sys.D, U.T[None, :, :], x0[None, :])
    Y, X = Y[0].T, X[0].T
    out = {name: Y[sys.output_slice(i), :] for i, name in enumerate(sys.output_names)}
    out["x"] = X[:, :T]
    return Trajectory(out)
