"""Multiplier classes for repeated slope-restricted and repeated ReLU nonlinearities.

Index convention: a family indexed i = -N..N is stored as a tuple ordered
from i = -N up to i = N, so ``Q[i + N]`` is Q_i.  Families indexed 0..N are
stored in order.  All middle matrices act on the filter output
r = [v(k); ...; v(k-N); w(k); ...; w(k-N)].
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

SLOPE = "slope"
RELU = "relu"
KINDS = (SLOPE, RELU)


@dataclass(frozen=True)
class ConstraintViolation:
    family: str
    index: int | None
    entry: tuple | None
    condition: str
    value: float

    def __str__(self):
        where = self.family
        if self.index is not None:
            where += f"[{self.index}]"
        if self.entry is not None:
            where += f"{self.entry}"
        return f"{where}: {self.condition} (value {self.value:.3g})"


class MultiplierConstraintError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        lines = "\n  ".join(str(v) for v in self.violations)
        super().__init__(f"{len(self.violations)} multiplier constraint(s) violated:\n  {lines}")


def _freeze_family(blocks, count, m, name):
    blocks = tuple(np.array(b, dtype=float).reshape(m, m) for b in blocks)
    if len(blocks) != count:
        raise ValueError(f"{name} needs {count} blocks, got {len(blocks)}")
    for b in blocks:
        b.setflags(write=False)
    return blocks


def block_toeplitz(first_row: Sequence, first_col: Sequence, T0: int) -> np.ndarray:
    """Block-Toeplitz matrix with (T0+1) x (T0+1) blocks.

    Block (a, b) is ``first_row[b-a]`` above the diagonal and
    ``first_col[a-b]`` below it; lags past the end of either list are zero
    and lists longer than T0+1 are truncated.  ``first_row[0]`` is the
    diagonal block.
    """
    if T0 < 0:
        raise ValueError("T0 must be nonnegative")
    first_row = [np.atleast_2d(np.asarray(b, dtype=float)) for b in first_row]
    first_col = [np.atleast_2d(np.asarray(b, dtype=float)) for b in first_col]
    m = first_row[0].shape[0]
    out = np.zeros(((T0 + 1) * m, (T0 + 1) * m))
    for a in range(T0 + 1):
        for b in range(T0 + 1):
            lag = b - a
            if lag >= 0 and lag < len(first_row):
                blk = first_row[lag]
            elif lag < 0 and -lag < len(first_col):
                blk = first_col[-lag]
            else:
                continue
            out[a * m : (a + 1) * m, b * m : (b + 1) * m] = blk
    return out


def _arrowhead(first_row, first_col):
    """Blocks only along the first block row and first block column."""
    N = len(first_row) - 1
    m = first_row[0].shape[0]
    out = np.zeros(((N + 1) * m, (N + 1) * m))
    for j, blk in enumerate(first_row):
        out[:m, j * m : (j + 1) * m] = blk
    for i in range(1, N + 1):
        out[i * m : (i + 1) * m, :m] = first_col[i]
    return out


def _offdiag_mask(m):
    return ~np.eye(m, dtype=bool)


def _sum_floor(X, axis, slack):
    """Lower limit for a sum that is >= 0 in exact arithmetic: allows summation-order rounding."""
    n = X.shape[axis]
    return -slack - n * np.finfo(float).eps * np.abs(X).sum(axis=axis)


def is_doubly_hyperdominant(X, slack: float = 0.0) -> bool:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise ValueError("square matrix expected")
    off = X[_offdiag_mask(X.shape[0])]
    return bool(
        np.all(off <= slack)
        and np.all(X.sum(axis=1) >= _sum_floor(X, 1, slack))
        and np.all(X.sum(axis=0) >= _sum_floor(X, 0, slack))
    )


def is_metzler(X, slack: float = 0.0) -> bool:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise ValueError("square matrix expected")
    return bool(np.all(X[_offdiag_mask(X.shape[0])] >= -slack))


def is_symmetric_nonnegative(X, slack: float = 0.0) -> bool:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise ValueError("square matrix expected")
    return bool(np.all(np.abs(X - X.T) <= slack) and np.all(X >= -slack))


def _lift_center_diagonal(Q: list, N: int, extra=None) -> None:
    """Set diag(Q[N]) in place so every row and column sum of the family is >= 0 exactly.

    The diagonal becomes the smallest feasible value plus ``extra`` if given,
    otherwise it is only raised where the current value falls short.
    """
    Q0 = Q[N]
    old = np.diag(Q0).copy()
    np.fill_diagonal(Q0, 0.0)
    need = np.maximum(-np.hstack(Q).sum(axis=1), -np.vstack(Q).sum(axis=0))
    diag = need + extra if extra is not None else np.maximum(old, need)
    np.fill_diagonal(Q0, diag)
    for _ in range(64):  # a zero sum can come out at -1e-16; nudge by ulps
        short = (np.hstack(Q).sum(axis=1) < 0) | (np.vstack(Q).sum(axis=0) < 0)
        if not short.any():
            return
        diag = np.where(short, diag + 4 * np.spacing(np.abs(diag) + 1.0), diag)
        np.fill_diagonal(Q0, diag)


@dataclass(frozen=True, eq=False)
class SlopeMultiplier:
    """Coefficients {Q_i}, i = -N..N, for repeated nonlinearities slope-restricted to [0, 1]."""

    N: int
    m: int
    Q: tuple

    kind = SLOPE

    def __post_init__(self):
        object.__setattr__(self, "Q", _freeze_family(self.Q, 2 * self.N + 1, self.m, "Q"))

    @classmethod
    def zeros(cls, N, m):
        return cls(N, m, [np.zeros((m, m))] * (2 * N + 1))

    def q(self, i: int) -> np.ndarray:
        return self.Q[i + self.N]

    @property
    def M_row(self) -> np.ndarray:
        return np.hstack(self.Q)

    @property
    def M_col(self) -> np.ndarray:
        return np.vstack(self.Q)

    def M0(self) -> np.ndarray:
        return _arrowhead([self.q(j) for j in range(self.N + 1)], [self.q(-i) for i in range(self.N + 1)])

    def toeplitz(self, T0: int) -> np.ndarray:
        return block_toeplitz([self.q(j) for j in range(self.N + 1)], [self.q(-i) for i in range(self.N + 1)], T0)

    def violations(self, slack: float = 0.0) -> list:
        out = []
        m = self.m
        for i in range(-self.N, self.N + 1):
            Qi = self.q(i)
            for a in range(m):
                for b in range(m):
                    if i == 0 and a == b:
                        continue
                    if Qi[a, b] > slack:
                        cond = "off-diagonal entry must be <= 0" if i == 0 else "entry must be <= 0"
                        out.append(ConstraintViolation("Q", i, (a, b), cond, Qi[a, b]))
        row_sums = self.M_row.sum(axis=1)
        row_floor = _sum_floor(self.M_row, 1, slack)
        for a, s in enumerate(row_sums):
            if s < row_floor[a]:
                out.append(ConstraintViolation("M_row", None, (a,), "row sum must be >= 0", s))
        col_sums = self.M_col.sum(axis=0)
        col_floor = _sum_floor(self.M_col, 0, slack)
        for b, s in enumerate(col_sums):
            if s < col_floor[b]:
                out.append(ConstraintViolation("M_col", None, (b,), "column sum must be >= 0", s))
        return out

    def is_valid(self, slack: float = 0.0) -> bool:
        return not self.violations(slack)

    def validate(self, slack: float = 0.0) -> "SlopeMultiplier":
        bad = self.violations(slack)
        if bad:
            raise MultiplierConstraintError(bad)
        return self

    def padded(self, N: int) -> "SlopeMultiplier":
        """The same constraint on a longer horizon, new lags set to zero."""
        if N < self.N:
            raise ValueError("cannot shrink a multiplier")
        z = [np.zeros((self.m, self.m))] * (N - self.N)
        return SlopeMultiplier(N, self.m, z + list(self.Q) + z)

    def projected(self) -> "SlopeMultiplier":
        """Nearby member of the class: clip positive entries, then lift diag(Q_0) to restore the sums.

        Used to clean solver output whose sign constraints hold only to solver tolerance.
        """
        Q = [np.minimum(q, 0.0) for q in self.Q]
        np.fill_diagonal(Q[self.N], np.diag(self.Q[self.N]))
        _lift_center_diagonal(Q, self.N)
        return SlopeMultiplier(self.N, self.m, Q)

    def to_relu(self) -> "ReluMultiplier":
        """Embed into the ReLU class: Q1 = Q2 = 0 and Q3_i = -Q_i."""
        zeros = [np.zeros((self.m, self.m))] * (self.N + 1)
        return ReluMultiplier(self.N, self.m, zeros, zeros, [-q for q in self.Q])


@dataclass(frozen=True, eq=False)
class ReluMultiplier:
    """Coefficients for the repeated ReLU.

    ``Q1`` and ``Q2`` hold lags 0..N: the lag-0 blocks are symmetric, and
    every block is entrywise nonnegative.  A lag-i block sits in the first
    block row of its arrowhead and its transpose in the first block column,
    which keeps the middle matrix symmetric.  ``Q3`` holds lags -N..N:
    nonnegative off lag 0, Metzler at lag 0.
    """

    N: int
    m: int
    Q1: tuple
    Q2: tuple
    Q3: tuple

    kind = RELU

    def __post_init__(self):
        object.__setattr__(self, "Q1", _freeze_family(self.Q1, self.N + 1, self.m, "Q1"))
        object.__setattr__(self, "Q2", _freeze_family(self.Q2, self.N + 1, self.m, "Q2"))
        object.__setattr__(self, "Q3", _freeze_family(self.Q3, 2 * self.N + 1, self.m, "Q3"))

    @classmethod
    def zeros(cls, N, m):
        z = np.zeros((m, m))
        return cls(N, m, [z] * (N + 1), [z] * (N + 1), [z] * (2 * N + 1))

    def q3(self, i: int) -> np.ndarray:
        return self.Q3[i + self.N]

    def M1(self) -> np.ndarray:
        return _arrowhead(list(self.Q1), [q.T for q in self.Q1])

    def M2(self) -> np.ndarray:
        return _arrowhead(list(self.Q2), [q.T for q in self.Q2])

    def M3(self) -> np.ndarray:
        return _arrowhead([self.q3(j) for j in range(self.N + 1)], [self.q3(-i) for i in range(self.N + 1)])

    def toeplitz(self, T0: int):
        """The three block-Toeplitz matrices (for Q1, Q2, Q3) at horizon T0."""
        t1 = block_toeplitz(list(self.Q1), [q.T for q in self.Q1], T0)
        t2 = block_toeplitz(list(self.Q2), [q.T for q in self.Q2], T0)
        t3 = block_toeplitz([self.q3(j) for j in range(self.N + 1)], [self.q3(-i) for i in range(self.N + 1)], T0)
        return t1, t2, t3

    def violations(self, slack: float = 0.0) -> list:
        out = []
        m = self.m
        for name, fam in (("Q1", self.Q1), ("Q2", self.Q2)):
            asym = fam[0] - fam[0].T
            for a in range(m):
                for b in range(a + 1, m):
                    if abs(asym[a, b]) > slack:
                        out.append(ConstraintViolation(name, 0, (a, b), "lag-0 block must be symmetric", asym[a, b]))
            for i, Qi in enumerate(fam):
                for a in range(m):
                    for b in range(m):
                        if Qi[a, b] < -slack:
                            out.append(ConstraintViolation(name, i, (a, b), "entry must be >= 0", Qi[a, b]))
        for i in range(-self.N, self.N + 1):
            Qi = self.q3(i)
            for a in range(m):
                for b in range(m):
                    if i == 0 and a == b:
                        continue
                    if Qi[a, b] < -slack:
                        cond = "off-diagonal entry must be >= 0 (Metzler)" if i == 0 else "entry must be >= 0"
                        out.append(ConstraintViolation("Q3", i, (a, b), cond, Qi[a, b]))
        return out

    def is_valid(self, slack: float = 0.0) -> bool:
        return not self.violations(slack)

    def validate(self, slack: float = 0.0) -> "ReluMultiplier":
        bad = self.violations(slack)
        if bad:
            raise MultiplierConstraintError(bad)
        return self

    def projected(self) -> "ReluMultiplier":
        """Nearby member of the class: symmetrize lag 0 and clip the sign-constrained entries."""
        Q1 = [np.maximum(q, 0.0) for q in self.Q1]
        Q2 = [np.maximum(q, 0.0) for q in self.Q2]
        for fam in (Q1, Q2):
            fam[0] = 0.5 * (fam[0] + fam[0].T)
        Q3 = [np.maximum(q, 0.0) for q in self.Q3]
        np.fill_diagonal(Q3[self.N], np.diag(self.Q3[self.N]))
        return ReluMultiplier(self.N, self.m, Q1, Q2, Q3)

    def padded(self, N: int) -> "ReluMultiplier":
        if N < self.N:
            raise ValueError("cannot shrink a multiplier")
        z = [np.zeros((self.m, self.m))] * (N - self.N)
        return ReluMultiplier(N, self.m, list(self.Q1) + z, list(self.Q2) + z, z + list(self.Q3) + z)


@dataclass(frozen=True, eq=False)
class MiddleMatrix:
    M: np.ndarray
    kind: str
    N: int
    m: int
    source: object = None

    @property
    def size(self) -> int:
        return self.M.shape[0]


def slope_middle(M0: np.ndarray) -> np.ndarray:
    k = M0.shape[0]
    return np.block([[np.zeros((k, k)), M0.T], [M0, -(M0 + M0.T)]])


def relu_middle(M1, M2, M3) -> np.ndarray:
    return np.block([[M1, -M3.T - M1], [-M3 - M1, M1 + M2 + M3 + M3.T]])


def assemble_slope_M(q: SlopeMultiplier, slack: float = 0.0) -> MiddleMatrix:
    q.validate(slack)
    return MiddleMatrix(slope_middle(q.M0()), SLOPE, q.N, q.m, q)


def assemble_relu_M(q: ReluMultiplier, slack: float = 0.0) -> MiddleMatrix:
    q.validate(slack)
    return MiddleMatrix(relu_middle(q.M1(), q.M2(), q.M3()), RELU, q.N, q.m, q)


def assemble_M(q, slack: float = 0.0) -> MiddleMatrix:
    if q.kind == SLOPE:
        return assemble_slope_M(q, slack)
    return assemble_relu_M(q, slack)


def raw_middle(q) -> np.ndarray:
    """Middle matrix without constraint checks (linear in the coefficients)."""
    if q.kind == SLOPE:
        return slope_middle(q.M0())
    return relu_middle(q.M1(), q.M2(), q.M3())


def static_slope_qc(Q0) -> np.ndarray:
    """Static QC matrix for a doubly hyperdominant Q0."""
    Q0 = np.asarray(Q0, dtype=float)
    m = Q0.shape[0]
    return np.block([[np.zeros((m, m)), Q0.T], [Q0, -(Q0 + Q0.T)]])


def static_relu_qc(Q1, Q2, Q3) -> np.ndarray:
    """Static QC matrix for the repeated ReLU."""
    Q1, Q2, Q3 = (np.asarray(a, dtype=float) for a in (Q1, Q2, Q3))
    return np.block([[Q1, -Q3.T - Q1], [-Q3 - Q1, Q1 + Q2 + Q3 + Q3.T]])


class MultiplierLayout:
    """Maps a multiplier class at horizon N onto a vector of free scalars.

    Symmetric lag-0 blocks of the ReLU class contribute their upper triangle
    only; every other block contributes all m*m entries, row-major.
    """

    def __init__(self, kind: str, N: int, m: int):
        if kind not in KINDS:
            raise ValueError(f"unknown multiplier class {kind!r}")
        self.kind, self.N, self.m = kind, N, m
        self.names = []
        self._slots = []  # (family, position in family, a, b, symmetric)
        if kind == SLOPE:
            for i in range(-N, N + 1):
                for a in range(m):
                    for b in range(m):
                        self._add("Q", i + N, a, b, False, f"Q[{i}][{a},{b}]")
        else:
            for fam in ("Q1", "Q2"):
                for a in range(m):
                    for b in range(a, m):
                        self._add(fam, 0, a, b, True, f"{fam}[0][{a},{b}]")
                for i in range(1, N + 1):
                    for a in range(m):
                        for b in range(m):
                            self._add(fam, i, a, b, False, f"{fam}[{i}][{a},{b}]")
            for i in range(-N, N + 1):
                for a in range(m):
                    for b in range(m):
                        self._add("Q3", i + N, a, b, False, f"Q3[{i}][{a},{b}]")
        self._basis = None

    def _add(self, fam, pos, a, b, sym, name):
        self._slots.append((fam, pos, a, b, sym))
        self.names.append(name)

    @property
    def n_vars(self) -> int:
        return len(self._slots)

    def _family_sizes(self):
        if self.kind == SLOPE:
            return {"Q": 2 * self.N + 1}
        return {"Q1": self.N + 1, "Q2": self.N + 1, "Q3": 2 * self.N + 1}

    def from_vector(self, x):
        x = np.asarray(x, dtype=float)
        fams = {k: [np.zeros((self.m, self.m)) for _ in range(n)] for k, n in self._family_sizes().items()}
        for val, (fam, pos, a, b, sym) in zip(x, self._slots):
            fams[fam][pos][a, b] = val
            if sym:
                fams[fam][pos][b, a] = val
        if self.kind == SLOPE:
            return SlopeMultiplier(self.N, self.m, fams["Q"])
        return ReluMultiplier(self.N, self.m, fams["Q1"], fams["Q2"], fams["Q3"])

    def to_vector(self, q) -> np.ndarray:
        if q.kind != self.kind or q.N != self.N or q.m != self.m:
            raise ValueError("multiplier does not match layout")
        fams = {"Q": q.Q} if self.kind == SLOPE else {"Q1": q.Q1, "Q2": q.Q2, "Q3": q.Q3}
        x = np.empty(self.n_vars)
        for k, (fam, pos, a, b, sym) in enumerate(self._slots):
            blk = fams[fam][pos]
            x[k] = 0.5 * (blk[a, b] + blk[b, a]) if sym else blk[a, b]
        return x

    def basis_middles(self) -> np.ndarray:
        """Array (n_vars, n_r, n_r): the middle matrix of each unit coordinate."""
        if self._basis is None:
            n_r = 2 * self.m * (self.N + 1)
            out = np.empty((self.n_vars, n_r, n_r))
            for k in range(self.n_vars):
                e = np.zeros(self.n_vars)
                e[k] = 1.0
                out[k] = raw_middle(self.from_vector(e))
            out.setflags(write=False)
            self._basis = out
        return self._basis

    def sign_constraints(self):
        """Rows G and labels such that the class is exactly {x : G x >= 0}."""
        rows, labels = [], []
        n = self.n_vars
        m = self.m

        def unit(k, sign):
            g = np.zeros(n)
            g[k] = sign
            return g

        if self.kind == SLOPE:
            for k, (fam, pos, a, b, _) in enumerate(self._slots):
                i = pos - self.N
                if i != 0 or a != b:
                    rows.append(unit(k, -1.0))
                    labels.append(f"{self.names[k]} <= 0")
            for a in range(m):
                g = np.zeros(n)
                for k, (_, _, ra, _, _) in enumerate(self._slots):
                    if ra == a:
                        g[k] = 1.0
                rows.append(g)
                labels.append(f"M_row row {a} sum >= 0")
            for b in range(m):
                g = np.zeros(n)
                for k, (_, _, _, cb, _) in enumerate(self._slots):
                    if cb == b:
                        g[k] = 1.0
                rows.append(g)
                labels.append(f"M_col column {b} sum >= 0")
        else:
            for k, (fam, pos, a, b, _) in enumerate(self._slots):
                if fam == "Q3" and pos == self.N and a == b:
                    continue
                rows.append(unit(k, 1.0))
                labels.append(f"{self.names[k]} >= 0")
        G = np.array(rows) if rows else np.zeros((0, n))
        return G, labels


def random_multiplier(kind: str, N: int, m: int, rng: np.random.Generator, sparsity: float = 0.3, tight: bool = False):
    """Draw a valid multiplier of the given class.

    ``sparsity`` zeroes a fraction of the sign-constrained entries so that
    boundary cases are exercised; ``tight`` makes the slope-class row or
    column sums hit zero exactly.
    """

    def mask(shape):
        return rng.random(shape) >= sparsity

    if kind == SLOPE:
        Q = [-rng.exponential(size=(m, m)) * mask((m, m)) for _ in range(2 * N + 1)]
        extra = np.zeros(m) if tight else rng.exponential(size=m) * mask(m)
        _lift_center_diagonal(Q, N, extra)
        return SlopeMultiplier(N, m, Q).validate()
    if kind == RELU:
        def sym_nonneg():
            X = rng.exponential(size=(m, m)) * mask((m, m))
            return np.triu(X) + np.triu(X, 1).T

        Q1 = [sym_nonneg()] + [rng.exponential(size=(m, m)) * mask((m, m)) for _ in range(N)]
        Q2 = [sym_nonneg()] + [rng.exponential(size=(m, m)) * mask((m, m)) for _ in range(N)]
        Q3 = [rng.exponential(size=(m, m)) * mask((m, m)) for _ in range(2 * N + 1)]
        np.fill_diagonal(Q3[N], rng.normal(scale=2.0, size=m))
        return ReluMultiplier(N, m, Q1, Q2, Q3).validate()
    raise ValueError(f"unknown multiplier class {kind!r}")
