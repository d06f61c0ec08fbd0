"""Certification sweeps over filter horizons and horizon-embedding checks."""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .filter import build_psi
from .lmi import assemble_L, augment, embed_state
from .lti import StateSpace
from .multiplier import KINDS, RELU, SLOPE
from .sdp import (
    INFEASIBLE,
    NUMERICAL_FAILURE,
    OPTIMAL,
    Certificate,
    SolverOptions,
    build_problem,
    check_certificate,
    solve,
)

log = logging.getLogger(__name__)

MINIMIZE = "minimize"
FEASIBILITY = "feasibility"

STABLE = "stable"
INCONCLUSIVE = "inconclusive"
ERROR = "error"

EMBED_TOL = 1e-6


class WellPosednessError(ValueError):
    """Raised for plants with a direct w -> v feedthrough unless explicitly overridden."""


@dataclass(frozen=True)
class AnalysisRequest:
    plant: StateSpace
    nonlinearity: str
    horizons: tuple
    mode: str = MINIMIZE
    gamma: float | None = None
    options: SolverOptions = SolverOptions()
    assume_well_posed: bool = False
    warm_start: bool = False
    max_workers: int = 1

    def __post_init__(self):
        hs = tuple(int(n) for n in self.horizons)
        if not hs:
            raise ValueError("at least one horizon is required")
        if any(n < 0 for n in hs):
            raise ValueError(f"horizons must be nonnegative, got {hs}")
        if list(hs) != sorted(hs):
            raise ValueError(f"horizons must be sorted ascending, got {hs}")
        object.__setattr__(self, "horizons", hs)
        if self.nonlinearity not in KINDS:
            raise ValueError(f"unknown nonlinearity class {self.nonlinearity!r}; expected one of {KINDS}")
        if self.mode not in (MINIMIZE, FEASIBILITY):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == FEASIBILITY and (self.gamma is None or not self.gamma > 0):
            raise ValueError("feasibility mode needs a positive gamma")
        if self.warm_start and self.max_workers > 1:
            raise ValueError("warm starting chains the horizons; use max_workers=1")


@dataclass
class HorizonResult:
    N: int
    certificate: Certificate | None
    verdict: str
    error: str | None = None
    elapsed: float = 0.0
    dims: dict = field(default_factory=dict)

    @property
    def gamma(self) -> float:
        if self.certificate is None or not self.certificate.optimal:
            return float("nan")
        return self.certificate.gamma

    @property
    def status(self) -> str:
        if self.certificate is None:
            return ERROR
        return self.certificate.status


@dataclass
class AnalysisReport:
    request: AnalysisRequest
    results: list

    @property
    def gammas(self) -> dict:
        return {r.N: r.gamma for r in self.results}

    def by_horizon(self, N: int) -> HorizonResult:
        for r in self.results:
            if r.N == N:
                return r
        raise KeyError(N)

    @property
    def monotone(self) -> bool:
        return monotonicity_check(self)


def check_well_posed(plant: StateSpace, assume_well_posed: bool = False) -> None:
    D11 = plant.lurye_blocks().D11
    if np.any(D11 != 0) and not assume_well_posed:
        raise WellPosednessError(
            "plant has a nonzero w -> v feedthrough; pass assume_well_posed=True "
            "only if the loop equation is known to be uniquely solvable"
        )


def _verdict(cert: Certificate) -> str:
    if cert.status == OPTIMAL:
        return STABLE
    if cert.status == INFEASIBLE:
        return INCONCLUSIVE
    return ERROR


def _dims(aug, assembly) -> dict:
    return {
        "n_x": aug.plant.n_x,
        "n_xhat": aug.n_xhat,
        "n_r": aug.n_r,
        "lmi_size": aug.lmi_size,
        "n_vars": assembly.n_vars,
    }


def _solve_one(req: AnalysisRequest, N: int, x0=None) -> HorizonResult:
    t = time.perf_counter()
    try:
        aug = augment(req.plant, build_psi(N, req.plant.input_partition[0]))
        assembly = assemble_L(aug, req.nonlinearity)
        gamma = req.gamma if req.mode == FEASIBILITY else None
        problem = build_problem(assembly, req.options, gamma=gamma)
        cert = solve(problem, req.options, x0=x0)
        return HorizonResult(N, cert, _verdict(cert), None, time.perf_counter() - t, _dims(aug, assembly))
    except Exception as exc:  # one bad horizon must not sink the sweep
        log.exception("horizon N=%d failed", N)
        return HorizonResult(N, None, ERROR, f"{type(exc).__name__}: {exc}", time.perf_counter() - t)


def _warm_point(prev: HorizonResult, N: int):
    cert = prev.certificate
    if cert is None or not cert.optimal:
        return None
    emb = embed_certificate(cert, N)
    assembly = assemble_L(emb.aug, cert.kind)
    return assembly.pack(emb.P, emb.multiplier, emb.gamma**2)


def certify(req: AnalysisRequest) -> AnalysisReport:
    """Run one solve per horizon.  Infeasibility is reported as inconclusive, never as instability."""
    check_well_posed(req.plant, req.assume_well_posed)
    if req.warm_start:
        results = []
        for N in req.horizons:
            x0 = _warm_point(results[-1], N) if results else None
            res = _solve_one(req, N, x0)
            if x0 is not None and res.verdict != STABLE:
                # the embedded point is itself a certificate at the previous gamma
                emb = embed_certificate(results[-1].certificate, N)
                if emb.optimal:
                    res = HorizonResult(N, emb, STABLE, res.error, res.elapsed, res.dims)
            results.append(res)
    elif req.max_workers > 1:
        with ThreadPoolExecutor(req.max_workers) as pool:
            results = list(pool.map(lambda n: _solve_one(req, n), req.horizons))
    else:
        results = [_solve_one(req, N) for N in req.horizons]
    return AnalysisReport(req, results)


def monotonicity_check(report, rel_tol: float = 1e-3) -> bool:
    """True iff the optimal bounds never increase with N beyond rel_tol * gamma_N."""
    if isinstance(report, AnalysisReport):
        pairs = [(r.N, r.gamma) for r in report.results if r.status == OPTIMAL]
    else:
        pairs = list(report)
    if len(pairs) < 2:
        raise ValueError("need at least two optimal horizons")
    gammas = [g for _, g in pairs]
    return all(b <= a + rel_tol * a for a, b in zip(gammas, gammas[1:]))


def _auto_fill(cert: Certificate) -> float:
    lam = cert.diagnostics.get("lambda_max_L")
    if lam is None:
        lam = check_certificate(cert.aug, cert.P, cert.multiplier, cert.gamma).lambda_max_L
    return 0.5 * abs(min(lam, 0.0))


def embed_certificate(cert: Certificate, N: int | None = None, fill=0.0) -> Certificate:
    """Pad an optimal horizon-N certificate to a longer horizon at the same gamma.

    New lags get zero multiplier coefficients and ``fill`` on the storage
    diagonal.  Zero fill leaves lambda_max(L) = 0 along the new directions;
    ``fill="auto"`` uses half the old margin, which restores a strict
    inequality.  The returned status reflects a fresh dense re-check at
    tolerance 1e-6.
    """
    if not cert.optimal:
        raise ValueError("only optimal certificates can be embedded")
    aug = cert.aug
    N1 = aug.N + 1 if N is None else int(N)
    if fill == "auto":
        fill = _auto_fill(cert)
    aug1 = augment(aug.plant, build_psi(N1, aug.m))
    P1 = embed_state(cert.P, aug, aug1, float(fill))
    mult1 = cert.multiplier.padded(N1)
    chk = check_certificate(aug1, P1, mult1, cert.gamma, lmi_tol=EMBED_TOL, psd_tol=EMBED_TOL)
    diag = {
        "embedded_from": aug.N,
        "fill": float(fill),
        "lambda_max_L": chk.lambda_max_L,
        "lambda_min_P": chk.lambda_min_P,
        "class_violations": list(chk.class_violations),
    }
    status = OPTIMAL if chk.passed else NUMERICAL_FAILURE
    if not chk.passed:
        log.warning("embedded certificate failed re-validation: %s", chk.summary())
    return Certificate(status, cert.gamma, P1, mult1, cert.kind, N1, diag, aug1)


def static_qc_bound(plant: StateSpace, kind: str, options: SolverOptions = SolverOptions()) -> float:
    """Gain bound from a memoryless QC on (v, w), set up directly without the filter machinery."""
    import cvxpy as cp

    check_well_posed(plant)
    A, B1, B2, C1, C2, D11, D12, D21, D22 = plant.lurye_blocks()
    nx, m, nd = A.shape[0], B1.shape[1], B2.shape[1]
    size = nx + m + nd
    P = cp.Variable((nx, nx), symmetric=True)
    t = cp.Variable(nonneg=True)
    off = 1.0 - np.eye(m)
    cons = [P >> 0]
    if kind == SLOPE:
        Q0 = cp.Variable((m, m))
        cons += [cp.multiply(off, Q0) <= 0, cp.sum(Q0, axis=1) >= 0, cp.sum(Q0, axis=0) >= 0]
        Z = np.zeros((m, m))
        M = cp.bmat([[Z, Q0.T], [Q0, -(Q0 + Q0.T)]])
    elif kind == RELU:
        Q1 = cp.Variable((m, m), symmetric=True)
        Q2 = cp.Variable((m, m), symmetric=True)
        Q3 = cp.Variable((m, m))
        cons += [Q1 >= 0, Q2 >= 0]
        cons.append(cp.multiply(off, Q3) >= 0)
        M = cp.bmat([[Q1, -Q3.T - Q1], [-Q3 - Q1, Q1 + Q2 + Q3 + Q3.T]])
    else:
        raise ValueError(f"unknown class {kind!r}")

    ABB = np.hstack([A, B1, B2])
    Ex = np.hstack([np.eye(nx), np.zeros((nx, m + nd))])
    R = np.vstack([np.hstack([C1, D11, D12]), np.hstack([np.zeros((m, nx)), np.eye(m), np.zeros((m, nd))])])
    perf = np.hstack([C2, D21, D22])
    Ed = np.hstack([np.zeros((nd, nx + m)), np.eye(nd)])
    L = ABB.T @ P @ ABB - Ex.T @ P @ Ex + perf.T @ perf + R.T @ M @ R - t * (Ed.T @ Ed)
    eps = options.eps_lmi * (1.0 + np.linalg.norm(perf.T @ perf, "fro"))
    cons.append((L + L.T) / 2 << -eps * np.eye(size))
    prob = cp.Problem(cp.Minimize(t), cons)
    prob.solve(solver=options.solver)
    if prob.status not in ("optimal", "optimal_inaccurate"):
        return float("nan")
    return float(np.sqrt(t.value))


__all__ = [
    "AnalysisReport",
    "AnalysisRequest",
    "HorizonResult",
    "WellPosednessError",
    "certify",
    "check_well_posed",
    "embed_certificate",
    "monotonicity_check",
    "static_qc_bound",
]
