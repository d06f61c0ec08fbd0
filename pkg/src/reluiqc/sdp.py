"""Semidefinite program for the gain bound, a narrow solver contract, and one adapter."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Protocol

import numpy as np

from .lmi import LmiAssembly, lifted_lmi
from .multiplier import raw_middle

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
NUMERICAL_FAILURE = "numerical-failure"

LMI_TOL = 1e-7
PSD_TOL = 1e-7
CLASS_SLACK = 1e-9


@dataclass(frozen=True)
class SolverOptions:
    solver: str = "CLARABEL"
    eps_lmi: float = 1e-7
    feastol: float = 1e-8
    reltol: float = 1e-8
    max_iters: int = 500
    method: str = "direct"  # or "bisection"
    bisection_tol: float = 1e-5
    gamma_max: float = 1e4
    fallback_solver: str | None = None  # retried once on a numerical failure
    # if a minimizer fails re-validation, re-solve as feasibility at gamma * (1 + rel)
    recover_rel: tuple = (1e-6, 1e-5, 1e-4, 1e-3)
    verbose: bool = False


@dataclass(frozen=True, eq=False)
class SdpProblem:
    """minimize t over x = (P, multiplier, t) subject to

    -L(x) - eps I >= 0 (PSD), P >= 0 (PSD), G x >= 0, A_eq x = b_eq, t >= 0.

    ``fixed_t`` turns it into a feasibility problem at t = gamma^2.
    """

    assembly: LmiAssembly
    eps: float
    G: np.ndarray
    G_labels: tuple
    A_eq: np.ndarray
    b_eq: np.ndarray
    fixed_t: float | None = None

    @property
    def n_vars(self) -> int:
        return self.assembly.n_vars

    @property
    def objective(self) -> np.ndarray:
        c = np.zeros(self.n_vars)
        if self.fixed_t is None:
            c[self.assembly.t_slot] = 1.0
        return c

    def p_coefficients(self) -> np.ndarray:
        """(n_vars, n, n) coefficients of P in terms of x (zero outside the P slots)."""
        a = self.assembly
        n = a.aug.n_xhat
        out = np.zeros((a.n_vars, n, n))
        for k, (i, j) in enumerate(a.p_index):
            out[k, i, j] = 1.0
            out[k, j, i] = 1.0
        return out


def lmi_margin(assembly: LmiAssembly, rel: float) -> float:
    return rel * (1.0 + np.linalg.norm(assembly.L0, "fro"))


def build_problem(assembly: LmiAssembly, options: SolverOptions = SolverOptions(), gamma=None) -> SdpProblem:
    Gq, labels = assembly.layout.sign_constraints()
    G = np.zeros((Gq.shape[0], assembly.n_vars))
    G[:, assembly.q_slice()] = Gq
    return SdpProblem(
        assembly=assembly,
        eps=lmi_margin(assembly, options.eps_lmi),
        G=G,
        G_labels=tuple(labels),
        A_eq=np.zeros((0, assembly.n_vars)),
        b_eq=np.zeros(0),
        fixed_t=None if gamma is None else float(gamma) ** 2,
    )


@dataclass
class BackendResult:
    x: np.ndarray | None
    status: str
    iterations: int | None = None
    solve_time: float = 0.0
    raw_status: str = ""


class SdpBackend(Protocol):
    name: str

    def solve(self, problem: SdpProblem, options: SolverOptions, x0=None) -> BackendResult: ...


def _solver_kwargs(name: str, options: SolverOptions) -> dict:
    name = name.upper()
    if name == "CLARABEL":
        return dict(tol_feas=options.feastol, tol_gap_rel=options.reltol, tol_gap_abs=options.reltol,
                    max_iter=options.max_iters)
    if name == "SCS":
        return dict(eps_abs=options.feastol, eps_rel=options.reltol, max_iters=max(options.max_iters, 20000))
    if name == "CVXOPT":
        return dict(feastol=options.feastol, reltol=options.reltol, maxiters=options.max_iters, kktsolver="robust")
    return {}


class CvxpyBackend:
    """Reference adapter: hands the problem to CVXPY (Clarabel by default)."""

    name = "cvxpy"

    def solve(self, problem: SdpProblem, options: SolverOptions, x0=None) -> BackendResult:
        import cvxpy as cp
        import scipy.sparse as sp

        a = problem.assembly
        n_vars = a.n_vars
        size = a.size
        n = a.aug.n_xhat
        x = cp.Variable(n_vars)
        if x0 is not None:
            x.value = np.asarray(x0, dtype=float)

        F = sp.csr_matrix(a.F.reshape(n_vars, size * size).T)
        L = cp.reshape(F @ x, (size, size), order="C") + a.L0
        Pmap = sp.csr_matrix(problem.p_coefficients().reshape(n_vars, n * n).T)
        P = cp.reshape(Pmap @ x, (n, n), order="C")

        cons = [
            -(L + L.T) / 2 - problem.eps * np.eye(size) >> 0,
            (P + P.T) / 2 >> 0,
            x[a.t_slot] >= 0,
        ]
        if problem.G.shape[0]:
            cons.append(problem.G @ x >= 0)
        if problem.A_eq.shape[0]:
            cons.append(problem.A_eq @ x == problem.b_eq)
        if problem.fixed_t is not None:
            cons.append(x[a.t_slot] == problem.fixed_t)
        prob = cp.Problem(cp.Minimize(problem.objective @ x), cons)

        t0 = time.perf_counter()
        try:
            prob.solve(solver=options.solver, verbose=options.verbose, warm_start=x0 is not None,
                       **_solver_kwargs(options.solver, options))
        except cp.error.SolverError as exc:
            log.warning("solver %s error: %s", options.solver, exc)
            return BackendResult(None, NUMERICAL_FAILURE, solve_time=time.perf_counter() - t0, raw_status=str(exc))
        elapsed = time.perf_counter() - t0
        stats = prob.solver_stats
        iters = getattr(stats, "num_iters", None) if stats is not None else None
        if prob.status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
            status = OPTIMAL
        elif prob.status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
            status = INFEASIBLE
        else:
            status = NUMERICAL_FAILURE
        xv = None if x.value is None else np.array(x.value, dtype=float)
        return BackendResult(xv, status, iters, elapsed, prob.status)


@dataclass(frozen=True, eq=False)
class Certificate:
    status: str
    gamma: float
    P: np.ndarray | None
    multiplier: object
    kind: str
    N: int
    diagnostics: dict = field(default_factory=dict)
    aug: object = field(default=None, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


@dataclass(frozen=True)
class CertificateCheck:
    passed: bool
    lambda_max_L: float
    lambda_min_P: float
    class_violations: tuple

    def summary(self) -> str:
        parts = [f"lambda_max(L)={self.lambda_max_L:.3e}", f"lambda_min(P)={self.lambda_min_P:.3e}"]
        if self.class_violations:
            parts.append("class: " + "; ".join(self.class_violations))
        return ("PASS " if self.passed else "FAIL ") + ", ".join(parts)


def check_certificate(aug, P, multiplier, gamma, lmi_tol=LMI_TOL, psd_tol=PSD_TOL, class_slack=CLASS_SLACK):
    """Re-validate (P, multiplier, gamma) against the dense LMI, independent of any assembly."""
    P = np.asarray(P, dtype=float)
    L = lifted_lmi(aug, P, raw_middle(multiplier), float(gamma) ** 2)
    lam_L = float(np.max(np.linalg.eigvalsh(0.5 * (L + L.T))))
    lam_P = float(np.min(np.linalg.eigvalsh(0.5 * (P + P.T)))) if P.size else 0.0
    viol = tuple(str(v) for v in multiplier.violations(class_slack))
    ok = lam_L <= lmi_tol and lam_P >= -psd_tol and not viol
    return CertificateCheck(ok, lam_L, lam_P, viol)


def _certificate_from(problem: SdpProblem, res: BackendResult, extra=None) -> Certificate:
    a = problem.assembly
    diag = {
        "backend_status": res.raw_status,
        "iterations": res.iterations,
        "solve_time": res.solve_time,
        "eps_lmi": problem.eps,
    }
    diag.update(extra or {})
    if res.status != OPTIMAL or res.x is None:
        return Certificate(res.status, float("nan"), None, None, a.layout.kind, a.aug.N, diag, a.aug)
    P, raw, t = a.unpack(res.x)
    if problem.fixed_t is not None:
        t = problem.fixed_t
    gamma = float(np.sqrt(max(t, 0.0)))
    # sign constraints only hold to solver tolerance; snap onto the class and let the margin absorb it
    mult = raw.projected()
    shift = float(np.abs(a.layout.to_vector(mult) - a.layout.to_vector(raw)).max(initial=0.0))
    chk = check_certificate(a.aug, P, mult, gamma)
    diag.update(projection_shift=shift, lambda_max_L=chk.lambda_max_L, lambda_min_P=chk.lambda_min_P, class_violations=list(chk.class_violations))
    status = OPTIMAL if chk.passed else NUMERICAL_FAILURE
    if not chk.passed:
        log.warning("solver point failed re-validation: %s", chk.summary())
    return Certificate(status, gamma, P, mult, a.layout.kind, a.aug.N, diag, a.aug)


def _attempt(problem: SdpProblem, options: SolverOptions, backend: SdpBackend, x0=None) -> Certificate:
    """One solve plus two recoveries for a numerical failure.

    First the fallback solver, if configured.  Then, for a minimization whose
    point came back slightly infeasible, feasibility solves at marginally
    larger gamma; these have a strict interior and usually pass, at the cost
    of a bound looser by the recorded ``gamma_relaxed`` factor.
    """
    res = backend.solve(problem, options, x0=x0)
    cert = _certificate_from(problem, res, {"backend": backend.name, "solver": options.solver})
    alt = options.fallback_solver
    if cert.status == NUMERICAL_FAILURE and alt and alt.upper() != options.solver.upper():
        log.info("retrying with %s", alt)
        res2 = backend.solve(problem, replace(options, solver=alt, fallback_solver=None))
        cert2 = _certificate_from(problem, res2, {"backend": backend.name, "solver": alt})
        if cert2.status != NUMERICAL_FAILURE:
            cert2.diagnostics["primary_status"] = res.raw_status
            return cert2
    if cert.status == NUMERICAL_FAILURE and problem.fixed_t is None and np.isfinite(cert.gamma) and cert.gamma > 0:
        for rel in options.recover_rel:
            g = cert.gamma * (1.0 + rel)
            trial = SdpProblem(problem.assembly, problem.eps, problem.G, problem.G_labels, problem.A_eq,
                               problem.b_eq, g**2)
            res3 = backend.solve(trial, options)
            cert3 = _certificate_from(trial, res3, {"backend": backend.name, "solver": options.solver})
            if cert3.optimal:
                cert3.diagnostics.update(gamma_relaxed=rel, primary_status=res.raw_status)
                return cert3
    if cert.status == NUMERICAL_FAILURE and problem.fixed_t is not None:
        return _feasibility_via_minimum(problem, options, backend, res.raw_status) or cert
    return cert


def _feasibility_via_minimum(problem, options, backend, primary_status):
    """Decide a fixed-gamma problem from the minimal gamma.

    A certificate at gamma_min also certifies any larger gamma, because L
    only decreases as gamma grows.
    """
    free = SdpProblem(problem.assembly, problem.eps, problem.G, problem.G_labels, problem.A_eq, problem.b_eq)
    best = _attempt(free, options, backend)
    if not best.optimal:
        return None
    a = problem.assembly
    gamma = float(np.sqrt(problem.fixed_t))
    diag = dict(best.diagnostics, decided_by="minimization", gamma_min=best.gamma, primary_status=primary_status)
    if best.gamma > gamma:
        return Certificate(INFEASIBLE, float("nan"), None, None, a.layout.kind, a.aug.N, diag, a.aug)
    chk = check_certificate(a.aug, best.P, best.multiplier, gamma)
    diag.update(lambda_max_L=chk.lambda_max_L)
    return Certificate(OPTIMAL if chk.passed else NUMERICAL_FAILURE, gamma, best.P, best.multiplier,
                       a.layout.kind, a.aug.N, diag, a.aug)


def _bisect(problem: SdpProblem, options: SolverOptions, backend: SdpBackend) -> Certificate:
    a = problem.assembly

    def attempt(gamma):
        trial = SdpProblem(a, problem.eps, problem.G, problem.G_labels, problem.A_eq, problem.b_eq, gamma**2)
        cert = _attempt(trial, options, backend)
        return cert, cert.diagnostics.get("solve_time", 0.0)

    lo, hi = 0.0, options.gamma_max
    best, total_time = attempt(hi)
    n_solves = 1
    if not best.optimal:
        return Certificate(INFEASIBLE, float("nan"), None, None, a.layout.kind, a.aug.N,
                           {"bisection_solves": n_solves, "solve_time": total_time}, a.aug)
    while hi - lo > options.bisection_tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        cert, dt = attempt(mid)
        n_solves += 1
        total_time += dt
        if cert.optimal:
            best, hi = cert, mid
        else:
            lo = mid
    best.diagnostics.update(bisection_solves=n_solves, solve_time=total_time, backend=backend.name)
    return best


def solve(problem: SdpProblem, options: SolverOptions = SolverOptions(), backend: SdpBackend | None = None,
          x0=None) -> Certificate:
    """Minimize gamma^2 (or test feasibility at a fixed gamma) and return a re-validated certificate."""
    backend = backend or CvxpyBackend()
    if options.method == "bisection" and problem.fixed_t is None:
        return _bisect(problem, options, backend)
    return _attempt(problem, options, backend, x0)


def write_sdpa(problem: SdpProblem, path) -> None:
    """Dump in SDPA sparse format (the 'dat-s' layout), for offline debugging.

    SDPA form: minimize c'x subject to sum_i x_i F_i - F_0 >= 0 (block diagonal).
    Blocks: 1 = -L(x) - eps I, 2 = P, 3 = diagonal LP block with the sign
    rows followed by t >= 0.  A fixed t is written as the pair of rows
    t - t_fix >= 0 and t_fix - t >= 0.
    """
    a = problem.assembly
    n = a.aug.n_xhat
    size = a.size
    lp_rows = [(row, 0.0) for row in problem.G]
    t_row = np.zeros(a.n_vars)
    t_row[a.t_slot] = 1.0
    lp_rows.append((t_row, 0.0))
    if problem.fixed_t is not None:
        lp_rows.append((t_row, problem.fixed_t))
        lp_rows.append((-t_row, -problem.fixed_t))
    Pc = problem.p_coefficients()
    c = problem.objective
    lines = [
        f"* reluiqc SDP: kind={a.layout.kind} N={a.aug.N} vars={a.n_vars}",
        str(a.n_vars),
        "3",
        f"{size} {n} {-len(lp_rows)}",
        " ".join(f"{v:.17g}" for v in c),
    ]

    def emit(mat_no, blk, M):
        for i in range(M.shape[0]):
            for j in range(i, M.shape[1]):
                if M[i, j] != 0.0:
                    lines.append(f"{mat_no} {blk} {i + 1} {j + 1} {M[i, j]:.17g}")

    # F_0 holds the constant parts: block 1 gets L0 + eps I (since -L - eps I = sum x_i (-F_i) - (L0 + eps I))
    emit(0, 1, a.L0 + problem.eps * np.eye(size))
    for r, (_, h) in enumerate(lp_rows):
        if h != 0.0:
            lines.append(f"0 3 {r + 1} {r + 1} {h:.17g}")
    for k in range(a.n_vars):
        emit(k + 1, 1, -a.F[k])
        if k < a.n_p:
            emit(k + 1, 2, Pc[k])
        for r, (row, _) in enumerate(lp_rows):
            if row[k] != 0.0:
                lines.append(f"{k + 1} 3 {r + 1} {r + 1} {row[k]:.17g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
