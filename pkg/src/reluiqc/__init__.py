"""Gain bounds for feedback loops with repeated ReLU or slope-restricted nonlinearities.

The loop is certified with hard integral quadratic constraints built on a
finite-horizon stacking filter; bounds come from a semidefinite program.
"""
__version__ = "0.1.0"

from .analysis import AnalysisRequest, certify, embed_certificate, monotonicity_check, static_qc_bound
from .filter import build_psi
from .lmi import assemble_L, augment
from .lti import StateSpace, lurye_plant, realize_first_order_bank, simulate
from .multiplier import ReluMultiplier, SlopeMultiplier
from .oracle import NonlinearityKind, check_hard_iqc, empirical_gain, hinf_norm_grid, simulate_loop
from .sdp import Certificate, SolverOptions, build_problem, check_certificate, solve

__all__ = [
    "AnalysisRequest",
    "Certificate",
    "NonlinearityKind",
    "ReluMultiplier",
    "SlopeMultiplier",
    "SolverOptions",
    "StateSpace",
    "assemble_L",
    "augment",
    "build_problem",
    "build_psi",
    "certify",
    "check_certificate",
    "check_hard_iqc",
    "embed_certificate",
    "empirical_gain",
    "hinf_norm_grid",
    "lurye_plant",
    "monotonicity_check",
    "realize_first_order_bank",
    "simulate",
    "simulate_loop",
    "solve",
    "static_qc_bound",
]
