import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_plant
from reluiqc import analysis
from reluiqc.analysis import (
    ERROR,
    FEASIBILITY,
    INCONCLUSIVE,
    STABLE,
    AnalysisRequest,
    WellPosednessError,
    certify,
    embed_certificate,
    monotonicity_check,
    static_qc_bound,
)
from reluiqc.filter import build_psi
from reluiqc.lmi import augment
from reluiqc.lti import lurye_plant
from reluiqc.multiplier import RELU, SLOPE, ReluMultiplier, SlopeMultiplier
from reluiqc.oracle import hinf_norm_grid
from reluiqc.sdp import OPTIMAL, Certificate, check_certificate


@pytest.fixture(scope="module")
def sweeps(rnn):
    return {k: certify(AnalysisRequest(rnn, k, (0, 1, 2))) for k in (RELU, SLOPE)}


def test_request_validation(rnn):
    with pytest.raises(ValueError):
        AnalysisRequest(rnn, RELU, ())
    with pytest.raises(ValueError):
        AnalysisRequest(rnn, RELU, (2, 1))
    with pytest.raises(ValueError):
        AnalysisRequest(rnn, RELU, (-1, 0))
    with pytest.raises(ValueError):
        AnalysisRequest(rnn, "sigmoid", (0,))
    with pytest.raises(ValueError):
        AnalysisRequest(rnn, RELU, (0,), mode=FEASIBILITY)
    with pytest.raises(ValueError):
        AnalysisRequest(rnn, RELU, (0, 1), warm_start=True, max_workers=2)


def test_feedthrough_requires_override():
    rng = np.random.default_rng(0)
    b = random_plant(rng, nx=2, m=1, n_d=1, n_e=1).lurye_blocks()
    G = lurye_plant(b.A, b.B1, b.B2, b.C1, b.C2, np.array([[0.1]]), b.D12, b.D21, b.D22)
    with pytest.raises(WellPosednessError):
        certify(AnalysisRequest(G, SLOPE, (0,)))
    rep = certify(AnalysisRequest(G, SLOPE, (0,), assume_well_posed=True))
    assert rep.results[0].verdict in (STABLE, INCONCLUSIVE)


def test_sweep_values(sweeps):
    assert sweeps[RELU].gammas[0] == pytest.approx(4.017, rel=1e-3)
    assert sweeps[RELU].gammas[1] == pytest.approx(1.554, rel=1e-3)
    assert sweeps[SLOPE].gammas[2] == pytest.approx(1.698, rel=1e-3)
    for rep in sweeps.values():
        assert all(r.verdict == STABLE and r.status == OPTIMAL for r in rep.results)
        assert all(np.isfinite(r.gamma) for r in rep.results)
        assert rep.monotone
        assert rep.by_horizon(1).dims["n_xhat"] == 8


def test_monotonicity_check_examples():
    assert monotonicity_check([(0, 4.017), (1, 1.554), (2, 1.300), (3, 1.136)])
    assert monotonicity_check([(0, 14.22), (1, 1.787), (2, 1.698), (3, 1.698)])
    assert not monotonicity_check([(0, 1.554), (1, 4.017), (2, 1.300)])
    assert monotonicity_check([(0, 1.0), (1, 1.0005)])
    with pytest.raises(ValueError):
        monotonicity_check([(0, 1.0)])


def test_errors_stay_per_horizon(rnn, monkeypatch):
    real = analysis.solve

    def flaky(problem, options, x0=None):
        if problem.assembly.aug.N == 1:
            raise RuntimeError("solver exploded")
        return real(problem, options, x0=x0)

    monkeypatch.setattr(analysis, "solve", flaky)
    rep = certify(AnalysisRequest(rnn, SLOPE, (0, 1, 2)))
    assert [r.verdict for r in rep.results] == [STABLE, ERROR, STABLE]
    assert "exploded" in rep.by_horizon(1).error
    assert np.isnan(rep.gammas[1])


def test_infeasible_is_inconclusive(rnn):
    rep = certify(AnalysisRequest(rnn, SLOPE, (0, 1), mode=FEASIBILITY, gamma=5.0))
    assert [r.verdict for r in rep.results] == [INCONCLUSIVE, STABLE]


def test_threads_give_same_report(rnn, sweeps):
    rep = certify(AnalysisRequest(rnn, RELU, (0, 1, 2), max_workers=3))
    assert [r.N for r in rep.results] == [0, 1, 2]
    for a, b in zip(rep.results, sweeps[RELU].results):
        assert a.gamma == pytest.approx(b.gamma, rel=1e-9)


def test_warm_start_matches_cold(rnn, sweeps):
    rep = certify(AnalysisRequest(rnn, SLOPE, (0, 1, 2), warm_start=True))
    for a, b in zip(rep.results, sweeps[SLOPE].results):
        assert a.gamma == pytest.approx(b.gamma, rel=1e-6)


@pytest.mark.parametrize("kind", [RELU, SLOPE])
def test_embedding_keeps_certificate(sweeps, kind):
    for res in sweeps[kind].results:
        for fill in (0.0, "auto"):
            emb = embed_certificate(res.certificate, fill=fill)
            assert emb.status == OPTIMAL, emb.diagnostics
            assert emb.N == res.N + 1 and emb.gamma == res.certificate.gamma
            assert emb.diagnostics["lambda_max_L"] <= 1e-6
        strict = embed_certificate(res.certificate, fill="auto")
        assert strict.diagnostics["lambda_max_L"] < 0
    two = embed_certificate(sweeps[kind].results[0].certificate, N=3)
    assert two.optimal and two.N == 3


def test_zero_certificate_embeds_trivially():
    # x(k+1) = 0.5 x + d, e = x: a storage P = 2 works with M = 0 at gamma = 2.5
    G = lurye_plant([[0.5]], [[0.0]], [[1.0]], [[0.0]], [[1.0]], [[0.0]], [[0.0]], [[0.0]], [[0.0]])
    aug = augment(G, build_psi(0, 1))
    P = np.array([[2.0]])
    gamma = 2.5
    cert = Certificate(OPTIMAL, gamma, P, SlopeMultiplier.zeros(0, 1), SLOPE, 0, {}, aug)
    assert check_certificate(aug, P, cert.multiplier, gamma).passed
    emb = embed_certificate(cert)
    assert emb.optimal


def test_embedding_rejects_failed_certificate(rnn):
    cert = Certificate("infeasible", float("nan"), None, None, RELU, 0, {}, augment(rnn, build_psi(0, 2)))
    with pytest.raises(ValueError):
        embed_certificate(cert)


def test_static_qc_matches_horizon_zero(rnn, sweeps):
    for kind in (RELU, SLOPE):
        assert static_qc_bound(rnn, kind) == pytest.approx(sweeps[kind].gammas[0], rel=1e-4)


def test_disconnected_nonlinearity_gives_hinf_norm():
    rng = np.random.default_rng(4)
    H = random_plant(rng, nx=3, m=2, n_d=1, n_e=1, open_loop=True)
    h = hinf_norm_grid(H, input_channel=1, output_channel=1)
    for kind in (RELU, SLOPE):
        g = certify(AnalysisRequest(H, kind, (0,))).gammas[0]
        assert g == pytest.approx(h, rel=1e-3)


@settings(max_examples=8)
@given(st.integers(0, 2**32 - 1))
def test_class_dominance_random_plants(seed):
    rng = np.random.default_rng(seed)
    G = random_plant(rng, nx=int(rng.integers(1, 5)), m=int(rng.integers(1, 3)))
    relu = certify(AnalysisRequest(G, RELU, (0, 1))).results
    slope = certify(AnalysisRequest(G, SLOPE, (0, 1))).results
    for r, s in zip(relu, slope):
        if r.status == OPTIMAL and s.status == OPTIMAL:
            assert r.gamma <= s.gamma * (1 + 1e-3)
        if s.status == OPTIMAL:
            # the embedded slope multiplier is a relu candidate, so relu must not be infeasible
            assert r.verdict != INCONCLUSIVE


def test_relu_candidate_from_slope_certificate(sweeps):
    cert = sweeps[SLOPE].by_horizon(1).certificate
    relu = cert.multiplier.to_relu()
    assert isinstance(relu, ReluMultiplier)
    assert check_certificate(cert.aug, cert.P, relu, cert.gamma).passed
