"""End-to-end acceptance checks.  Each test records one PASS/FAIL line in the run summary."""
import json
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import acceptance_line, random_plant
from reluiqc.analysis import AnalysisRequest, certify, embed_certificate, monotonicity_check, static_qc_bound
from reluiqc.cli import load_config, main
from reluiqc.filter import stacked_output
from reluiqc.lti import Trajectory
from reluiqc.multiplier import RELU, SLOPE, is_doubly_hyperdominant, is_metzler, random_multiplier, raw_middle
from reluiqc.oracle import STRATEGIES, NonlinearityKind, check_hard_iqc, empirical_gain, hinf_norm_grid
from reluiqc.sdp import OPTIMAL

pytestmark = pytest.mark.slow

ROOT = Path(__file__).resolve().parents[1]
EXAMPLE = ROOT / "configs" / "rnn_example.yaml"
HORIZONS = (0, 1, 2, 3)
EXPECTED = {
    RELU: (4.017, 1.554, 1.300, 1.136),
    SLOPE: (14.22, 1.787, 1.698, 1.698),
}
REL = 0.02


@pytest.fixture(scope="module")
def shipped_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("accept") / "run"
    t = time.perf_counter()
    rc = main(["run", "--config", str(EXAMPLE), "--out", str(out), "--dump-certificates", "--horizons", "0..3"])
    elapsed = time.perf_counter() - t
    assert rc == 0
    doc = json.loads((out / "results.json").read_text())
    gam = {}
    for run in doc["runs"]:
        gam.setdefault(run["class"], {})[run["N"]] = run["gamma"]
    return gam, elapsed, out


@pytest.fixture(scope="module")
def sweeps(rnn):
    return {k: certify(AnalysisRequest(rnn, k, HORIZONS)) for k in (RELU, SLOPE)}


def _table_check(n, gam, kind):
    got = [gam[kind][N] for N in HORIZONS]
    errs = [abs(g - e) / e for g, e in zip(got, EXPECTED[kind])]
    ok = max(errs) <= REL
    worst = int(np.argmax(errs))
    detail = (f"{kind} gamma={['%.4f' % g for g in got]} expected={list(EXPECTED[kind])} "
              f"worst N={HORIZONS[worst]} rel.err={errs[worst]:.3%} (tol {REL:.0%})")
    return acceptance_line(n, ok, detail), detail


def test_criterion_1_relu_row(shipped_run):
    gam, elapsed, _ = shipped_run
    ok, detail = _table_check(1, gam, RELU)
    print(f"  shipped config run took {elapsed:.1f} s for both classes")
    assert ok, detail


def test_criterion_2_slope_row(shipped_run):
    ok, detail = _table_check(2, shipped_run[0], SLOPE)
    assert ok, detail


def test_criterion_3_static_equals_dynamic_at_zero(rnn, sweeps):
    rows = []
    ok = True
    for kind in (RELU, SLOPE):
        static = static_qc_bound(rnn, kind)
        dyn = sweeps[kind].by_horizon(0).gamma
        err = abs(static - dyn) / dyn
        ok &= err <= 1e-4
        rows.append(f"{kind}: static={static:.5f} dynamic={dyn:.5f} rel={err:.1e}")
    acceptance_line(3, ok, "; ".join(rows) + " (tol 1e-4)")
    assert ok


def test_criterion_4_monotone_and_embedding(sweeps):
    ok = True
    worst_lam = -np.inf
    for kind, rep in sweeps.items():
        ok &= monotonicity_check(rep, rel_tol=1e-3)
        for res in rep.results:
            assert res.status == OPTIMAL, (kind, res.N, res.status)
            emb = embed_certificate(res.certificate)
            worst_lam = max(worst_lam, emb.diagnostics["lambda_max_L"])
            ok &= emb.optimal
    ok &= worst_lam <= 1e-6
    acceptance_line(4, ok, f"gamma non-increasing for N=0..3 in both classes; "
                           f"worst embedded lambda_max(L)={worst_lam:.2e} (tol 1e-6)")
    assert ok


def test_criterion_5_class_dominance(rnn, sweeps):
    pairs = [(sweeps[RELU].by_horizon(N).gamma, sweeps[SLOPE].by_horizon(N).gamma) for N in HORIZONS]
    rng = np.random.default_rng(2024)
    compared, skipped = len(pairs), 0
    for _ in range(20):
        plant = random_plant(rng, nx=int(rng.integers(1, 7)), m=int(rng.integers(1, 4)), rho=0.95)
        reps = {k: certify(AnalysisRequest(plant, k, (0, 1, 2))) for k in (RELU, SLOPE)}
        for N in (0, 1, 2):
            r, s = reps[RELU].by_horizon(N), reps[SLOPE].by_horizon(N)
            if r.status == OPTIMAL and s.status == OPTIMAL:
                pairs.append((r.gamma, s.gamma))
                compared += 1
            else:
                skipped += 1
    worst = max(g_r / g_s - 1.0 for g_r, g_s in pairs)
    ok = worst <= 1e-3
    acceptance_line(5, ok, f"{compared} (plant, N) pairs compared, {skipped} skipped as non-optimal; "
                           f"max gamma_relu/gamma_slope - 1 = {worst:.2e} (tol 1e-3)")
    assert ok


def test_criterion_6_hard_iqc_partial_sums():
    rng = np.random.default_rng(6)
    t = time.perf_counter()
    worst, count = np.inf, 0
    slope_maps = [NonlinearityKind("relu"), NonlinearityKind("saturation"), NonlinearityKind("tanh"),
                  NonlinearityKind("scaled-identity", 0.5)]
    for kind in (RELU, SLOPE):
        for i in range(50):
            N, m = int(rng.integers(0, 5)), int(rng.integers(1, 4))
            q = random_multiplier(kind, N, m, rng, tight=bool(i % 5 == 0))
            nl = NonlinearityKind("relu") if kind == RELU else slope_maps[i % len(slope_maps)]
            rep = check_hard_iqc(nl, raw_middle(q), N, trials=1000, T0max=30, seed=int(rng.integers(2**31)))
            worst = min(worst, rep.min_normalized)
            count += 1
    elapsed = time.perf_counter() - t
    ok = worst >= -1e-9 and elapsed < 120
    acceptance_line(6, ok, f"{count} multipliers x 1000 trajectories, min sum/(1+energy)={worst:.2e} "
                           f"(tol -1e-9), {elapsed:.1f} s (limit 120 s)")
    assert ok


def _rev(x):
    return x[:, ::-1].T.reshape(-1)


def test_criterion_7_toeplitz_identities():
    rng = np.random.default_rng(7)
    worst = 0.0
    structure_ok = True
    for case in range(200):
        N, m, T0 = int(rng.integers(0, 5)), int(rng.integers(1, 4)), int(rng.integers(0, 13))
        v, w = rng.standard_normal((2, m, T0 + 1))
        r = stacked_output(Trajectory({"v": v, "w": w}), N)["r"]
        V, W = _rev(v), _rev(w)
        s = random_multiplier(SLOPE, N, m, rng, tight=case % 4 == 0)
        lhs = np.einsum("it,ij,jt->", r, raw_middle(s), r)
        rhs = 2 * W @ s.toeplitz(T0) @ (V - W)
        worst = max(worst, abs(lhs - rhs) / max(1.0, abs(lhs)))
        q = random_multiplier(RELU, N, m, rng)
        lhs = np.einsum("it,ij,jt->", r, raw_middle(q), r)
        t1, t2, t3 = q.toeplitz(T0)
        rhs = (W - V) @ t1 @ (W - V) + W @ t2 @ W + 2 * W @ t3 @ (W - V)
        worst = max(worst, abs(lhs - rhs) / max(1.0, abs(lhs)))
        for T in range(13):
            structure_ok &= is_doubly_hyperdominant(s.toeplitz(T)) and is_metzler(q.toeplitz(T)[2])
    ok = worst <= 1e-9 and structure_ok
    acceptance_line(7, ok, f"200 cases, worst relative identity gap={worst:.1e} (tol 1e-9); "
                           f"Toeplitz class structure for T0=0..12: {'ok' if structure_ok else 'violated'}")
    assert ok


def _class_maps(kind):
    if kind == RELU:
        return [NonlinearityKind("relu")]
    return [NonlinearityKind("relu"), NonlinearityKind("saturation"), NonlinearityKind("tanh")]


def _empirical(plant, kind, seed):
    best = 0.0
    for nl in _class_maps(kind):
        for strat in STRATEGIES:
            best = max(best, empirical_gain(plant, nl, strat, budget=5000, seed=seed).value)
    return best


def test_criterion_8_sandwich(rnn, sweeps):
    rng = np.random.default_rng(8)
    matrix = [("example", rnn, sweeps)]
    for i in range(4):
        p = random_plant(rng, nx=int(rng.integers(1, 5)), m=int(rng.integers(1, 3)), n_d=1, n_e=1)
        matrix.append((f"random{i}", p, {k: certify(AnalysisRequest(p, k, (0, 1, 2))) for k in (RELU, SLOPE)}))
    violations, checked, tightest = [], 0, np.inf
    for name, plant, reps in matrix:
        for kind, rep in reps.items():
            lower = _empirical(plant, kind, seed=checked)
            for res in rep.results:
                if res.status != OPTIMAL:
                    continue
                checked += 1
                tightest = min(tightest, res.gamma - lower)
                if lower > res.gamma * (1 + 1e-6):
                    violations.append((name, kind, res.N, lower, res.gamma))
    cfg = load_config(ROOT / "configs" / "open_loop.yaml")
    deg = certify(AnalysisRequest(cfg.plant, RELU, (0, 1)))
    hinf = hinf_norm_grid(cfg.plant, input_channel=1, output_channel=1)
    deg_err = max(abs(r.gamma - hinf) / hinf for r in deg.results)
    ok = not violations and deg_err <= 0.02
    acceptance_line(8, ok, f"{checked} (plant, class, N) cases, {len(violations)} with empirical > certified, "
                           f"smallest margin {tightest:.3g}; degenerate plant gamma vs Hinf={hinf:.5f} "
                           f"rel.err={deg_err:.2e} (tol 2%)")
    assert ok, violations


def test_criterion_9_replay(tmp_path, capsys):
    configs = sorted((ROOT / "configs").glob("*.yaml"))
    results = []
    for cfg in configs:
        out = tmp_path / cfg.stem
        assert main(["run", "--config", str(cfg), "--out", str(out), "--dump-certificates"]) == 0
        certs = str(out / "certificates.json")
        good = main(["replay", "--config", str(cfg), "--certificates", certs])
        bad = main(["replay", "--config", str(cfg), "--certificates", certs, "--gamma-scale", "0.9"])
        results.append((cfg.stem, good == 0, bad == 1))
    capsys.readouterr()
    ok = all(g and b for _, g, b in results)
    acceptance_line(9, ok, "; ".join(f"{n}: replay {'ok' if g else 'FAILED'}, 0.9 scale "
                                     f"{'rejected' if b else 'ACCEPTED'}" for n, g, b in results))
    assert ok
