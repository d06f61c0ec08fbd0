"""Command-line front end: ``reluiqc run`` and ``reluiqc replay``."""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import tempfile
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .analysis import (
    ERROR,
    FEASIBILITY,
    MINIMIZE,
    AnalysisRequest,
    WellPosednessError,
    certify,
    check_well_posed,
)
from .filter import build_psi
from .lmi import assemble_L, augment
from .lti import StateSpace, lurye_plant, realize_first_order_bank
from .multiplier import KINDS, RELU, SLOPE, ReluMultiplier, SlopeMultiplier
from .sdp import NUMERICAL_FAILURE, OPTIMAL, SolverOptions, check_certificate

log = logging.getLogger("reluiqc")

SCHEMA_VERSION = 1
EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    name: str
    plant: StateSpace
    classes: tuple
    horizons: tuple
    mode: str = MINIMIZE
    gamma: float | None = None
    assume_well_posed: bool = False
    max_workers: int = 1
    solver: SolverOptions = field(default_factory=SolverOptions)
    out: str = "out"
    seed: int = 0
    source_sha256: str = ""


def _matrix(value, name, shape=None):
    try:
        arr = np.array(value if value is not None else [], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: not a numeric matrix ({exc})") from None
    if arr.ndim == 1 and arr.size == 0 and shape is not None:
        arr = np.zeros(shape)
    if arr.ndim != 2:
        raise ConfigError(f"{name}: expected a list of rows, got shape {arr.shape}")
    if shape is not None and arr.shape != shape:
        raise ConfigError(f"{name}: expected shape {shape}, got {arr.shape}")
    return arr


def _plant_from(spec) -> StateSpace:
    if not isinstance(spec, dict) or len(spec) != 1:
        raise ConfigError("plant: give exactly one of 'transfer_grid' or 'state_space'")
    (kind, body), = spec.items()
    if kind == "transfer_grid":
        try:
            m, n_d = int(body["n_w"]), int(body["n_d"])
            n_e = int(body["n_e"])
            entries = body["entries"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"plant.transfer_grid: missing or bad field {exc}") from None
        if len(entries) != m + n_e or any(len(r) != m + n_d for r in entries):
            raise ConfigError(
                f"plant.transfer_grid: entries must be {m + n_e} x {m + n_d} for n_w={m}, n_d={n_d}, n_e={n_e}"
            )
        try:
            return realize_first_order_bank(entries, (m, n_d), (m, n_e), ("w", "d"), ("v", "e"))
        except ValueError as exc:
            raise ConfigError(f"plant.transfer_grid: {exc}") from None
    if kind == "state_space":
        A = _matrix(body.get("A"), "A")
        nx = A.shape[0]
        if A.shape != (nx, nx):
            raise ConfigError(f"A must be square, got {A.shape}")
        B1 = _matrix(body.get("B1"), "B1")
        B2 = _matrix(body.get("B2"), "B2")
        m, n_d = B1.shape[1], B2.shape[1]
        C2 = _matrix(body.get("C2"), "C2")
        n_e = C2.shape[0]
        blocks = dict(
            A=A,
            B1=_matrix(B1, "B1", (nx, m)),
            B2=_matrix(B2, "B2", (nx, n_d)),
            C1=_matrix(body.get("C1"), "C1", (m, nx)),
            C2=_matrix(C2, "C2", (n_e, nx)),
            D11=_matrix(body.get("D11"), "D11", (m, m)),
            D12=_matrix(body.get("D12"), "D12", (m, n_d)),
            D21=_matrix(body.get("D21"), "D21", (n_e, m)),
            D22=_matrix(body.get("D22"), "D22", (n_e, n_d)),
        )
        return lurye_plant(**blocks)
    raise ConfigError(f"plant: unknown kind {kind!r}")


def _coerce(default, value):
    if isinstance(default, tuple) and isinstance(value, (list, tuple)):
        return tuple(float(v) for v in value)
    if isinstance(default, bool) or not isinstance(default, (int, float)) or value is None:
        return value
    return type(default)(value)


def parse_horizons(text) -> tuple:
    """'0..3' or '0,2,4' (or a YAML list) to a sorted tuple."""
    try:
        if isinstance(text, (list, tuple)):
            items = list(text)
        elif ".." in str(text):
            lo, hi = str(text).split("..")
            items = list(range(int(lo), int(hi) + 1))
        else:
            items = [t for t in str(text).split(",") if t.strip()]
        hs = tuple(int(h) for h in items)
    except (TypeError, ValueError):
        raise ConfigError(f"bad horizon list {text!r}") from None
    if not hs:
        raise ConfigError("horizon list is empty")
    if any(h < 0 for h in hs):
        raise ConfigError(f"horizons must be nonnegative: {hs}")
    return tuple(sorted(set(hs)))


def parse_classes(text) -> tuple:
    items = text if isinstance(text, (list, tuple)) else [t.strip() for t in str(text).split(",") if t.strip()]
    bad = [c for c in items if c not in KINDS]
    if bad or not items:
        raise ConfigError(f"classes must be a non-empty subset of {KINDS}, got {items}")
    return tuple(items)


def load_config(path, overrides=None) -> RunConfig:
    overrides = overrides or {}
    try:
        raw_text = Path(path).read_bytes()
        doc = yaml.safe_load(raw_text)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {doc.get('schema_version')!r}; expected {SCHEMA_VERSION}")
    known = {"schema_version", "name", "seed", "plant", "analysis", "solver", "output"}
    extra = set(doc) - known
    if extra:
        raise ConfigError(f"unknown top-level keys: {sorted(extra)}")

    plant = _plant_from(doc.get("plant"))
    ana = doc.get("analysis") or {}
    classes = parse_classes(overrides.get("classes") or ana.get("classes", list(KINDS)))
    hz = overrides.get("horizons")
    horizons = parse_horizons(hz if hz is not None else ana.get("horizons", []))
    mode = ana.get("mode", MINIMIZE)
    if mode not in (MINIMIZE, FEASIBILITY):
        raise ConfigError(f"analysis.mode must be {MINIMIZE!r} or {FEASIBILITY!r}")
    gamma = ana.get("gamma")
    if mode == FEASIBILITY and (gamma is None or float(gamma) <= 0):
        raise ConfigError("analysis.gamma must be positive in feasibility mode")

    solver_doc = doc.get("solver") or {}
    allowed = {f.name for f in fields(SolverOptions)}
    bad = set(solver_doc) - allowed
    if bad:
        raise ConfigError(f"unknown solver options: {sorted(bad)}")
    defaults = SolverOptions()
    try:
        # YAML reads 1e-7 (no dot) as a string, so coerce to the declared field types
        solver = SolverOptions(**{k: _coerce(getattr(defaults, k), v) for k, v in solver_doc.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"solver: {exc}") from None

    out = overrides.get("out") or (doc.get("output") or {}).get("dir", "out")
    seed = overrides.get("seed")
    cfg = RunConfig(
        name=str(doc.get("name", Path(path).stem)),
        plant=plant,
        classes=classes,
        horizons=horizons,
        mode=mode,
        gamma=None if gamma is None else float(gamma),
        assume_well_posed=bool(ana.get("assume_well_posed", False)),
        max_workers=int(ana.get("max_workers", 1)),
        solver=solver,
        out=str(out),
        seed=int(seed if seed is not None else doc.get("seed", 0)),
        source_sha256=hashlib.sha256(raw_text).hexdigest(),
    )
    try:
        check_well_posed(cfg.plant, cfg.assume_well_posed)
    except WellPosednessError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def certificate_payload(cert) -> dict:
    q = cert.multiplier
    fam = {"Q": [b.tolist() for b in q.Q]} if q.kind == SLOPE else {
        "Q1": [b.tolist() for b in q.Q1],
        "Q2": [b.tolist() for b in q.Q2],
        "Q3": [b.tolist() for b in q.Q3],
    }
    return {"class": cert.kind, "N": cert.N, "m": q.m, "gamma": cert.gamma, "P": cert.P.tolist(), "multiplier": fam}


def payload_checksum(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def multiplier_from_payload(p: dict):
    N, m = int(p["N"]), int(p["m"])
    fam = p["multiplier"]
    if p["class"] == SLOPE:
        return SlopeMultiplier(N, m, [np.array(b, dtype=float) for b in fam["Q"]])
    if p["class"] == RELU:
        return ReluMultiplier(N, m, *([np.array(b, dtype=float) for b in fam[k]] for k in ("Q1", "Q2", "Q3")))
    raise ConfigError(f"unknown class {p['class']!r} in certificate")


def format_table(rows: dict, horizons) -> str:
    """Rows = class, columns = N, gamma to 4 significant figures."""
    head = ["class"] + [f"N={n}" for n in horizons]
    body = []
    for cls, per_n in rows.items():
        cells = [cls]
        for n in horizons:
            r = per_n.get(n)
            if r is None:
                cells.append("-")
            elif r["status"] == OPTIMAL:
                cells.append(f"{r['gamma']:#.4g}")
            elif r["verdict"] == "inconclusive":
                cells.append("infeas.")
            else:
                cells.append("fail")
        body.append(cells)
    widths = [max(len(row[i]) for row in [head] + body) for i in range(len(head))]
    fmt = lambda cells: "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(cells, widths)))
    return "\n".join([fmt(head), "  ".join("-" * w for w in widths)] + [fmt(b) for b in body]) + "\n"


def _dims_report(cfg: RunConfig) -> list:
    out = []
    m = cfg.plant.input_partition[0]
    for cls in cfg.classes:
        for N in cfg.horizons:
            aug = augment(cfg.plant, build_psi(N, m))
            a = assemble_L(aug, cls)
            out.append({"class": cls, "N": N, "n_xhat": aug.n_xhat, "n_r": aug.n_r, "lmi_size": aug.lmi_size,
                        "n_vars": a.n_vars})
    return out


def cmd_run(args) -> int:
    overrides = {"classes": args.classes, "horizons": args.horizons, "out": args.out, "seed": args.seed}
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg.out)
    if args.validate_only:
        print(f"config {cfg.name!r}: n_x={cfg.plant.n_x}, n_w={cfg.plant.input_partition[0]}, "
              f"n_d={cfg.plant.input_partition[1]}, n_e={cfg.plant.output_partition[1]}")
        for d in _dims_report(cfg):
            print("  {class:5s} N={N}: n_xhat={n_xhat} n_r={n_r} lmi={lmi_size} vars={n_vars}".format(**d))
        return EXIT_OK

    np.random.seed(cfg.seed)
    runs, timings, table, dump = [], {}, {}, []
    failed = False
    for cls in cfg.classes:
        req = AnalysisRequest(cfg.plant, cls, cfg.horizons, cfg.mode, cfg.gamma, cfg.solver,
                              cfg.assume_well_posed, max_workers=cfg.max_workers)
        report = certify(req)
        table[cls] = {}
        for res in report.results:
            cert = res.certificate
            entry = {"class": cls, "N": res.N, "status": res.status, "verdict": res.verdict,
                     "gamma": None if not np.isfinite(res.gamma) else res.gamma, "error": res.error,
                     "dims": res.dims, "certificate_sha256": None}
            if cert is not None and cert.optimal:
                payload = certificate_payload(cert)
                entry["certificate_sha256"] = payload_checksum(payload)
                entry["lambda_max_L"] = cert.diagnostics.get("lambda_max_L")
                entry["lambda_min_P"] = cert.diagnostics.get("lambda_min_P")
                entry["solver"] = cert.diagnostics.get("solver")
                dump.append(payload)
            if res.status in (NUMERICAL_FAILURE, ERROR):
                failed = True
            runs.append(entry)
            timings[f"{cls}/N={res.N}"] = res.elapsed
            table[cls][res.N] = entry
    results = {
        "schema_version": SCHEMA_VERSION,
        "tool": "reluiqc",
        "version": __version__,
        "config": {"name": cfg.name, "sha256": cfg.source_sha256},
        "seed": cfg.seed,
        "mode": cfg.mode,
        "horizons": list(cfg.horizons),
        "runs": runs,
        "timings_s": timings,
    }
    text = format_table(table, cfg.horizons)
    _atomic_write(out / "table.txt", text)
    _atomic_write(out / "results.json", json.dumps(results, indent=2, sort_keys=True) + "\n")
    if args.dump_certificates:
        doc = {"schema_version": SCHEMA_VERSION, "config_sha256": cfg.source_sha256, "certificates": dump}
        _atomic_write(out / "certificates.json", json.dumps(doc) + "\n")
    sys.stdout.write(text)
    if failed and not args.keep_going:
        print("one or more solves failed numerically (use --keep-going to ignore)", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def replay_certificates(cfg: RunConfig, doc: dict, gamma_scale: float = 1.0, lmi_tol: float = 1e-6,
                        psd_tol: float = 1e-7) -> list:
    """Re-check every stored certificate; returns (label, CertificateCheck) pairs."""
    out = []
    m = cfg.plant.input_partition[0]
    for p in doc.get("certificates", []):
        mult = multiplier_from_payload(p)
        if mult.m != m:
            raise ConfigError(f"certificate width {mult.m} does not match plant width {m}")
        aug = augment(cfg.plant, build_psi(mult.N, m))
        P = np.array(p["P"], dtype=float)
        if P.shape != (aug.n_xhat, aug.n_xhat):
            raise ConfigError(f"certificate P has shape {P.shape}, expected {(aug.n_xhat, aug.n_xhat)}")
        chk = check_certificate(aug, P, mult, float(p["gamma"]) * gamma_scale, lmi_tol=lmi_tol, psd_tol=psd_tol)
        out.append((f"{p['class']} N={mult.N} gamma={float(p['gamma']) * gamma_scale:.6g}", chk))
    return out


def cmd_replay(args) -> int:
    try:
        cfg = load_config(args.config)
        doc = json.loads(Path(args.certificates).read_text())
        checks = replay_certificates(cfg, doc, args.gamma_scale)
    except (ConfigError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"replay error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not checks:
        print("no certificates to replay", file=sys.stderr)
        return EXIT_FAIL
    ok = True
    for label, chk in checks:
        print(f"{label}: {chk.summary()}")
        ok &= chk.passed
    return EXIT_OK if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="reluiqc", description="Gain bounds for loops with repeated ReLU or "
                                 "slope-restricted nonlinearities via finite-horizon IQC filters.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="certify a configured plant over a horizon sweep")
    run.add_argument("--config", required=True)
    run.add_argument("--out", help="output directory (overrides the config)")
    run.add_argument("--classes", help="comma list, e.g. relu,slope")
    run.add_argument("--horizons", help="e.g. 0..3 or 0,2,4")
    run.add_argument("--validate-only", action="store_true", help="parse and report dimensions, no solves")
    run.add_argument("--keep-going", action="store_true", help="exit 0 even if a solve fails numerically")
    run.add_argument("--seed", type=int)
    run.add_argument("--dump-certificates", action="store_true")
    run.set_defaults(func=cmd_run)

    rep = sub.add_parser("replay", help="re-validate dumped certificates against a config")
    rep.add_argument("--config", required=True)
    rep.add_argument("--certificates", required=True)
    rep.add_argument("--gamma-scale", type=float, default=1.0, help="multiply each stored gamma before checking")
    rep.set_defaults(func=cmd_replay)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
