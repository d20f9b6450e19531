"""Command-line front end: ``qfit run``, ``qfit sweep`` and ``qfit check``."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import fitalgs, problem as pb, sweeps
from .errors import DimensionMismatch, ParseError, QfitError

SCHEMA_VERSION = "1.0"
EXIT_SUITE_FAIL = 5


def read_csv_matrix(path) -> np.ndarray:
    """Parse a headerless numeric CSV; ragged or non-numeric lines raise ``ParseError``."""
    rows, width = [], None
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise ParseError(f"{path} line {lineno}: non-numeric value in {row!r}") from None
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise ParseError(f"{path} line {lineno}: expected {width} columns, found {len(vals)}")
            rows.append(vals)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    return np.array(rows)


def load_problem(matrix_csv, response_csv) -> pb.FitProblem:
    F = read_csv_matrix(matrix_csv)
    y = read_csv_matrix(response_csv)
    if y.shape[1] != 1:
        if y.shape[0] == 1:
            y = y.T
        else:
            raise ParseError(f"{response_csv}: expected one value per line")
    if y.shape[0] != F.shape[0]:
        raise DimensionMismatch(f"response has {y.shape[0]} entries, matrix has {F.shape[0]} rows")
    return pb.normalize_problem(F, y.ravel())


def parse_caps(text: str | None) -> dict:
    caps = {"dme_steps": 10**6, "ae_applications": 10**5}
    if not text:
        return caps
    for item in text.split(","):
        key, _, val = item.partition("=")
        key = key.strip()
        if key not in caps or not val:
            raise ParseError(f"bad --caps entry {item!r}; use dme_steps=N,ae_applications=N")
        caps[key] = int(float(val))
    return caps


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qfit", description="Simulated quantum least-squares fit estimators.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", type=Path, default=None, help="report path (stdout if omitted)")

    run = sub.add_parser("run", help="run estimators on a problem")
    common(run)
    run.add_argument("--matrix", type=Path)
    run.add_argument("--response", type=Path)
    run.add_argument("--estimator", choices=["phi", "norm", "theta", "full", "sweeps"], default="phi")
    run.add_argument("--epsilon", type=float, default=0.1)
    run.add_argument("--confidence", type=float, default=2.0 / 3.0, help="target success probability")
    run.add_argument("--backend", choices=["spectral", "channel"], default="spectral")
    run.add_argument("--pe-mode", choices=["idealized", "faithful"], default="faithful")
    run.add_argument("--suzuki-order", type=int, default=1)
    run.add_argument("--caps", default=None, help="e.g. dme_steps=1e12,ae_applications=1e5")

    sw = sub.add_parser("sweep", help="run a scaling or contract sweep")
    common(sw)
    sw.add_argument("--kind", choices=list(sweeps.SWEEP_KINDS), required=True)

    chk = sub.add_parser("check", help="run property suites on a problem")
    common(chk)
    chk.add_argument("--matrix", type=Path, required=True)
    chk.add_argument("--response", type=Path, required=True)
    return parser


def write_report(report: dict, out) -> None:
    text = json.dumps(report, indent=2, sort_keys=True, default=_json_default) + "\n"
    if out is None:
        sys.stdout.write(text)
        return
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=out.parent, prefix=out.name, suffix=".tmp")
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, out)


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _estimate(value, target, kind, classical, reps, confidence) -> dict:
    if kind == "relative":
        dev = abs(value - classical) / abs(classical)
    elif kind == "l2":
        dev = float(np.linalg.norm(np.asarray(value) - np.asarray(classical)))
    else:
        dev = abs(value - classical)
    return {"value": value, "target_error": target, "error_kind": kind, "classical": classical,
            "deviation": float(dev), "within_target": bool(dev <= target),
            "repetitions": int(reps), "claimed_confidence": float(confidence)}


def run_estimators(args, cfg: fitalgs.QuantumFitConfig, p: pb.FitProblem) -> tuple[dict, dict]:
    rng = np.random.default_rng(args.seed)
    fit = p.fit
    eps = args.epsilon
    est, cost = {}, {}
    rounds = fitalgs.pr.rounds_for_confidence(cfg.confidence_delta)
    if args.estimator == "phi":
        o = fitalgs.estimate_phi(p, eps, fitalgs.QuantumFitConfig(**{**cfg.__dict__, "boost_rounds": rounds}), rng)
        est["phi"] = _estimate(o.value, eps, "additive", fit.phi, o.repetitions_used, o.claimed_confidence)
        cost.update({"ae_applications": o.repetitions_used, "register_bits": o.details["register_bits"],
                     "dme_copies": o.details.get("dme_copies")})
    elif args.estimator == "norm":
        o = fitalgs.estimate_theta_norm(p, eps, fitalgs.QuantumFitConfig(**{**cfg.__dict__, "boost_rounds": rounds}), rng)
        est["theta_norm"] = _estimate(o.value, eps, "relative", fit.theta_norm, o.repetitions_used,
                                      o.claimed_confidence)
        cost.update({"ae_applications": o.repetitions_used, "register_bits": o.details["register_bits"],
                     "dme_copies": o.details.get("dme_copies")})
    elif args.estimator == "theta":
        vec, per_entry, c = fitalgs.estimate_theta_bar_full(p, eps, cfg, rng)
        est["theta_bar"] = _estimate([float(v) for v in vec], eps, "l2", [float(v) for v in fit.theta_bar],
                                     c["ae_applications"], 2.0 / 3.0)
        est["theta_bar"]["per_entry"] = per_entry
        cost.update(c)
        if cfg.backend == "channel":
            cost["tau_channel"] = fitalgs.channel_check(p, cfg)
            cost["direction_source"] = "spectral"
    else:
        f = fitalgs.full_fit(p, eps, cfg, rng)
        conf = 1.0 - cfg.confidence_delta
        est["phi"] = _estimate(f.phi_hat, eps, "additive", fit.phi, f.cost["phi_ae_applications"], conf)
        est["theta_norm"] = _estimate(f.theta_norm_hat, eps, "relative", fit.theta_norm,
                                      f.cost["norm_ae_applications"], conf)
        est["theta_bar"] = _estimate([float(v) for v in f.theta_bar_hat], eps, "l2",
                                     [float(v) for v in fit.theta_bar], f.cost["direction_ae_applications"], conf)
        est["theta_bar"]["per_entry"] = f.per_entry
        est["theta_hat"] = _estimate([float(v) for v in f.theta_hat], eps * (fit.theta_norm + 1), "l2",
                                     [float(v) for v in fit.theta_hat], f.cost["total_ae_applications"], conf)
        cost.update(f.cost)
    return est, cost


def classical_section(p: pb.FitProblem) -> dict:
    fit = p.fit
    return {"phi": fit.phi, "theta_norm": fit.theta_norm, "theta_hat": [float(v) for v in fit.theta_hat],
            "theta_bar": [float(v) for v in fit.theta_bar], "residual_norm2": fit.E_hat}


def property_suites(p: pb.FitProblem) -> dict:
    """Classical identities, bound checks and sign-gadget structure for one problem."""
    fit = p.fit
    F, y = p.F, p.y
    normal = float(np.max(np.abs(F.T @ (F @ fit.theta_hat) - F.T @ y)))
    ortho = abs(float(fit.y_hat @ fit.residual))
    identities = {
        "normal_equations_residual": normal,
        "fit_residual_orthogonality": ortho,
        "residual_equals_one_minus_phi": abs(fit.E_hat - (1.0 - fit.phi)),
    }
    ident_ok = normal <= 1e-9 and ortho <= 1e-10 and identities["residual_equals_one_minus_phi"] <= 1e-10
    bounds = pb.check_bounds(p)
    suites = {
        "classical_identities": {"passed": bool(ident_ok), "details": identities},
        "bounds": {"passed": bounds.passed, "details": bounds.checks},
    }
    if fit.theta_norm > 0:
        g = pb.build_sign_gadget(p, fit.theta_norm)
        GtG = float(np.max(np.abs(g.G.T @ g.G - np.eye(p.d) / p.d)))
        n_pad = g.G.shape[0]
        col = float(np.max(np.abs(np.abs(g.G[:, 0]) - 1 / np.sqrt(n_pad * p.d))))
        last = float(g.problem.fit.theta_bar[p.d])
        suites["sign_gadget"] = {
            "passed": bool(GtG <= 1e-12 and col <= 1e-15 and abs(last - 1 / np.sqrt(2)) <= 1e-9),
            "details": {"gram_error": GtG, "first_column_error": col, "marker_entry": last},
        }
    return suites


def config_echo(args) -> dict:
    out = {}
    for k, v in sorted(vars(args).items()):
        if k in ("func", "out"):
            continue
        out[k] = str(v) if isinstance(v, Path) else v
    return out


def cmd_run(args) -> tuple[dict, int]:
    caps = parse_caps(args.caps)
    report = {"schema_version": SCHEMA_VERSION, "command": "run", "config": config_echo(args)}
    report["config"]["caps"] = caps
    if args.estimator == "sweeps":
        results = {k: sweeps.run_sweep(k, args.seed) for k in sweeps.SWEEP_KINDS}
        report["sweeps"] = results
        report["suites"] = {k: {"passed": bool(v["passed"])} for k, v in results.items()}
        return report, 0 if all(v["passed"] for v in results.values()) else EXIT_SUITE_FAIL
    if args.matrix is None or args.response is None:
        raise ParseError("--matrix and --response are required for this estimator")
    if not 0.5 < args.confidence < 1:
        raise ParseError("--confidence must lie in (1/2, 1)")
    p = load_problem(args.matrix, args.response)
    cfg = fitalgs.QuantumFitConfig(epsilon=args.epsilon, confidence_delta=1.0 - args.confidence,
                                   backend=args.backend, pe_mode=args.pe_mode, seed=args.seed,
                                   suzuki_order=args.suzuki_order, step_caps=caps)
    report["problem"] = p.summary()
    report["classical"] = classical_section(p)
    est, cost = run_estimators(args, cfg, p)
    report["estimates"] = est
    report["cost"] = cost
    report["seeds"] = {"root": args.seed, "scheme": "numpy SeedSequence spawn tree"}
    report["suites"] = {}
    return report, 0


def cmd_sweep(args) -> tuple[dict, int]:
    res = sweeps.run_sweep(args.kind, args.seed)
    report = {"schema_version": SCHEMA_VERSION, "command": "sweep", "config": config_echo(args),
              "sweeps": {args.kind: res}, "suites": {args.kind: {"passed": bool(res["passed"])}}}
    return report, 0 if res["passed"] else EXIT_SUITE_FAIL


def cmd_check(args) -> tuple[dict, int]:
    p = load_problem(args.matrix, args.response)
    suites = property_suites(p)
    report = {"schema_version": SCHEMA_VERSION, "command": "check", "config": config_echo(args),
              "problem": p.summary(), "classical": classical_section(p), "suites": suites}
    return report, 0 if all(s["passed"] for s in suites.values()) else EXIT_SUITE_FAIL


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    start = time.perf_counter()
    handlers = {"run": cmd_run, "sweep": cmd_sweep, "check": cmd_check}
    try:
        report, code = handlers[args.command](args)
    except QfitError as exc:
        print(f"qfit: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"qfit: invalid argument: {exc}", file=sys.stderr)
        return 2
    report["timing"] = {"wall_clock_seconds": time.perf_counter() - start}
    write_report(report, args.out)
    return code


if __name__ == "__main__":
    sys.exit(main())
