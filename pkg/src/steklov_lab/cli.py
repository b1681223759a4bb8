"""Command line entry point: ``steklov-lab <subcommand> [options]``.

Each run writes into ``<out>/<subcommand>/``. Files are staged in a
temporary directory next to it and swapped in only when the run succeeds.
Exit status: 0 success, 1 a verdict failed, 2 invalid configuration,
3 a computation raised.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import shutil
import sys
import tempfile
from pathlib import Path

from . import agmon, config as cfg, verify
from .field import kappa0_gamma0
from .geometry import build_mesh, write_mesh
from .solver import solve_steklov, write_solution

log = logging.getLogger("steklov_lab")

SUBCOMMANDS = ("mesh", "solve", "agmon", "sweep", "decay", "audit", "gauge", "verify")
EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_ERROR = 0, 1, 2, 3


def _fmt(b: float) -> str:
    return f"{b:g}".replace(".", "p")


# -- subcommands ----------------------------------------------------------------------
# each takes (config, staging dir) and returns the reports it produced

def run_mesh(c: cfg.RunConfig, out: Path):
    write_mesh(build_mesh(c.domain, c.h), out / "mesh.txt")
    return []


def run_solve(c: cfg.RunConfig, out: Path):
    mesh = build_mesh(c.domain, c.h)
    for b in c.betas:
        sol = solve_steklov(mesh, c.field, b, k=c.k, quadrature_order=c.quadrature_order, element=c.element)
        write_solution(sol, mesh, out, stem=f"solution_beta{_fmt(b)}")
    return []


def run_agmon(c: cfg.RunConfig, out: Path):
    mesh = build_mesh(c.domain, c.h)
    for b in c.betas:
        t = c.agmon_t if c.agmon_t is not None else verify.well_threshold(c.field, mesh, b)
        data = agmon.build_metric(mesh, c.field, b, t, rule=c.agmon_rule)
        agmon.write_metric_csv(mesh, data, out / f"agmon_beta{_fmt(b)}.csv")
    return []


def run_sweep(c: cfg.RunConfig, out: Path):
    return [verify.scaling_sweep(build_mesh(c.domain, c.h), c.field, c.betas, bracket=c.bracket,
                                 quadrature_order=c.quadrature_order, element=c.element, jobs=c.jobs)]


def run_decay(c: cfg.RunConfig, out: Path):
    mesh = build_mesh(c.domain, c.h)
    reports = []
    for b in c.betas:
        sol = solve_steklov(mesh, c.field, b, k=1, quadrature_order=c.quadrature_order, element=c.element)
        rep = verify.decay_profile(sol, mesh, c.field, c.Ts, r2_floor=c.r2_floor)
        rep.tag = f"_beta{_fmt(b)}"
        reports.append(rep)
    return reports


def run_localization(c: cfg.RunConfig, out: Path):
    mesh = build_mesh(c.domain, c.h)
    b = c.localization_beta or max(c.betas)
    sol = solve_steklov(mesh, c.field, b, k=1, quadrature_order=c.quadrature_order, element=c.element)
    return [verify.localization_check(sol, c.field, mesh, c.scales)]


def run_audit(c: cfg.RunConfig, out: Path):
    mesh = build_mesh(c.domain, c.audit_h or c.h)
    reports = [
        verify.coercivity_audit(mesh, c.field, c.audit_betas, n_trials=c.audit_trials, seed=c.seed,
                                element=c.element, jobs=c.jobs),
        verify.weighted_l2_audit(mesh, c.field, c.audit_betas, Ts=c.Ts, element=c.element, jobs=c.jobs),
        verify.psi_audit(mesh, c.field, c.audit_betas),
        verify.equivalence_audit(c.field, c.audit_betas, seed=c.seed),
    ]
    return reports


def run_gauge(c: cfg.RunConfig, out: Path):
    return [verify.gauge_check(c.domain, c.field, c.gauge_phi, c.gauge_beta, c.gauge_h,
                               tolerances=c.gauge_tol, element=c.element)]


def run_verify(c: cfg.RunConfig, out: Path):
    reports = []
    steps = {"sweep": run_sweep, "decay": run_decay, "localization": run_localization,
             "audit": run_audit, "gauge": run_gauge}
    for name in c.experiments:
        if name == "localization":
            kappa0, _ = kappa0_gamma0(c.field, build_mesh(c.domain, c.h))
            if kappa0 == 0:
                log.info("skipping localization: the field does not vanish on the boundary")
                continue
        reports += steps[name](c, out)
    return reports


RUNNERS = {"mesh": run_mesh, "solve": run_solve, "agmon": run_agmon, "sweep": run_sweep, "decay": run_decay,
           "audit": run_audit, "gauge": run_gauge, "verify": run_verify}


# -- output handling ----------------------------------------------------------------------

@contextlib.contextmanager
def _locked(target: Path):
    lock = target.parent / f".{target.name}.lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError as exc:
        raise RuntimeError(f"output {target} is locked by another run ({lock})") from exc
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def _publish(stage: Path, target: Path) -> None:
    """Replace ``target`` by ``stage`` with renames only."""
    old = None
    if target.exists():
        old = target.with_name(f".{target.name}.old-{os.getpid()}")
        os.replace(target, old)
    os.replace(stage, target)
    if old is not None:
        shutil.rmtree(old, ignore_errors=True)


def _write_reports(reports, out: Path) -> list[dict]:
    summary = []
    names: dict[str, int] = {}
    for rep in reports:
        stem = rep.name + rep.tag
        if stem in names:
            names[stem] += 1
            stem = f"{stem}_{names[stem]}"
        else:
            names[stem] = 0
        rep.write(out, stem)
        summary.append({"report": stem, "kind": rep.kind, "verdict": "pass" if rep.verdict else "fail",
                        "failed_checks": [ch["name"] for ch in rep.checks if not ch["passed"]]})
    return summary


def execute(sub: str, c: cfg.RunConfig, out_root: Path) -> int:
    out_root.mkdir(parents=True, exist_ok=True)
    target = out_root / sub
    with _locked(target):
        stage = Path(tempfile.mkdtemp(prefix=f".{sub}-", dir=out_root))
        try:
            (stage / "config.txt").write_text(c.snapshot())
            reports = RUNNERS[sub](c, stage)
            summary = _write_reports(reports, stage)
            if summary:
                (stage / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
            _publish(stage, target)
        except BaseException:
            shutil.rmtree(stage, ignore_errors=True)
            raise
    for s in summary:
        print(f"{s['verdict'].upper():4s}  {s['report']}" + (f"  ({', '.join(s['failed_checks'])})"
                                                            if s["failed_checks"] else ""))
    return EXIT_OK if all(s["verdict"] == "pass" for s in summary) else EXIT_FAIL


def recheck(paths) -> int:
    """Re-evaluate saved reports from their JSON params and CSV tables."""
    ok = True
    for p in paths:
        p = Path(p)
        doc = json.loads(p.read_text())
        if not isinstance(doc, dict) or "kind" not in doc:
            print(f"skip  {p.name} (not a report)")
            continue
        rep = verify.ExperimentReport.from_json(p.read_text())
        saved = rep.verdict
        csv_path = p.with_suffix(".csv")
        if csv_path.exists():
            rep = verify.ExperimentReport.from_csv(rep, csv_path.read_text())
        rep.evaluate()
        agree = rep.verdict == saved
        ok &= rep.verdict and agree
        print(f"{'PASS' if rep.verdict else 'FAIL'}  {p.name}" + ("" if agree else "  (differs from saved verdict)"))
    return EXIT_OK if ok else EXIT_FAIL


# -- argument parsing -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="steklov-lab", description="Magnetic Steklov eigenvalue laboratory.")
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", metavar="PATH", help="flat dotted key = value file")
    ap.add_argument("--out", metavar="DIR", default="out", help="output root (default: out)")
    ap.add_argument("--preset", choices=sorted(cfg.PRESETS))
    ap.add_argument("--beta", metavar="LIST", help="comma separated beta values")
    ap.add_argument("--h", metavar="REAL", help="mesh size")
    ap.add_argument("--jobs", metavar="N", help="worker processes (default: $STEKLOV_LAB_JOBS or 1)")
    ap.add_argument("--recheck", metavar="JSON", nargs="+",
                    help="with 'verify': re-evaluate saved reports instead of computing")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.recheck:
        if args.subcommand != "verify":
            print("error: --recheck only applies to 'verify'", file=sys.stderr)
            return EXIT_CONFIG
        return recheck(args.recheck)
    jobs = args.jobs if args.jobs is not None else os.environ.get("STEKLOV_LAB_JOBS") or None
    try:
        c = cfg.load(args.config, args.preset, {"beta": args.beta, "h": args.h, "jobs": jobs})
        if c.field is None and args.subcommand not in ("mesh", "solve"):
            raise cfg.ConfigError(f"'{args.subcommand}' needs a magnetic field (field.kind != none)")
    except cfg.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return execute(args.subcommand, c, Path(args.out))
    except Exception as exc:
        print(f"error: {args.subcommand} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
