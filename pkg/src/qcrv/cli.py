"""Command-line driver: ``qcrv <command> --config <path> [--out <dir>] [--resume]``."""
from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from .analytic import bubble_constant, make_profile, standard_bubble
from .bubble import NoConcentration, fit_standard_bubble, flatness_diagnostics, rescale, select_radius
from .continuation import (
    check_derivative_identity,
    check_monotone,
    fit_log_slope,
    lambda_alpha_window,
    log_growth_brackets,
    sweep,
)
from .io import (
    ConfigError,
    RunConfig,
    parse_config,
    read_snapshot,
    read_trace_csv,
    trace_columns,
    write_snapshot,
    write_trace_csv,
)
from .minimizer import minimize
from .spectral import TorusGrid
from .verify import run_all

log = logging.getLogger("qcrv")

COMMANDS = ("solve", "sweep", "bubble", "verify", "export")


class CommandError(RuntimeError):
    """Failure inside a command, tagged with the module it came from."""

    def __init__(self, module: str, exc: Exception):
        self.module = module
        super().__init__(f"[{module}] {exc}")


@contextlib.contextmanager
def run_lock(out: Path):
    """Single writer per run directory."""
    out.mkdir(parents=True, exist_ok=True)
    lock = out / "run.lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise RuntimeError(f"{out} is locked by another writer (remove {lock} if stale)") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def _setup_logging(out: Path | None):
    handlers = [logging.StreamHandler(sys.stderr)]
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(out / "run.log"))
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(name)s: %(message)s",
                        handlers=handlers, force=True)


def _problem(cfg: RunConfig):
    grid = TorusGrid(cfg.n, cfg.N)
    profile = make_profile(cfg.profile, grid)
    schedule = cfg.schedule
    if cfg.schedule_scale == "relative":
        schedule = schedule.scaled(profile.lambda_max)
    elif schedule.lambda_hi >= profile.lambda_max:
        raise ConfigError(f"schedule.lambda_hi must be below lambda_max={profile.lambda_max:.6g}")
    return grid, profile, schedule


def _snap_dir(out: Path) -> Path:
    return out / "snapshots"


def cmd_solve(cfg: RunConfig, out: Path, resume: bool) -> int:
    grid, profile, schedule = _problem(cfg)
    lam = cfg.solve_lambda
    if lam is None:
        lam = schedule.lambda_hi
    elif cfg.schedule_scale == "relative":
        lam *= profile.lambda_max
    u0 = None
    snap = out / "solve.qcrv"
    if resume and snap.exists():
        _, u0 = read_snapshot(snap)
    try:
        res = minimize(profile.values, lam, grid, u_init=u0, opts=cfg.solver)
    except ValueError as exc:
        raise CommandError("minimizer", exc) from exc
    write_snapshot(snap, res.u, lam)
    metrics = {
        "lambda": lam, "beta": res.beta, "alpha": res.alpha, "lambda_alpha": lam * res.alpha,
        "el_residual": res.el_residual, "iterations": res.iterations, "converged": res.converged,
        "g1": res.constraints.g1, "g2": res.constraints.g2, "message": res.message,
    }
    (out / "solve_metrics.json").write_text(json.dumps(metrics, indent=2))
    log.info("solve: %s", metrics)
    return 0 if res.converged else 3


def cmd_sweep(cfg: RunConfig, out: Path, resume: bool) -> int:
    grid, profile, schedule = _problem(cfg)
    snaps = _snap_dir(out)
    trace_path = out / "trace.csv"
    trace, u_start = None, None
    if resume and trace_path.exists():
        trace = read_trace_csv(trace_path, profile.lambda_max)
        if trace.records:
            last = len(trace.records) - 1
            hdr, u_start = read_snapshot(snaps / f"lam_{last:03d}.qcrv")
            if hdr.lam != trace.records[-1].lam:
                raise RuntimeError("last snapshot does not match the last trace record; cannot resume")
            log.info("resuming after lambda=%.6g (%d records)", hdr.lam, len(trace.records))

    def persist(rec, u):
        idx = len(state.records) - 1
        write_snapshot(snaps / f"lam_{idx:03d}.qcrv", u, rec.lam)
        write_trace_csv(trace_path, state)
        log.info("lambda=%.6g beta=%.10g alpha=%.6g residual=%.2e iterations=%d converged=%s",
                 rec.lam, rec.beta, rec.alpha, rec.el_residual, rec.iterations, rec.converged)

    from .continuation import ContinuationTrace

    state = trace or ContinuationTrace(grid.n, profile.lambda_max)
    try:
        sweep(profile.values, schedule, grid, cfg.solver, keep_fields=False, u_start=u_start,
              trace=state, callback=persist)
    except (ValueError, RuntimeError) as exc:
        raise CommandError("continuation", exc) from exc
    write_trace_csv(trace_path, state)
    reports = [check_monotone(state), check_derivative_identity(state)]
    fit = fit_log_slope(state)
    reports += [fit, log_growth_brackets(fit, grid.n), lambda_alpha_window(state)]
    _write_reports(out / "sweep_checks.json", reports)
    return 0 if all(r.converged for r in state.records) else 3


def _write_reports(path: Path, reports):
    payload = [{"name": r.name, "status": r.status, "detail": r.detail, "warnings": r.warnings} for r in reports]
    path.write_text(json.dumps(payload, indent=2))
    for r in reports:
        log.info("check %-20s %-12s %s", r.name, r.status, r.detail)


def cmd_bubble(cfg: RunConfig, out: Path, resume: bool) -> int:
    grid, profile, _ = _problem(cfg)
    trace_path = out / "trace.csv"
    if not trace_path.exists():
        raise CommandError("cli_io", FileNotFoundError(f"{trace_path} missing: run 'sweep' first"))
    trace = read_trace_csv(trace_path, profile.lambda_max)
    bdir = out / "bubble"
    bdir.mkdir(exist_ok=True)
    rows = []
    for i, rec in enumerate(trace.records):
        hdr, u = read_snapshot(_snap_dir(out) / f"lam_{i:03d}.qcrv")
        try:
            sel = select_radius(u, grid, mass=cfg.bubble.mass)
        except NoConcentration as exc:
            log.warning("lambda=%.6g: %s", rec.lam, exc)
            continue
        R = min(cfg.bubble.R, 0.25 / sel.radius)
        prof = rescale(u, grid, sel, R, cfg.bubble.m)
        fit = fit_standard_bubble(prof)
        rec.selection, rec.bubble = sel, fit
        write_snapshot(bdir / f"rescaled_{i:03d}.qcrv", prof.values, rec.lam)
        rows.append([rec.lam, sel.radius, *sel.center, sel.achieved_mass, R, prof.window_mass,
                     fit.s, *fit.z0, fit.linf_residual, fit.rms_residual, int(fit.converged)])
    write_trace_csv(trace_path, trace)
    n = grid.n
    with open(bdir / "fits.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda", "r_sel", *[f"center_{i}" for i in range(n)], "ball_mass", "R", "window_mass",
                    "bubble_s", *[f"bubble_z0_{i}" for i in range(n)], "fit_linf", "fit_rms", "fit_converged"])
        w.writerows([[format(float(x), ".17g") for x in row] for row in rows])
    sel_recs = [r for r in trace.records if r.selection is not None]
    report = flatness_diagnostics([r.lam for r in sel_recs], [r.selection.radius for r in sel_recs],
                                  [r.selection.center for r in sel_recs], [tuple(p) for p in _max_points(cfg)],
                                  cfg.profile.l)
    _write_reports(bdir / "flatness.json", [report])
    return 0


def _max_points(cfg: RunConfig):
    pts = [np.asarray(cfg.profile.P) % 1.0]
    if cfg.profile.secondary is not None:
        pts.append(np.asarray(cfg.profile.secondary) % 1.0)
    return pts


def cmd_verify(cfg: RunConfig | None, out: Path | None, resume: bool) -> int:
    results = run_all(seed=cfg.seed if cfg else 0)
    failed = 0
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.suite:14s} {r.name} {r.detail}")
        failed += not r.passed
    print(f"{len(results) - failed}/{len(results)} invariant checks passed")
    return 1 if failed else 0


def cmd_export(cfg: RunConfig, out: Path, resume: bool) -> int:
    trace_path = out / "trace.csv"
    if not trace_path.exists():
        raise CommandError("cli_io", FileNotFoundError(f"{trace_path} missing: nothing to export"))
    trace = read_trace_csv(trace_path)
    exp = out / "export"
    exp.mkdir(exist_ok=True)
    write_trace_csv(exp / "trace.csv", trace)
    C = bubble_constant(trace.n).C
    with open(exp / "beta_vs_loginvlambda.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["log_inv_lambda", "beta", "beta_over_loginvlambda", "flat_slope_target"])
        for r in trace.records:
            x = math.log(1.0 / r.lam)
            w.writerow([format(v, ".17g") for v in (x, r.beta, r.beta / x, 2.0 * C / trace.n)])
    with open(exp / "lambda_alpha.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda", "lambda_alpha", "C_n"])
        for r in trace.records:
            w.writerow([format(v, ".17g") for v in (r.lam, r.lambda_alpha, C)])
    for i, rec in enumerate(trace.records):
        snap = out / "bubble" / f"rescaled_{i:03d}.qcrv"
        if rec.bubble is None or not snap.exists():
            continue
        hdr, vals = read_snapshot(snap)
        _write_overlay(exp / f"bubble_overlay_{i:03d}.csv", vals, hdr, rec, cfg)
    return 0


def _write_overlay(path, vals, hdr, rec, cfg):
    """Profile along the first axis through the lattice centre, with the fitted bubble."""
    m, n = hdr.N, hdr.n
    R = min(cfg.bubble.R, 0.25 / rec.selection.radius)
    ticks = -R + (np.arange(m) + 0.5) * (2.0 * R / m)
    mid = (m // 2,) * (n - 1)
    line = vals[(slice(None),) + mid]
    pts = np.zeros((m, n))
    pts[:, 0] = ticks
    for a in range(1, n):
        pts[:, a] = ticks[m // 2]
    fitted = standard_bubble(rec.bubble.s, rec.bubble.z0, pts)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["z", "u_hat", "fitted_bubble"])
        for z, a, b in zip(ticks, line, fitted):
            w.writerow([format(float(v), ".17g") for v in (z, a, b)])


HANDLERS = {"solve": cmd_solve, "sweep": cmd_sweep, "bubble": cmd_bubble, "verify": cmd_verify, "export": cmd_export}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qcrv", description=__doc__)
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", type=Path, help="key = value run configuration")
    p.add_argument("--out", type=Path, help="run directory (default: output.dir from the config)")
    p.add_argument("--resume", action="store_true", help="continue from the last snapshot in the run directory")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = None
    if args.config is not None:
        try:
            cfg = parse_config(args.config.read_text(encoding="utf-8"))
        except ConfigError as exc:
            print(f"{args.config}: {exc}", file=sys.stderr)
            return 2
    elif args.command != "verify":
        print("--config is required for this command", file=sys.stderr)
        return 2
    out = args.out or (Path(cfg.output_dir) if cfg else None)
    _setup_logging(out if args.command != "verify" else None)
    if cfg is not None:
        for line in cfg.defaults_applied:
            log.info("default applied: %s", line)
    handler = HANDLERS[args.command]
    try:
        if args.command in ("verify", "export"):
            return handler(cfg, out, args.resume)
        with run_lock(out):
            return handler(cfg, out, args.resume)
    except CommandError as exc:
        log.error("%s", exc)
        return 1
    except (OSError, RuntimeError, ValueError) as exc:
        log.error("[cli_io] %s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
