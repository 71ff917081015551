"""Run configuration, binary field snapshots, and trace CSV files."""
from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .analytic import ProfileSpec
from .continuation import ContinuationTrace, LambdaSchedule, TraceRecord
from .minimizer import SolverOptions
from .spectral import SUPPORTED_DIMENSIONS

MAGIC = b"QCRV"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIId")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass
class BubbleOptions:
    R: float = 10.0
    m: int = 128
    mass: float = 0.125


@dataclass
class RunConfig:
    n: int
    N: int
    profile: ProfileSpec
    schedule: LambdaSchedule
    schedule_scale: str = "relative"  # schedule values are fractions of lambda_max
    solve_lambda: float | None = None
    solver: SolverOptions = field(default_factory=SolverOptions)
    bubble: BubbleOptions = field(default_factory=BubbleOptions)
    output_dir: str = "run"
    seed: int = 0
    defaults_applied: list = field(default_factory=list, repr=False)


def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.replace(",", " ").split())


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _int(text: str) -> int:
    val = float(text)
    if not val.is_integer():
        raise ValueError(f"expected an integer, got {text!r}")
    return int(val)


_SOLVER_KEYS = {f.name: f.type for f in fields(SolverOptions)}

_PARSERS = {
    "dimension": _int,
    "grid": _int,
    "profile.type": str,
    "profile.l": _int,
    "profile.P": _floats,
    "profile.A": float,
    "profile.secondary": _floats,
    "schedule.lambda_hi": float,
    "schedule.lambda_lo": float,
    "schedule.steps": _int,
    "schedule.scale": str,
    "solve.lambda": float,
    "bubble.R": float,
    "bubble.m": _int,
    "bubble.mass": float,
    "output.dir": str,
    "seed": _int,
}
for _name in _SOLVER_KEYS:
    _PARSERS[f"solver.{_name}"] = str if _name == "metric" else (_int if _name == "max_iters" else float)

_DEFAULTS = {
    "dimension": 2,
    "grid": 64,
    "profile.type": "ltype",
    "profile.A": 1.0,
    "schedule.lambda_hi": 0.3,
    "schedule.lambda_lo": 1e-3,
    "schedule.steps": 12,
    "schedule.scale": "relative",
    "bubble.R": 10.0,
    "bubble.m": 128,
    "bubble.mass": 0.125,
    "output.dir": "run",
    "seed": 0,
}


def parse_config(text: str) -> RunConfig:
    """Parse ``key = value`` lines (``#`` comments, dotted keys) into a validated RunConfig."""
    values: dict = {}
    lines: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, val = (part.strip() for part in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in values:
            raise ConfigError(f"duplicate key {key!r} (first set on line {lines[key]})", lineno)
        try:
            values[key] = _PARSERS[key](val)
        except ValueError as exc:
            raise ConfigError(f"malformed value for {key}: {exc}", lineno) from None
        lines[key] = lineno

    applied = []

    def get(key, default=None):
        if key in values:
            return values[key]
        if key in _DEFAULTS:
            applied.append(f"{key} = {_DEFAULTS[key]}")
            return _DEFAULTS[key]
        if default is not None:
            applied.append(f"{key} = {default}")
        return default

    def check(cond, key, message):
        if not cond:
            raise ConfigError(message, lines.get(key))

    n = get("dimension")
    check(n in SUPPORTED_DIMENSIONS, "dimension", f"unsupported dimension {n}; expected one of {SUPPORTED_DIMENSIONS}")
    N = get("grid")
    check(N >= 8 and N & (N - 1) == 0, "grid", f"grid must be a power of two >= 8, got {N}")
    ptype = get("profile.type")
    check(ptype == "ltype", "profile.type", f"unsupported profile type {ptype!r}; only 'ltype' is available")
    l = get("profile.l", 2 if n == 2 else 4)
    check(l >= 2 and l % 2 == 0, "profile.l", f"profile.l must be an even integer >= 2, got {l}")
    P = get("profile.P", (0.0,) * n)
    check(len(P) == n, "profile.P", f"profile.P needs {n} coordinates, got {len(P)}")
    A = get("profile.A")
    check(A > 0, "profile.A", "profile.A must be positive")
    secondary = values.get("profile.secondary")
    check(secondary is None or len(secondary) == n, "profile.secondary", f"profile.secondary needs {n} coordinates")
    profile = ProfileSpec(n=n, l=l, P=tuple(P), A=A, secondary=secondary)

    scale = get("schedule.scale")
    check(scale in ("relative", "absolute"), "schedule.scale", "schedule.scale must be 'relative' or 'absolute'")
    hi, lo, steps = get("schedule.lambda_hi"), get("schedule.lambda_lo"), get("schedule.steps")
    check(lo > 0, "schedule.lambda_lo", "schedule.lambda_lo must be positive")
    order_key = max(("schedule.lambda_lo", "schedule.lambda_hi"), key=lambda k: lines.get(k, 0))
    check(lo < hi, order_key, f"schedule ordering error: lambda_lo={lo} must be below lambda_hi={hi}")
    check(steps >= 2, "schedule.steps", "schedule.steps must be >= 2")
    if scale == "relative":
        check(hi < 1.0, "schedule.lambda_hi", "relative schedule.lambda_hi must be below 1 (lambda_max)")
    schedule = LambdaSchedule(hi, lo, steps)
    solve_lambda = values.get("solve.lambda")
    if solve_lambda is not None:
        check(solve_lambda > 0, "solve.lambda", "solve.lambda must be positive")

    solver_kwargs = {}
    for name in _SOLVER_KEYS:
        key = f"solver.{name}"
        if key in values:
            solver_kwargs[name] = values[key]
        else:
            applied.append(f"{key} = {getattr(SolverOptions(), name)}")
    try:
        solver = SolverOptions(**solver_kwargs)
    except ValueError as exc:
        bad = next((f"solver.{k}" for k in solver_kwargs if f"solver.{k}" in str(exc) or k in str(exc)), None)
        raise ConfigError(str(exc), lines.get(bad)) from None

    bubble = BubbleOptions(get("bubble.R"), get("bubble.m"), get("bubble.mass"))
    check(bubble.R > 0, "bubble.R", "bubble.R must be positive")
    check(bubble.m >= 4, "bubble.m", "bubble.m must be >= 4")
    check(0 < bubble.mass < 0.5, "bubble.mass", "bubble.mass must lie in (0, 1/2)")

    return RunConfig(n=n, N=N, profile=profile, schedule=schedule, schedule_scale=scale,
                     solve_lambda=solve_lambda, solver=solver, bubble=bubble,
                     output_dir=get("output.dir"), seed=get("seed"), defaults_applied=applied)


def write_snapshot(path, values, lam: float) -> None:
    """Write a field as the little-endian QCRV snapshot (header + row-major f8 payload)."""
    arr = np.ascontiguousarray(values, dtype="<f8")
    n = arr.ndim
    N = arr.shape[0]
    if any(s != N for s in arr.shape):
        raise ValueError(f"snapshot payload must be an N^n cube, got shape {arr.shape}")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, n, N, float(lam)))
        fh.write(arr.tobytes(order="C"))
    tmp.replace(path)


@dataclass(frozen=True)
class SnapshotHeader:
    version: int
    n: int
    N: int
    lam: float


def read_snapshot(path) -> tuple[SnapshotHeader, np.ndarray]:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated snapshot header")
    magic, version, n, N, lam = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported snapshot version {version}")
    count = N**n
    payload = data[_HEADER.size:]
    if len(payload) != 8 * count:
        raise ValueError(f"{path}: payload has {len(payload)} bytes, expected {8 * count}")
    arr = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape((N,) * n)
    return SnapshotHeader(version, n, N, lam), arr


def trace_columns(n: int) -> list[str]:
    return (["lambda", "beta", "alpha", "lambda_alpha", "beta_over_loginvlambda", "el_residual",
             "iterations", "converged", "r_sel"]
            + [f"center_{i}" for i in range(n)]
            + ["bubble_s"] + [f"bubble_z0_{i}" for i in range(n)] + ["fit_linf"])


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def trace_rows(trace: ContinuationTrace) -> list[list[str]]:
    rows = []
    for r in trace.records:
        sel, fit = r.selection, r.bubble
        row = [r.lam, r.beta, r.alpha, r.lambda_alpha, r.beta_over_loginvlambda, r.el_residual,
               int(r.iterations), bool(r.converged), sel.radius if sel is not None else None]
        row += list(sel.center) if sel is not None else [None] * trace.n
        row += [fit.s if fit is not None else None]
        row += list(fit.z0) if fit is not None else [None] * trace.n
        row += [fit.linf_residual if fit is not None else None]
        rows.append([_fmt(x) for x in row])
    return rows


def write_trace_csv(path, trace: ContinuationTrace) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(trace_columns(trace.n))
        w.writerows(trace_rows(trace))
    tmp.replace(path)


@dataclass
class _Selection:
    center: np.ndarray
    radius: float


@dataclass
class _Fit:
    s: float
    z0: np.ndarray
    linf_residual: float


def read_trace_csv(path, lambda_max: float = math.nan) -> ContinuationTrace:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    n = sum(1 for h in header if h.startswith("center_"))
    if header != trace_columns(n):
        raise ValueError(f"{path}: unexpected trace columns {header}")
    trace = ContinuationTrace(n, lambda_max)
    col = {name: i for i, name in enumerate(header)}
    for row in body:
        def num(name):
            return float(row[col[name]])
        rec = TraceRecord(lam=num("lambda"), beta=num("beta"), alpha=num("alpha"),
                          el_residual=num("el_residual"), iterations=int(row[col["iterations"]]),
                          converged=row[col["converged"]] == "1")
        if row[col["r_sel"]]:
            rec.selection = _Selection(np.array([num(f"center_{i}") for i in range(n)]), num("r_sel"))
        if row[col["bubble_s"]]:
            rec.bubble = _Fit(num("bubble_s"), np.array([num(f"bubble_z0_{i}") for i in range(n)]), num("fit_linf"))
        trace.records.append(rec)
        trace.fields.append(None)
    return trace
