"""Downward sweeps in lambda with warm starts, and the energy-asymptotics checks."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .analytic import bubble_constant
from .constraints import check_admissible
from .minimizer import MinimizerResult, SolverOptions, minimize
from .spectral import TorusGrid

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LambdaSchedule:
    lambda_hi: float
    lambda_lo: float
    steps: int

    def __post_init__(self):
        if not self.lambda_lo > 0:
            raise ValueError("lambda_lo must be positive")
        if not self.lambda_lo < self.lambda_hi:
            raise ValueError(f"lambda_lo={self.lambda_lo} must be below lambda_hi={self.lambda_hi}")
        if self.steps < 2:
            raise ValueError("a schedule needs at least 2 steps")

    def values(self) -> np.ndarray:
        """Geometric (log-uniform) values from lambda_hi down to lambda_lo."""
        return np.geomspace(self.lambda_hi, self.lambda_lo, self.steps)

    @property
    def ratio(self) -> float:
        return (self.lambda_lo / self.lambda_hi) ** (1.0 / (self.steps - 1))

    def scaled(self, factor: float) -> "LambdaSchedule":
        return LambdaSchedule(self.lambda_hi * factor, self.lambda_lo * factor, self.steps)


@dataclass
class TraceRecord:
    lam: float
    beta: float
    alpha: float
    el_residual: float
    iterations: int
    converged: bool
    constraints_ok: bool = True
    selection: object = None  # bubble.ConcentrationSelection
    bubble: object = None  # bubble.BubbleFit

    @property
    def lambda_alpha(self) -> float:
        return self.lam * self.alpha

    @property
    def beta_over_loginvlambda(self) -> float:
        return self.beta / math.log(1.0 / self.lam)

    @classmethod
    def from_result(cls, res: MinimizerResult) -> "TraceRecord":
        return cls(res.lam, res.beta, res.alpha, res.el_residual, res.iterations,
                   res.converged, res.constraints.passed)


@dataclass
class ContinuationTrace:
    n: int
    lambda_max: float
    records: list = field(default_factory=list)
    fields: list = field(default_factory=list, repr=False)  # u per record, when kept

    def converged(self) -> list:
        return [r for r in self.records if r.converged]

    def append(self, rec: TraceRecord, u=None):
        if self.records and not rec.lam < self.records[-1].lam:
            raise ValueError("trace records must be appended in decreasing lambda")
        self.records.append(rec)
        self.fields.append(u)


@dataclass
class CheckReport:
    """Outcome of one trace check; ``status`` is 'pass', 'fail' or 'inconclusive'."""

    name: str
    status: str
    detail: str = ""
    values: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.status == "pass"


def sweep(f0, schedule: LambdaSchedule, grid: TorusGrid, opts: SolverOptions | None = None,
          keep_fields: bool = True, u_start=None, trace: ContinuationTrace | None = None,
          callback=None) -> ContinuationTrace:
    """Solve from lambda_hi down to lambda_lo, warm-starting each solve from the last.

    ``u_start``/``trace`` resume an interrupted sweep: already-recorded lambdas
    are skipped and ``u_start`` seeds the next solve.  ``callback(record, u)``
    runs after every solve.
    """
    opts = opts or SolverOptions()
    adm = check_admissible(f0, grid)
    if not adm.admissible:
        raise ValueError(f"profile is not admissible: {adm}")
    lams = schedule.values()
    if lams[0] >= adm.lambda_max:
        raise ValueError(f"lambda_hi={lams[0]} must be below lambda_max={adm.lambda_max:.6g}")
    trace = trace or ContinuationTrace(grid.n, adm.lambda_max)
    done = {r.lam for r in trace.records}
    u = u_start
    for lam in lams:
        lam = float(lam)
        if lam in done:
            continue
        try:
            res = minimize(f0, lam, grid, u_init=u, opts=opts)
        except ValueError as exc:
            if u is None:
                raise RuntimeError(f"seed failed at the first lambda={lam:.6g}: {exc}") from exc
            raise
        if not res.converged:
            log.warning("lambda=%.6g not converged: %s (residual %.3e)", lam, res.message, res.el_residual)
        rec = TraceRecord.from_result(res)
        trace.append(rec, res.u if keep_fields else None)
        if callback is not None:
            callback(rec, res.u)
        u = res.u
    return trace


def check_monotone(trace: ContinuationTrace) -> CheckReport:
    """beta strictly decreasing as lambda increases, over consecutive converged records."""
    recs = trace.converged()
    if len(recs) < 2:
        return CheckReport("monotone", "pass", "vacuous: fewer than 2 converged records",
                           warnings=["vacuous pass"])
    margins = [a.beta - b.beta for a, b in zip(recs[1:], recs[:-1])]
    # records are in decreasing lambda, so beta must increase along the list
    ok = all(m > 0 for m in margins)
    return CheckReport("monotone", "pass" if ok else "fail",
                       f"min margin {min(margins):.6g}", {"margins": margins})


def central_derivative(lams, betas) -> np.ndarray:
    """beta'(lambda_i) by a central difference in log(lambda), interior points only.

    Exact for beta = c log(1/lambda) + const; second order otherwise.
    """
    x = np.log(np.asarray(lams, dtype=float))
    b = np.asarray(betas, dtype=float)
    slope = (b[2:] - b[:-2]) / (x[2:] - x[:-2])
    return slope / np.exp(x[1:-1])


def check_derivative_identity(trace: ContinuationTrace, rtol: float = 0.05,
                              min_ratio: float = 0.8, max_exceptions: int = 1) -> CheckReport:
    """Compare central differences of beta with -2 alpha / n at interior records.

    A single violating interior point whose neighbours pass is flagged (beta
    is only differentiable almost everywhere) rather than failed.
    """
    recs = trace.converged()
    if len(recs) < 3:
        return CheckReport("derivative_identity", "inconclusive", "needs >= 3 converged records")
    lams = np.array([r.lam for r in recs])
    steps = lams[1:] / lams[:-1]
    if float(steps.min()) < min_ratio:
        return CheckReport("derivative_identity", "inconclusive",
                           f"schedule too coarse: step ratio {steps.min():.3f} < {min_ratio}")
    D = central_derivative(lams, [r.beta for r in recs])
    target = np.array([-2.0 * r.alpha / trace.n for r in recs[1:-1]])
    rel = np.abs(D - target) / np.abs(target)
    bad = [i for i, e in enumerate(rel) if e > rtol]
    values = {"lambda": lams[1:-1].tolist(), "D": D.tolist(), "target": target.tolist(),
              "rel_error": rel.tolist()}
    if not bad:
        return CheckReport("derivative_identity", "pass", f"max rel error {rel.max():.4f}", values)
    isolated = len(bad) <= max_exceptions and all(
        (i - 1 not in bad) and (i + 1 not in bad) for i in bad
    )
    if isolated:
        return CheckReport("derivative_identity", "pass", f"flagged interior points {bad}", values,
                           warnings=[f"isolated violation at lambda={lams[1 + i]:.6g}" for i in bad])
    return CheckReport("derivative_identity", "fail", f"violations at {bad}, max {rel.max():.4f}", values)


def fit_log_slope(trace: ContinuationTrace, small_fraction: float = 0.1) -> CheckReport:
    """Least-squares beta = slope * log(1/lambda) + intercept on the small-lambda records."""
    recs = [r for r in trace.converged() if r.lam <= small_fraction * trace.lambda_max]
    if len(recs) < 3:
        return CheckReport("log_slope", "inconclusive", "needs >= 3 converged small-lambda records")
    x = np.log(1.0 / np.array([r.lam for r in recs]))
    y = np.array([r.beta for r in recs])
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    C = bubble_constant(trace.n).C
    return CheckReport("log_slope", "pass", f"slope {slope:.6g} (flat-case target {2 * C / trace.n:.6g})", {
        "slope": float(slope), "intercept": float(intercept), "r_squared": r2,
        "lambda": [r.lam for r in recs], "ratios": (y / x).tolist(),
        "target_slope": 2.0 * C / trace.n, "C": C,
    })


def log_growth_brackets(fit: CheckReport, n: int, lower: float = 0.9, upper: float = 1.1,
                        slope_window=(0.8, 1.2)) -> CheckReport:
    """Pointwise ratios in [lower C/n, upper C] and slope in slope_window * (2/n) C."""
    if fit.status != "pass":
        return CheckReport("log_brackets", "inconclusive", fit.detail)
    C = bubble_constant(n).C
    lo, hi = lower * C / n, upper * C
    ratios = np.array(fit.values["ratios"])
    ratio_ok = bool(np.all((ratios >= lo) & (ratios <= hi)))
    target = 2.0 * C / n
    slope = fit.values["slope"]
    slope_ok = slope_window[0] * target <= slope <= slope_window[1] * target
    status = "pass" if ratio_ok and slope_ok else "fail"
    detail = (f"ratios in [{ratios.min():.4f}, {ratios.max():.4f}] vs [{lo:.4f}, {hi:.4f}]; "
              f"slope {slope:.4f} vs [{slope_window[0] * target:.4f}, {slope_window[1] * target:.4f}]")
    return CheckReport("log_brackets", status, detail,
                       {"ratio_ok": ratio_ok, "slope_ok": slope_ok, **fit.values})


def lambda_alpha_window(trace: ContinuationTrace, lower: float = 0.45, upper: float = 1.10,
                        slack: float = 0.02, small_fraction: float = 0.01) -> CheckReport:
    """lambda*alpha at the smallest converged lambda lies in [lower, upper] * C_n,
    non-decreasing (within ``slack``) over the last three records."""
    recs = trace.converged()
    if not recs or recs[-1].lam > small_fraction * trace.lambda_max:
        return CheckReport("lambda_alpha", "fail", "no converged record at small enough lambda")
    C = bubble_constant(trace.n).C
    la = [r.lambda_alpha for r in recs]
    last = la[-1]
    in_window = lower * C <= last <= upper * C
    tail = la[-3:]
    trend_ok = all(b >= a * (1.0 - slack) for a, b in zip(tail[:-1], tail[1:]))
    status = "pass" if in_window and trend_ok else "fail"
    detail = (f"lambda*alpha={last:.5g} (target C_n={C:.5g}, window [{lower * C:.5g}, {upper * C:.5g}]); "
              f"last three {', '.join(f'{v:.5g}' for v in tail)}")
    return CheckReport("lambda_alpha", status, detail,
                       {"lambda_alpha": la, "in_window": in_window, "trend_ok": trend_ok, "C": C})
