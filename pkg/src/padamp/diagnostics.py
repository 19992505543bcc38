"""Executable checks of the optimizer's supporting math.

Covers: the norm-growth gap between plain and momentum descent, the
first-moment rearrangement identity, the second-moment and denominator
bounds (with the empirical running gradient bound C1), learning-rate
schedule assumptions, and the running-min convergence tracker.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from ._kernels import norm_growth_arrays
from .core import HyperParams, OptimizerState, beta1_at

__all__ = [
    "NormGrowthTrace",
    "ConvergenceTrace",
    "ScheduleVerdict",
    "DiagnosticsReport",
    "LemmaMonitor",
    "simulate_norm_growth",
    "check_lemma2",
    "check_lemma3_4_5",
    "validate_schedule",
    "track_convergence",
    "momentum_norm_ratio_limit",
]


@dataclass(frozen=True)
class NormGrowthTrace:
    """One step of the two squared-norm recursions and their growth ratio."""

    t: int
    norm_sq_gd: float
    norm_sq_gdm: float
    ratio: float


def momentum_norm_ratio_limit(beta: float) -> float:
    """Asymptotic (momentum growth) / (plain growth) ratio: 1 + 2 beta / (1 - beta)."""
    return 1.0 + 2.0 * beta / (1.0 - beta)


def simulate_norm_growth(
    update_norms_sq: Sequence[float],
    beta: float,
    eta: float,
    theta0_norm_sq: float,
) -> List[NormGrowthTrace]:
    """Iterate both norm recursions exactly and report the growth ratio per step.

    Plain descent adds eta^2 u_t per step; the momentum recursion additionally
    adds 2 eta^2 sum_{k<t} beta^(t-k) u_k. The ratio
    (gdm_t - theta0) / (gd_t - theta0) tends to 1 + 2 beta / (1 - beta) when
    the update norms have finite nonzero sum. beta = 0 is allowed and gives
    ratio exactly 1.
    """
    u = np.asarray(update_norms_sq, dtype=np.float64)
    if u.ndim != 1 or u.size == 0:
        raise ValueError("update_norms_sq must be a non-empty 1-d sequence")
    if np.any(u < 0):
        raise ValueError("update norms must be non-negative")
    if not 0 <= beta < 1:
        raise ValueError(f"beta must lie in [0, 1), got {beta}")
    if float(u.sum()) == 0.0:
        raise ValueError("total update norm is zero; growth ratio undefined")
    gd, gdm = norm_growth_arrays(u, beta, eta, theta0_norm_sq)
    grown_gd = gd[1:] - theta0_norm_sq
    grown_gdm = gdm[1:] - theta0_norm_sq
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(grown_gd > 0, grown_gdm / grown_gd, np.nan)
    return [
        NormGrowthTrace(t=i + 1, norm_sq_gd=float(gd[i + 1]),
                        norm_sq_gdm=float(gdm[i + 1]), ratio=float(ratio[i]))
        for i in range(u.size)
    ]


def check_lemma2(m_t: np.ndarray, m_prev: np.ndarray, g_t: np.ndarray,
                 beta1t: float) -> float:
    """Residual of the rearranged moment recursion.

    m_t = b m_prev + (1-b) g_t rearranges to
    -m_t = -g_t + b/(1-b) (m_t - m_prev); returns the norm of the difference
    between the two sides, which is pure rounding for consistent inputs.
    """
    if not 0 < beta1t < 1:
        raise ValueError(f"beta1t must lie in (0, 1), got {beta1t}")
    m_t = np.asarray(m_t, dtype=np.float64)
    m_prev = np.asarray(m_prev, dtype=np.float64)
    g_t = np.asarray(g_t, dtype=np.float64)
    rhs = -g_t + (beta1t / (1.0 - beta1t)) * (m_t - m_prev)
    return float(np.linalg.norm(-m_t - rhs))


def _bound_slacks(
    m: np.ndarray,
    m_prev: np.ndarray,
    v: np.ndarray,
    g: np.ndarray,
    c1: float,
    eps: float,
    p: float,
    theta: Optional[np.ndarray],
) -> Dict[str, float]:
    """Per-step slacks of the second-moment/denominator/update bounds.

    Uses the uncorrected buffers throughout. With theta absent, the radial
    bound is checked against the norm of the preconditioned moment, which
    dominates the inner product with any unit vector.
    """
    denom = (v + eps) ** p
    inv = 1.0 / denom
    lo = 1.0 / (c1 * c1 + eps) ** p
    hi = 1.0 / eps ** p
    slacks = {
        "lemma3_lower": float(np.min(v)),
        "lemma3_upper": float(c1 * c1 - np.max(v)),
        "lemma4_lower": float(np.min(inv) - lo),
        "lemma4_upper": float(hi - np.max(inv)),
    }
    pre_m = m / denom
    if theta is not None and np.linalg.norm(theta) > 0:
        radial = float(theta @ pre_m) / float(np.linalg.norm(theta))
    else:
        radial = float(np.linalg.norm(pre_m))
    slacks["lemma5_radial"] = c1 / eps ** p - radial
    slacks["lemma5_precond_sq"] = (c1 * c1) / eps ** (2 * p) - float(
        np.sum((g * inv) ** 2)
    )
    slacks["lemma5_moment_diff"] = 2.0 * c1 * c1 / eps ** p - float(
        g @ ((m - m_prev) * inv)
    )
    return slacks


_SLACK_KEYS = (
    "lemma3_lower", "lemma3_upper", "lemma4_lower", "lemma4_upper",
    "lemma5_radial", "lemma5_precond_sq", "lemma5_moment_diff",
)


class LemmaMonitor:
    """Tracks minimum bound slacks and the maximum moment-identity residual live.

    Feed it once per optimizer step, after the state buffers were updated but
    with the pre-step parameter vectors. Intended for run loops; the
    standalone check_lemma3_4_5 replays a gradient history instead.
    """

    def __init__(self):
        self.min_slacks: Dict[str, float] = {k: np.inf for k in _SLACK_KEYS}
        self.max_lemma2_residual = 0.0
        self.steps = 0

    def update(self, state: OptimizerState, groups, grads, p_now: float,
               beta1t: float) -> None:
        hp = state.hp
        theta_by_name = {g.name: g.values for g in groups}
        for name, m in state.m.items():
            g = grads[name]
            slacks = _bound_slacks(
                m, state.m_prev[name], state.v[name], g,
                state.c1[name], hp.epsilon, p_now, theta_by_name.get(name),
            )
            for k, s in slacks.items():
                self.min_slacks[k] = min(self.min_slacks[k], s)
            resid = check_lemma2(m, state.m_prev[name], g, beta1t)
            self.max_lemma2_residual = max(
                self.max_lemma2_residual,
                resid / (1.0 + float(np.linalg.norm(m))),
            )
        self.steps += 1


def check_lemma3_4_5(
    state: OptimizerState,
    grads_history: Sequence[Dict[str, np.ndarray]],
    params_history: Optional[Sequence] = None,
) -> Dict[str, float]:
    """Replay a gradient history through fresh moment buffers; return min slacks.

    The running bound constant C1 is the max gradient norm seen so far per
    group. params_history (sequence of group lists) sharpens the radial bound
    when available.
    """
    hp = state.hp
    if not grads_history:
        raise ValueError("empty gradient history")
    names = list(grads_history[0].keys())
    m = {n: np.zeros_like(grads_history[0][n]) for n in names}
    v = {n: np.zeros_like(grads_history[0][n]) for n in names}
    c1 = {n: 0.0 for n in names}
    mins = {k: np.inf for k in _SLACK_KEYS}
    for t, grads in enumerate(grads_history, start=1):
        b1t = beta1_at(t, hp)
        for n in names:
            g = np.asarray(grads[n], dtype=np.float64)
            c1[n] = max(c1[n], float(np.linalg.norm(g)))
            m_prev = m[n].copy()
            m[n] = b1t * m[n] + (1.0 - b1t) * g
            v[n] = hp.beta2 * v[n] + (1.0 - hp.beta2) * g * g
            theta = None
            if params_history is not None:
                theta = {pg.name: pg.values for pg in params_history[t - 1]}.get(n)
            slacks = _bound_slacks(m[n], m_prev, v[n], g, c1[n], hp.epsilon,
                                   hp.p, theta)
            for k, s in slacks.items():
                mins[k] = min(mins[k], s)
    return {k: float(val) for k, val in mins.items()}


@dataclass(frozen=True)
class ScheduleVerdict:
    family: str
    satisfies_assumptions: bool
    non_increasing: bool
    notes: str


def validate_schedule(family: str, c: float, a: Optional[float] = None) -> ScheduleVerdict:
    """Check a learning-rate family against the step-size series assumptions.

    Power law c/t^a needs 1/2 < a <= 1 so the series diverges while the
    squared series converges. Constant and piecewise-constant-decay rates
    keep eta bounded away from zero, so the squared series diverges; they are
    flagged but remain runnable.
    """
    if c <= 0:
        raise ValueError(f"schedule coefficient must be positive, got {c}")
    if family == "power":
        if a is None or a <= 0:
            raise ValueError("power-law schedule needs a positive exponent")
        ok = 0.5 < a <= 1.0
        notes = "sum diverges, squared sum converges" if ok else (
            "a <= 1/2 makes the squared series diverge" if a <= 0.5
            else "a > 1 makes the series converge"
        )
        return ScheduleVerdict("power", ok, True, notes)
    if family == "constant":
        return ScheduleVerdict("constant", False, True,
                               "constant rate: squared series diverges")
    if family == "piecewise":
        return ScheduleVerdict("piecewise", False, True,
                               "piecewise-constant decay: squared series diverges")
    raise ValueError(f"unknown schedule family {family!r}")


@dataclass
class ConvergenceTrace:
    """Checkpointed estimates of the expected squared gradient norm."""

    t: np.ndarray
    estimate: np.ndarray
    running_min: np.ndarray

    @property
    def final_min(self) -> float:
        return float(self.running_min[-1]) if len(self.running_min) else float("nan")


def track_convergence(estimates: Sequence[float],
                      ts: Optional[Sequence[int]] = None) -> ConvergenceTrace:
    """Running minimum over a sequence of checkpoint estimates."""
    est = np.asarray(estimates, dtype=np.float64)
    if ts is None:
        t = np.arange(1, est.size + 1)
    else:
        t = np.asarray(ts, dtype=np.int64)
        if t.size != est.size:
            raise ValueError("ts and estimates must have equal length")
    running = np.minimum.accumulate(est) if est.size else est.copy()
    return ConvergenceTrace(t=t, estimate=est, running_min=running)


@dataclass
class DiagnosticsReport:
    """One row per check: name, measured value, pass flag."""

    rows: List[tuple] = field(default_factory=list)

    def add(self, name: str, value: float, passed: bool) -> None:
        self.rows.append((name, float(value), bool(passed)))

    @property
    def all_passed(self) -> bool:
        return all(p for _, _, p in self.rows)

    def to_csv(self, path) -> None:
        import csv as _csv

        with open(path, "w", newline="") as fh:
            w = _csv.writer(fh, lineterminator="\n")
            w.writerow(["check", "value", "passed"])
            for name, value, passed in self.rows:
                w.writerow([name, repr(value), int(passed)])

    def __str__(self) -> str:
        lines = []
        for name, value, passed in self.rows:
            lines.append(f"{'PASS' if passed else 'FAIL'}  {name} = {value:.6g}")
        return "\n".join(lines)
