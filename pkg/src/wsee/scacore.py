"""Successive concave approximation of the weighted sum energy efficiency.

Each outer iteration builds a separable concave surrogate that matches
the true objective's value and gradient at the current iterate, solves
the resulting box-constrained subproblem, and moves along the obtained
direction with an Armijo backtracking step.  A sequence of ascending
power constraints is solved warm-started, which in practice tracks the
global optimum closely.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .metrics import LN2, wsee_grad, wsee_total
from .netgen import SystemConfig

# Armijo backtracking gamma = delta^k for k = 0..TRIALS-1.
ARMIJO_DELTA = 0.5
ARMIJO_SLOPE_FRACTION = 0.01
ARMIJO_TRIALS = 31

# Subproblem stops when the projected gradient falls below this, the
# outer loop when the iterate moves less than OUTER_TOL in infinity norm.
INNER_TOL = 1e-9
OUTER_TOL = 1e-8


@dataclass
class SolverLimits:
    """Iteration caps; the truncated variant shrinks both."""

    inner: int = 500
    outer: int = 700


@dataclass
class SurrogateCoeffs:
    """Coefficients of the concave surrogate sum_i c1_i log2(1+gain_i p_i) + c2_i p_i + c3_i.

    gain_i is the effective SINR slope H_ii / (1 + sum_{j!=i} H_ij p_j^t)
    with the interference frozen at the expansion point.
    """

    c1: np.ndarray
    c2: np.ndarray
    c3: np.ndarray
    gain: np.ndarray
    expansion_point: np.ndarray


@dataclass
class ScaTrace:
    """Per-constraint record of one SCA run."""

    iterates: list = field(default_factory=list)
    objective_values: list = field(default_factory=list)
    step_sizes: list = field(default_factory=list)
    inner_iteration_counts: list = field(default_factory=list)
    targets: list = field(default_factory=list)  # subproblem solutions per iteration


def surrogate_coeffs(p_t: np.ndarray, H: np.ndarray, cfg: SystemConfig) -> SurrogateCoeffs:
    """Concave surrogate matching objective value and gradient at p_t.

    c1_i scales the own-rate term by the inverse consumed power, c2_i
    absorbs the remaining gradient components (interference caused at
    others and the amplifier term), and c3_i restores the value match.
    """
    p_t = np.asarray(p_t, dtype=float)
    mu = cfg.amp_inefficiency
    pc = cfg.static_power
    w = cfg.weights
    hd = np.diag(H)
    off = H - np.diag(hd)
    inr = 1.0 + off @ p_t
    gain = hd / inr
    c1 = w / (mu * p_t + pc)
    rate_slope = gain / ((1.0 + gain * p_t) * LN2)
    c2 = wsee_grad(p_t, H, cfg) - c1 * rate_slope
    c3 = -c2 * p_t
    return SurrogateCoeffs(c1=c1, c2=c2, c3=c3, gain=gain, expansion_point=p_t.copy())


def surrogate_value(coeffs: SurrogateCoeffs, p: np.ndarray) -> float:
    return float(np.sum(coeffs.c1 * np.log1p(coeffs.gain * p) / LN2
                        + coeffs.c2 * p + coeffs.c3))


def surrogate_grad(coeffs: SurrogateCoeffs, p: np.ndarray) -> np.ndarray:
    return coeffs.c1 * coeffs.gain / ((1.0 + coeffs.gain * p) * LN2) + coeffs.c2


def _solve_subproblem(coeffs: SurrogateCoeffs, pm: float,
                      limits: SolverLimits) -> tuple[np.ndarray, int]:
    """Projected gradient ascent with per-coordinate curvature-adaptive steps.

    The surrogate is separable and strictly concave per coordinate, so
    scaling each gradient component by the inverse local curvature gives
    a projected Newton step that converges in a handful of iterations.
    Returns the best iterate seen together with the iteration count.
    """
    c1, c2, gain = coeffs.c1, coeffs.c2, coeffs.gain
    p = np.clip(coeffs.expansion_point, 0.0, pm)
    best_p = p.copy()
    best_v = surrogate_value(coeffs, p)
    for it in range(limits.inner):
        u = 1.0 + gain * p
        g = c1 * gain / (u * LN2) + c2
        projected = np.where(p <= 0.0, np.maximum(g, 0.0),
                             np.where(p >= pm, np.minimum(g, 0.0), g))
        if np.max(np.abs(projected)) < INNER_TOL:
            return p, it
        curvature = c1 * gain * gain / (u * u * LN2)
        p = np.clip(p + g / np.maximum(curvature, 1e-30), 0.0, pm)
        v = surrogate_value(coeffs, p)
        if v > best_v:
            best_v = v
            best_p = p.copy()
    return best_p, limits.inner


def solve_subproblem(coeffs: SurrogateCoeffs, pm: float,
                     limits: SolverLimits | None = None) -> np.ndarray:
    """Maximize the separable surrogate over the box [0, pm]^L."""
    p, _ = _solve_subproblem(coeffs, pm, limits or SolverLimits())
    return p


def armijo_step(p_prev: np.ndarray, bp: np.ndarray, H: np.ndarray,
                cfg: SystemConfig) -> float:
    """Backtracking step size toward the subproblem solution bp.

    Returns the largest gamma = ARMIJO_DELTA^k whose objective gain is at
    least ARMIJO_SLOPE_FRACTION of the linear prediction; falls back to
    the smallest trial when none qualifies.
    """
    direction = bp - p_prev
    base = wsee_total(p_prev, H, cfg)
    slope = float(wsee_grad(p_prev, H, cfg) @ direction)
    gamma = 1.0
    for k in range(ARMIJO_TRIALS):
        gamma = ARMIJO_DELTA**k
        trial = wsee_total(p_prev + gamma * direction, H, cfg)
        if trial >= base + ARMIJO_SLOPE_FRACTION * gamma * slope:
            return gamma
    return gamma


def sca(H: np.ndarray, cfg: SystemConfig, pm_schedule_dbw,
        limits: SolverLimits | None = None) -> tuple[np.ndarray, list[ScaTrace]]:
    """Run warm-started SCA over an ascending schedule of power constraints.

    The first constraint starts from full power; every later one reuses
    the previous optimum clipped into the new box.  Returns the (n_pm, L)
    allocations and one trace per constraint.
    """
    limits = limits or SolverLimits()
    pm_dbw = np.asarray(pm_schedule_dbw, dtype=float)
    if pm_dbw.ndim != 1 or pm_dbw.size == 0 or np.any(np.diff(pm_dbw) <= 0):
        raise ValueError("pm schedule must be a nonempty strictly increasing dBW list")
    L = H.shape[0]
    powers = np.empty((pm_dbw.size, L))
    traces = []
    p = None
    for k, dbw in enumerate(pm_dbw):
        pm = 10.0 ** (dbw / 10.0)
        p = np.full(L, pm) if p is None else np.clip(p, 0.0, pm)
        trace = ScaTrace()
        trace.iterates.append(p.copy())
        trace.objective_values.append(wsee_total(p, H, cfg))
        for _ in range(limits.outer):
            coeffs = surrogate_coeffs(p, H, cfg)
            bp, inner_count = _solve_subproblem(coeffs, pm, limits)
            gamma = armijo_step(p, bp, H, cfg)
            candidate = np.clip(p + gamma * (bp - p), 0.0, pm)
            # A failed line search may hand back a descent point; keeping
            # the iterate preserves the monotone objective trace.
            if wsee_total(candidate, H, cfg) < trace.objective_values[-1]:
                candidate = p
                gamma = 0.0
            moved = float(np.max(np.abs(candidate - p)))
            p = candidate
            trace.iterates.append(p.copy())
            trace.objective_values.append(wsee_total(p, H, cfg))
            trace.step_sizes.append(gamma)
            trace.inner_iteration_counts.append(inner_count)
            trace.targets.append(bp)
            if moved < OUTER_TOL:
                break
        powers[k] = p
        traces.append(trace)
    return powers, traces


def tr_sca(H: np.ndarray, cfg: SystemConfig, pm_schedule_dbw) -> tuple[np.ndarray, list[ScaTrace]]:
    """Truncated SCA: the same loop capped at 5 inner and 7 outer iterations."""
    return sca(H, cfg, pm_schedule_dbw, limits=SolverLimits(inner=5, outer=7))
