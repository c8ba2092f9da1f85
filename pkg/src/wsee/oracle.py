"""Brute-force and one-dimensional reference solvers.

These are deliberately independent of the SCA machinery: a dense grid
search over the feasible box, a golden section search for the
single-user energy efficiency, and a bisection on the derivative of the
separable concave surrogate.  They referee the actual solvers in tests
and stand in for a global solver at tiny problem sizes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metrics import LN2
from .netgen import SystemConfig

_GRID_CHUNK = 1 << 20


@dataclass
class GridSpec:
    """Uniform grid over [0, Pm] per coordinate, endpoints included."""

    points_per_dim: int = 401
    budget: int = 100_000_000

    def __post_init__(self):
        if self.points_per_dim < 2:
            raise ValueError("points_per_dim must be at least 2")


def grid_search_wsee(H: np.ndarray, pm: float, cfg: SystemConfig,
                     grid: GridSpec) -> tuple[np.ndarray, float]:
    """Exhaustive objective maximization over the grid.

    Grid points are scanned in lexicographic order of the power vector
    and only strict improvements are kept, so ties resolve toward the
    lexicographically smallest maximizer.
    """
    L = H.shape[0]
    n = grid.points_per_dim
    total = n**L
    if total > grid.budget:
        raise ValueError(
            f"grid search needs {total:.3g} evaluations, budget is {grid.budget:.3g}")
    axis = np.linspace(0.0, pm, n)
    hd = np.diag(H)
    off = H - np.diag(hd)
    mu = cfg.amp_inefficiency
    pc = cfg.static_power
    w = cfg.weights
    shape = (n,) * L
    best_value = -np.inf
    best_p = None
    for start in range(0, total, _GRID_CHUNK):
        flat = np.arange(start, min(start + _GRID_CHUNK, total))
        powers = axis[np.stack(np.unravel_index(flat, shape), axis=1)]  # (chunk, L)
        inr = 1.0 + powers @ off.T
        r = np.log1p(hd * powers / inr) / LN2
        values = (r / (mu * powers + pc)) @ w
        k = int(np.argmax(values))  # first maximizer inside the chunk
        if values[k] > best_value:
            best_value = float(values[k])
            best_p = powers[k].copy()
    return best_p, best_value


def golden_section_ee(alpha: float, cfg: SystemConfig, pm: float) -> tuple[float, float]:
    """Maximize the single-user energy efficiency log2(1+alpha p)/(mu p + Pc)."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    mu = cfg.amp_inefficiency
    pc = cfg.static_power

    def value(p):
        return np.log1p(alpha * p) / LN2 / (mu * p + pc)

    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    lo, hi = 0.0, float(pm)
    a = hi - invphi * (hi - lo)
    b = lo + invphi * (hi - lo)
    fa, fb = value(a), value(b)
    while hi - lo > 1e-10:
        if fa >= fb:
            hi, b, fb = b, a, fa
            a = hi - invphi * (hi - lo)
            fa = value(a)
        else:
            lo, a, fa = a, b, fb
            b = lo + invphi * (hi - lo)
            fb = value(b)
    p = 0.5 * (lo + hi)
    return float(p), float(value(p))


def bisect_coordinate(c1: float, c2: float, gain: float, pm: float,
                      tol: float = 1e-12) -> float:
    """Maximize one separable surrogate term c1*log2(1+gain*p) + c2*p on [0, pm].

    Works on the derivative, which is strictly decreasing in p, so the
    maximizer is either a boundary point or the unique interior root.
    """

    def deriv(p):
        return c1 * gain / ((1.0 + gain * p) * LN2) + c2

    if deriv(0.0) <= 0.0:
        return 0.0
    if deriv(pm) >= 0.0:
        return float(pm)
    lo, hi = 0.0, float(pm)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        d = deriv(mid)
        if d > 0.0:
            lo = mid
        elif d < 0.0:
            hi = mid
        else:
            return mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)
