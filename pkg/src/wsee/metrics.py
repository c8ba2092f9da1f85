"""Rate, per-link energy efficiency, the weighted sum objective, and its gradient.

All rates are in log base 2 and carry no bandwidth factor; the objective
therefore has units of spectral efficiency per Watt, matching the
normalization used by the solvers throughout the package.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .netgen import SystemConfig

LN2 = float(np.log(2.0))


@dataclass
class WseeValue:
    """Objective total together with the per-user energy efficiencies."""

    total: float
    per_user: np.ndarray


def _interference(p: np.ndarray, H: np.ndarray):
    """Diagonal gains and interference-plus-noise terms 1 + sum_j H_ij p_j."""
    hd = np.diag(H)
    off = H - np.diag(hd)
    return hd, 1.0 + off @ p


def rates(p: np.ndarray, H: np.ndarray) -> np.ndarray:
    """All L achievable rates at allocation p."""
    p = np.asarray(p, dtype=float)
    hd, inr = _interference(p, H)
    return np.log1p(hd * p / inr) / LN2


def rate(i: int, p: np.ndarray, H: np.ndarray) -> float:
    """Rate of link i: log2(1 + H_ii p_i / (1 + sum_{j!=i} H_ij p_j))."""
    return float(rates(p, H)[i])


def ee(i: int, p: np.ndarray, H: np.ndarray, cfg: SystemConfig) -> float:
    """Energy efficiency of link i, rate over consumed power."""
    p = np.asarray(p, dtype=float)
    return rate(i, p, H) / (cfg.amp_inefficiency * p[i] + cfg.static_power)


def wsee(p: np.ndarray, H: np.ndarray, cfg: SystemConfig) -> WseeValue:
    """Weighted sum energy efficiency and its per-user terms."""
    p = np.asarray(p, dtype=float)
    r = rates(p, H)
    per_user = r / (cfg.amp_inefficiency * p + cfg.static_power)
    return WseeValue(total=float(cfg.weights @ per_user), per_user=per_user)


def wsee_total(p: np.ndarray, H: np.ndarray, cfg: SystemConfig) -> float:
    """Scalar objective value; fast path for solvers and line searches."""
    p = np.asarray(p, dtype=float)
    hd, inr = _interference(p, H)
    r = np.log1p(hd * p / inr) / LN2
    return float(cfg.weights @ (r / (cfg.amp_inefficiency * p + cfg.static_power)))


def wsee_grad(p: np.ndarray, H: np.ndarray, cfg: SystemConfig) -> np.ndarray:
    """Exact gradient of the objective with respect to every transmit power.

    Splits into the own-rate gain, the interference caused at other
    users, and the amplifier term -w_i mu R_i / (mu p_i + Pc)^2.
    """
    p = np.asarray(p, dtype=float)
    mu = cfg.amp_inefficiency
    pc = cfg.static_power
    w = cfg.weights
    hd = np.diag(H)
    off = H - np.diag(hd)
    inr = 1.0 + off @ p
    tot = inr + hd * p
    r = np.log1p(hd * p / inr) / LN2
    denom = mu * p + pc
    # G[i, k] = d R_i / d p_k
    G = -((hd * p / (inr * tot))[:, None] * off) / LN2
    G[np.diag_indices_from(G)] = hd / (tot * LN2)
    return G.T @ (w / denom) - w * mu * r / denom**2
