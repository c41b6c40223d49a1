"""Per-slot Lagrangian dual loop deciding grid draws under node headroom caps.

Each station minimises ``D_i * (H_i eta_i + V c + sum_{l upstream} lambda_l)``
over ``[0, cap_i]``; nodes update their multipliers by projected gradient on
the headroom constraint. After the loop the best iterate is repaired so that
every node respects its headroom exactly, then polished by single-station
flips.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DualConfig:
    step: float = 0.01
    max_iters: int = 200
    tol: float = 1e-6
    lambda_max: float = 1.0

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError("step must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.lambda_max < 0:
            raise ValueError("lambda_max must be nonnegative")


@dataclass
class DualResult:
    draws: np.ndarray
    multipliers: np.ndarray
    iterations: int
    converged: bool
    dual_best: float         # best dual value seen
    primal_value: float      # objective of the returned (repaired) draws
    dual_history: np.ndarray

    @property
    def gap_estimate(self) -> float:
        return self.primal_value - self.dual_best


def station_subproblem(h: float, price: float, v: float, lambda_sum: float,
                       demand_gap: float, cfg) -> float:
    """Grid draw of one station: zero if its linear coefficient is positive.

    The coefficient is ``h * eta_minus + V * price + lambda_sum``; an exact
    zero also yields no draw.
    """
    upper = min(max(demand_gap, 0.0), cfg.station_grid_max)
    if upper <= 0:
        return 0.0
    coef = h * cfg.discharge_efficiency + v * price + lambda_sum
    return 0.0 if coef >= 0 else upper


def update_multiplier(lam, step: float, headroom, draw_sum):
    """Projected gradient step ``[lambda - step * (headroom - draws)]^+``."""
    out = np.maximum(np.asarray(lam, float) - step * (np.asarray(headroom, float)
                                                      - np.asarray(draw_sum, float)), 0.0)
    return float(out) if out.ndim == 0 else out


def repair_draws(draws: np.ndarray, incidence: np.ndarray, headroom: np.ndarray) -> np.ndarray:
    """Scale draws down proportionally at every node that exceeds its headroom.

    A station is scaled by the smallest factor among its upstream nodes, so
    one pass makes every node feasible. Negative headroom forbids any draw.
    """
    draws = np.asarray(draws, float)
    load = incidence @ draws
    budget = np.maximum(headroom, 0.0)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        node_scale = np.where(load > budget, budget / np.where(load > 0, load, 1.0), 1.0)
    scale = np.ones_like(draws)
    for l in np.flatnonzero(node_scale < 1.0):
        members = incidence[l] == 1
        scale[members] = np.minimum(scale[members], node_scale[l])
    return draws * scale


def improve_pattern(on: np.ndarray, base_coef: np.ndarray, upper: np.ndarray,
                    incidence: np.ndarray, headroom: np.ndarray):
    """Flip-and-swap hill climb over bang-bang patterns, scored after repair.

    Only stations with a negative coefficient are worth switching on. Returns
    ``(pattern, repaired draws, value)``.
    """
    on = on.copy()
    candidates = np.flatnonzero((base_coef < 0) & (upper > 0))

    def score(pattern):
        d = repair_draws(np.where(pattern, upper, 0.0), incidence, headroom)
        return float(base_coef @ d), d

    best, draws = score(on)
    improved = True
    while improved:
        improved = False
        for i in candidates:
            on[i] = not on[i]
            val, d = score(on)
            if val < best - 1e-12:
                best, draws, improved = val, d, True
            else:
                on[i] = not on[i]
        if improved:
            continue
        # single flips stalled: try exchanging one active station for an idle one
        for i in candidates[on[candidates]]:
            for k in candidates[~on[candidates]]:
                on[i], on[k] = False, True
                val, d = score(on)
                if val < best - 1e-12:
                    best, draws, improved = val, d, True
                    break
                on[i], on[k] = True, False
            if improved:
                break
    return on, draws, best


def solve_grid_draws(base_coef: np.ndarray, upper: np.ndarray, incidence: np.ndarray,
                     headroom: np.ndarray, cfg: DualConfig,
                     lambda_init: np.ndarray | None = None) -> DualResult:
    """Run the dual loop for one slot.

    Parameters
    ----------
    base_coef : ndarray
        Per-station ``H_i * eta_minus + V * c``.
    upper : ndarray
        Per-station draw bound ``min((sum_j r_ij - U_i)^+, station grid cap)``.
    incidence : ndarray
        ``L x I`` node/station incidence.
    headroom : ndarray
        Per-node draw budget from the chance constraint.
    """
    base_coef = np.asarray(base_coef, float)
    upper = np.maximum(np.asarray(upper, float), 0.0)
    x = np.asarray(incidence, float)
    # a negative budget forbids any draw; clipping keeps the dual bounded
    headroom = np.maximum(np.asarray(headroom, float), 0.0)
    lam = (np.full(x.shape[0], cfg.lambda_max) if lambda_init is None
           else np.array(lambda_init, float))

    def primal(d):
        return float(base_coef @ d)

    if not (upper > 0).any():
        # nothing to decide; one multiplier step for the record
        lam = update_multiplier(lam, cfg.step, headroom, np.zeros_like(headroom))
        zeros = np.zeros_like(upper)
        dual = float(-(lam @ headroom))
        return DualResult(zeros, lam, 1, True, dual, 0.0, np.array([dual]))

    history = []
    best_dual = -np.inf
    best_primal, best_on = np.inf, None
    converged = False
    n = 0
    while n < cfg.max_iters:
        coef = base_coef + x.T @ lam
        draws = np.where(coef < 0, upper, 0.0)
        dual = float(coef @ draws - lam @ headroom)
        history.append(dual)
        best_dual = max(best_dual, dual)
        fixed = repair_draws(draws, x, headroom)
        p = primal(fixed)
        if p < best_primal:
            best_primal, best_on = p, draws > 0
        n += 1
        if n > 1 and abs(history[-1] - history[-2]) < cfg.tol:
            converged = True
            break
        lam = update_multiplier(lam, cfg.step, headroom, x @ draws)
    if not converged:
        log.debug("dual loop hit max_iters=%d without converging", cfg.max_iters)
    _, best_draws, best_primal = improve_pattern(best_on, base_coef, upper, x, headroom)
    return DualResult(best_draws, lam, n, converged, best_dual, best_primal,
                      np.asarray(history))
