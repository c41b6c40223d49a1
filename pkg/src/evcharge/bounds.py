"""Constants of the drift-plus-penalty analysis and chance-constraint headroom."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import FeederTopology, StationFleet


class ParameterError(ValueError):
    pass


@dataclass(frozen=True)
class EnvBounds:
    demand_max: float     # E_max
    renewable_max: float  # U_max
    price_max: float      # C_max
    price_min: float = 0.0


@dataclass(frozen=True)
class LyapunovConstants:
    alpha_max: float
    beta_max: float
    delta_max: float
    t_max: float
    v_max: float
    v: float
    lambda_max: float

    def cost_gap(self) -> float:
        """Worst-case time-average cost excess over the optimum."""
        return self.delta_max / self.v


def _v_numerator(fleet: StationFleet, topo: FeederTopology, env: EnvBounds,
                 lambda_max: float) -> float:
    j_max = fleet.outlet_counts.max()
    r_max = fleet.rate_max.max()
    return (fleet.capacity.min()
            - fleet.eta_plus.max() * env.renewable_max
            - fleet.eta_minus.max() * j_max * r_max
            - topo.node_count * lambda_max)


def v_max(fleet: StationFleet, topo: FeederTopology, env: EnvBounds,
          lambda_max: float) -> float:
    """Largest V for which the battery bounds are guaranteed.

    Raises ParameterError if the batteries are too small to admit any V > 0.
    """
    num = _v_numerator(fleet, topo, env, lambda_max)
    if num <= 0:
        raise ParameterError(
            f"battery capacities too small: V_max numerator is {num:.6g} "
            f"(min capacity {fleet.capacity.min():g}, lambda_max {lambda_max:g})")
    return num / env.price_max


def compute_constants(fleet: StationFleet, topo: FeederTopology, env: EnvBounds,
                      lambda_max: float = 1.0, v: float | None = None) -> LyapunovConstants:
    """All constants for a given fleet and environment.

    ``v`` defaults to ``v_max``; it is rejected unless ``0 < v <= v_max``.
    """
    if env.demand_max <= 0 or env.renewable_max < 0 or env.price_max <= 0:
        raise ParameterError("environment bounds must be positive")
    if lambda_max < 0:
        raise ParameterError("lambda_max must be nonnegative")
    r_max = fleet.rate_max.max()
    alpha = 0.5 * r_max ** 2 + 0.5 * env.demand_max ** 2
    station_peak = (fleet.outlet_counts * fleet.rate_max).max()
    beta = 0.5 * max((fleet.eta_plus.max() * env.renewable_max) ** 2, station_peak ** 2)
    delta = float(fleet.outlet_counts.sum()) * alpha + len(fleet) * beta
    vm = v_max(fleet, topo, env, lambda_max)
    if v is None:
        v = vm
    if not 0 < v <= vm * (1 + 1e-12):
        raise ParameterError(f"V must satisfy 0 < V <= V_max = {vm:.6g}, got {v!r}")
    t_max = v * env.price_max + topo.node_count * lambda_max
    return LyapunovConstants(alpha, beta, delta, t_max, vm, v, lambda_max)


def node_headroom(topo: FeederTopology, epsilon: float, l: int | None = None):
    """Deterministic grid-draw budget of a node under the overload chance constraint.

    Chebyshev's inequality on a symmetric load turns
    ``Pr[draws + N_l > P_l] <= epsilon`` into
    ``draws <= P_l - E[N_l] - sigma_l / sqrt(2 epsilon)``.
    With ``l=None`` the headroom of every node is returned as an array.
    """
    if not 0 < epsilon < 1:
        raise ParameterError("epsilon must lie in (0, 1)")
    h = topo.capacities - topo.load_mean - topo.load_std / math.sqrt(2 * epsilon)
    return h if l is None else float(h[l])


def lyapunov(queues: np.ndarray, shifted: np.ndarray) -> float:
    return 0.5 * float(np.dot(queues, queues)) + 0.5 * float(np.dot(shifted, shifted))
