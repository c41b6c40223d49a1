"""Per-station decentralised laws: outlet charging rate and renewable battery input."""

from __future__ import annotations

from .model import StationConfig


def outlet_rate(q: float, incoming: float, h: float, cfg: StationConfig) -> float:
    """Bang-bang charging rate of one outlet.

    The per-outlet objective is linear in the rate with coefficient
    ``(q if q > 0 else incoming) + h * eta_minus``, so the optimum is the
    full rate when the coefficient is positive and zero otherwise. An outlet
    with nothing to serve gets rate zero. Delivery clipping is applied by the
    caller via ``model.delivered_energy``.
    """
    demand = q if q > 0 else incoming
    if demand <= 0:
        return 0.0
    coef = demand + h * cfg.discharge_efficiency
    return cfg.outlet_rate_max if coef > 0 else 0.0


def renewable_input(h: float, u: float, outlet_sum: float, cfg: StationConfig) -> float:
    """Renewable energy put into the battery: all usable surplus when h <= 0."""
    if h > 0:
        return 0.0
    return min(cfg.battery_charge_rate_max, max(u - outlet_sum, 0.0))
