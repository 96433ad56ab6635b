"""Fanger PMV/PPD thermal comfort indices, aggregation and the reward.

PMV is evaluated with fixed office conditions (air velocity 0.15 m/s,
RH 40%, 0.63 clo, 1.1 met) and mean radiant temperature equal to air
temperature. The clothing-surface temperature is solved by the standard
damped fixed-point iteration, converged to 1e-5 K.
"""

import math
from dataclasses import dataclass
from typing import Sequence

DT_CONTROL_H = 5.0 / 60.0


class ComfortConvergenceError(RuntimeError):
    """Clothing-surface-temperature iteration failed to converge."""


@dataclass(frozen=True)
class ComfortParams:
    air_velocity_m_s: float = 0.15
    relative_humidity_pct: float = 40.0
    clothing_clo: float = 0.63
    metabolic_met: float = 1.1
    mean_radiant_equals_air: bool = True

    def __post_init__(self):
        if min(
            self.air_velocity_m_s,
            self.relative_humidity_pct,
            self.clothing_clo,
            self.metabolic_met,
        ) <= 0:
            raise ValueError("comfort parameters must be strictly positive")


DEFAULT_COMFORT = ComfortParams()

PMV_CLAMP = 4.0
_TCL_TOL = 1e-7  # in (T_cl+273)/100 units, i.e. 1e-5 K on T_cl
_MAX_ITER = 200


@dataclass(frozen=True)
class StepMetrics:
    """Per-control-step evaluation record."""

    ppd_mean_pct: float
    pmv_abs_mean: float
    power_kW: float
    occupants_total: int
    reward: float


def pmv(t_air_C: float, params: ComfortParams = DEFAULT_COMFORT) -> float:
    """Predicted Mean Vote at the given air temperature, clamped to [-4, 4]."""
    if not 10.0 <= t_air_C <= 40.0:
        raise ValueError(f"air temperature {t_air_C} C outside the supported [10, 40] C")
    ta = t_air_C
    tr = ta  # mean radiant temperature approximated by air temperature

    pa = params.relative_humidity_pct * 10.0 * math.exp(16.6536 - 4030.183 / (ta + 235.0))
    icl = 0.155 * params.clothing_clo
    m = params.metabolic_met * 58.15
    mw = m  # no external work

    if icl <= 0.078:
        fcl = 1.0 + 1.29 * icl
    else:
        fcl = 1.05 + 0.645 * icl
    hcf = 12.1 * math.sqrt(params.air_velocity_m_s)

    taa = ta + 273.0
    tra = tr + 273.0
    tcla = taa + (35.5 - ta) / (3.5 * icl + 0.1)

    p1 = icl * fcl
    p2 = p1 * 3.96
    p3 = p1 * 100.0
    p4 = p1 * taa
    p5 = 308.7 - 0.028 * mw + p2 * (tra / 100.0) ** 4

    xn = tcla / 100.0
    xf = tcla / 50.0
    hc = hcf
    n = 0
    while abs(xn - xf) > _TCL_TOL:
        xf = (xf + xn) / 2.0
        hcn = 2.38 * abs(100.0 * xf - taa) ** 0.25
        hc = hcf if hcf > hcn else hcn
        xn = (p5 + p4 * hc - p2 * xf**4) / (100.0 + p3 * hc)
        n += 1
        if n > _MAX_ITER:
            raise ComfortConvergenceError(
                f"clothing temperature iteration did not converge at T_a={ta} C"
            )
    tcl = 100.0 * xn - 273.0

    hl1 = 3.05e-3 * (5733.0 - 6.99 * mw - pa)
    hl2 = 0.42 * (mw - 58.15) if mw > 58.15 else 0.0
    hl3 = 1.7e-5 * m * (5867.0 - pa)
    hl4 = 0.0014 * m * (34.0 - ta)
    hl5 = 3.96 * fcl * (xn**4 - (tra / 100.0) ** 4)
    hl6 = fcl * hc * (tcl - tr)

    ts = 0.303 * math.exp(-0.036 * m) + 0.028
    value = ts * (mw - hl1 - hl2 - hl3 - hl4 - hl5 - hl6)
    return max(-PMV_CLAMP, min(PMV_CLAMP, value))


def ppd(pmv_value: float) -> float:
    """Predicted Percentage of Dissatisfied, percent in [5, 100]."""
    if not math.isfinite(pmv_value):
        raise ValueError("PMV must be finite")
    return 100.0 - 95.0 * math.exp(-0.03353 * pmv_value**4 - 0.2179 * pmv_value**2)


def mean_ppd(zone_ppds: Sequence[float], zone_occupancy: Sequence[int]) -> float:
    """Occupancy-weighted mean PPD across zones; exactly 0 with nobody in."""
    if len(zone_ppds) != len(zone_occupancy):
        raise ValueError("zone PPD and occupancy vectors must have equal length")
    if any(n < 0 for n in zone_occupancy):
        raise ValueError("occupancy counts must be non-negative")
    total = sum(zone_occupancy)
    if total == 0:
        return 0.0
    return sum(n * p for n, p in zip(zone_occupancy, zone_ppds)) / total


def step_reward(
    ppd_mean_pct: float,
    power_kW: float,
    occupants_total: int,
    lambda_P: float = 3.0,
) -> float:
    """Composite reward: -PPD_mean - lambda_P*P when occupied, -lambda_P*P
    otherwise. Larger is better."""
    if lambda_P <= 0:
        raise ValueError("lambda_P must be positive")
    if occupants_total > 0:
        return -ppd_mean_pct - lambda_P * power_kW
    return -lambda_P * power_kW


def episode_energy(power_series_kW: Sequence[float], dt_h: float = DT_CONTROL_H) -> float:
    """Cumulative electrical energy sum(P_t * dt), kWh."""
    return float(sum(power_series_kW) * dt_h)
