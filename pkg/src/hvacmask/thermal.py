"""Per-zone heat gains and lumped-capacitance air temperature integration.

All functions are pure; the environment module drives them with 60 s
explicit-Euler sub-steps inside each 5-minute control interval (zone air
time constants are tens of minutes, so Euler at 60 s is stable).
"""

import math
from dataclasses import dataclass, field

RHO_AIR = 1.2          # kg/m^3
CP_AIR = 1005.0        # J/(kg K)

# Control interval and the fixed Euler sub-step used to integrate it.
DT_CONTROL_S = 300.0
DT_SUBSTEP_S = 60.0
N_SUBSTEPS = int(DT_CONTROL_S / DT_SUBSTEP_S)


class ScenarioError(ValueError):
    """Inconsistent or incomplete scenario configuration."""


@dataclass(frozen=True)
class WallSpec:
    """One external wall. The per-wall flux (the OTTV value, W/m^2) is
    u_value*(T_out - T_in) + solar_gain, so envelope load tracks outdoor
    temperature instead of being a scenario constant."""

    u_value_W_m2K: float
    solar_gain_W_m2: float
    area_m2: float

    def __post_init__(self):
        if self.u_value_W_m2K < 0 or self.solar_gain_W_m2 < 0 or self.area_m2 < 0:
            raise ScenarioError("wall U-value, solar gain and area must be non-negative")

    def ottv_W_m2(self, t_out_C: float, t_in_C: float) -> float:
        return self.u_value_W_m2K * (t_out_C - t_in_C) + self.solar_gain_W_m2


@dataclass(frozen=True)
class ZoneParams:
    zone_id: int
    air_volume_m3: float
    walls: tuple[WallSpec, ...] = ()
    adjacency: tuple[tuple[int, float], ...] = ()  # (neighbor zone_id, eta W/K)
    beta: float = 1.0
    q_p_W: float = 70.0   # sensible emission of an average adult at 24 C
    q_d_W: float = 10.0   # additional heat release correction

    def __post_init__(self):
        if self.air_volume_m3 <= 0:
            raise ScenarioError(f"zone {self.zone_id}: air volume must be positive")
        if not 0.8 <= self.beta <= 1.2:
            raise ScenarioError(f"zone {self.zone_id}: beta {self.beta} outside [0.8, 1.2]")
        if self.q_p_W <= 0 or self.q_d_W < 0:
            raise ScenarioError(f"zone {self.zone_id}: bad occupant heat constants")
        for nid, eta in self.adjacency:
            if nid == self.zone_id:
                raise ScenarioError(f"zone {self.zone_id}: self-adjacency")
            if eta < 0:
                raise ScenarioError(f"zone {self.zone_id}: negative adjacency conductance")


@dataclass(frozen=True)
class ZoneThermalInput:
    """Everything needed to evaluate one zone's heat balance at an instant."""

    t_in_C: float
    occupants: int
    vdot_supply_m3_s: float = 0.0
    t_supply_C: float = 0.0
    rho_air_kg_m3: float = RHO_AIR
    cp_air_J_kgK: float = CP_AIR
    neighbor_temps_C: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.occupants < 0:
            raise ScenarioError("occupant count must be non-negative")
        if self.vdot_supply_m3_s < 0:
            raise ScenarioError("supply airflow must be non-negative")
        if self.rho_air_kg_m3 <= 0 or self.cp_air_J_kgK <= 0:
            raise ScenarioError("air density and heat capacity must be positive")


def occupant_heat(t_in_C: float, occupants: int, params: ZoneParams) -> float:
    """Occupant sensible heat: ((37 - T_in)/(37 - 24)*q_p + q_d)*n_p, watts."""
    return ((37.0 - t_in_C) / 13.0 * params.q_p_W + params.q_d_W) * occupants


def interzone_heat(t_in_C: float, neighbor_temps_C: dict, params: ZoneParams) -> float:
    """Inter-zone exchange sum((T_j - T_i)*eta_j) over the zone's adjacency."""
    total = 0.0
    for nid, eta in params.adjacency:
        if nid not in neighbor_temps_C:
            raise ScenarioError(
                f"zone {params.zone_id}: no temperature for adjacent zone {nid}"
            )
        total += (neighbor_temps_C[nid] - t_in_C) * eta
    return total


def envelope_load(params: ZoneParams, t_out_C: float, t_in_C: float) -> float:
    """Envelope gain sum(OTTV_w * A_w) with per-wall OTTV evaluated at the
    current outdoor/indoor temperatures."""
    return sum(w.ottv_W_m2(t_out_C, t_in_C) * w.area_m2 for w in params.walls)


def supply_capacity(inp: ZoneThermalInput) -> float:
    """Sensible capacity of the supply air, rho*cp*Vdot*(T_sup - T_in).
    Negative when cooling."""
    return (
        inp.rho_air_kg_m3
        * inp.cp_air_J_kgK
        * inp.vdot_supply_m3_s
        * (inp.t_supply_C - inp.t_in_C)
    )


def zone_temperature_step(
    t_in_C: float,
    q_load_W: float,
    q_sup_W: float,
    params: ZoneParams,
    dt_s: float,
    rho_air_kg_m3: float = RHO_AIR,
    cp_air_J_kgK: float = CP_AIR,
) -> float:
    """One explicit-Euler update of the lumped zone air temperature."""
    if dt_s <= 0:
        raise ValueError("dt_s must be positive")
    if not (math.isfinite(t_in_C) and math.isfinite(q_load_W) and math.isfinite(q_sup_W)):
        raise ValueError("non-finite thermal inputs")
    cap = rho_air_kg_m3 * cp_air_J_kgK * params.air_volume_m3
    t_next = t_in_C + dt_s * (q_load_W + q_sup_W) / cap * params.beta
    if not math.isfinite(t_next):
        raise ValueError("temperature update produced a non-finite value")
    return t_next
