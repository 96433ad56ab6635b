"""Sequential decision environment for the 7-zone FCU control problem.

One control step is 5 minutes; an episode covers the 09:00-19:00 working
day, i.e. 120 steps. The env wires the pump rule, the hydraulic solve, the
coil models and the zone integration together and reports per-step comfort,
power and reward through ``info``.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .comfort import ComfortParams, StepMetrics, mean_ppd, pmv, ppd, step_reward
from .equipment import FcuParams, PumpParams, fcu_airflow, fcu_fan_power, pump_frequency_for_active_fcus, pump_power
from .hydraulics import (
    CP_WATER,
    RHO_WATER,
    NetworkParams,
    NetworkTopology,
    build_network,
    propagate_temperatures,
    solve_flows,
)
from .thermal import DT_SUBSTEP_S, N_SUBSTEPS, ScenarioError, WallSpec, ZoneParams

N_ZONES = kernels.N_ZONES
N_LEVELS = kernels.N_LEVELS
N_ACTIONS = kernels.N_ACTIONS
EPISODE_MINUTES = 600
DT_CONTROL_MIN = 5
N_FEATURES = 24


# ---------------------------------------------------------------------------
# Joint action encoding: 7 base-4 digits, zone 1 least significant.
# ---------------------------------------------------------------------------

def encode_levels(levels) -> int:
    if len(levels) != N_ZONES:
        raise ValueError(f"need {N_ZONES} levels")
    idx = 0
    for j, lvl in enumerate(levels):
        lvl = int(lvl)
        if not 0 <= lvl < N_LEVELS:
            raise ValueError(f"level {lvl} out of range")
        idx += lvl * (N_LEVELS**j)
    return idx


def decode_index(flat_index: int) -> tuple[int, ...]:
    if not 0 <= flat_index < N_ACTIONS:
        raise ValueError(f"action index {flat_index} out of [0, {N_ACTIONS})")
    return tuple(int(d) for d in kernels.DIGITS[flat_index])


@dataclass(frozen=True)
class JointAction:
    levels: tuple[int, ...]
    flat_index: int

    @classmethod
    def from_levels(cls, levels) -> "JointAction":
        levels = tuple(int(v) for v in levels)
        return cls(levels=levels, flat_index=encode_levels(levels))

    @classmethod
    def from_index(cls, flat_index: int) -> "JointAction":
        return cls(levels=decode_index(flat_index), flat_index=int(flat_index))

    @classmethod
    def all_off(cls) -> "JointAction":
        return cls.from_index(0)

    def __post_init__(self):
        if encode_levels(self.levels) != self.flat_index:
            raise ValueError("levels and flat_index disagree")


@dataclass(frozen=True)
class BuildingState:
    zone_temps_C: np.ndarray          # (7,)
    occupancy: np.ndarray             # (7,) int
    outdoor_temp_C: float
    prev_action: JointAction
    clock_min: int                    # minutes since 09:00, 5-min multiples
    supply_water_temp_C: float = 7.0
    return_water_temp_C: float = 7.0
    pump_freq_Hz: float = 0.0


# ---------------------------------------------------------------------------
# Scenario: typed parameter bundle assembled from the config dict.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OutdoorProfile:
    base_C: float = 28.0
    amplitude_C: float = 4.0
    peak_hour: float = 15.0

    def temp_at(self, clock_min: float, start_hour: float = 9.0) -> float:
        hour = start_hour + clock_min / 60.0
        return self.base_C + self.amplitude_C * math.cos(
            2.0 * math.pi * (hour - self.peak_hour) / 24.0
        )


@dataclass(frozen=True)
class OccupancyParams:
    arrival_mean_min: float = 30.0
    arrival_std_min: float = 15.0
    lunch_leave_mean_min: float = 180.0
    lunch_leave_std_min: float = 12.0
    lunch_return_mean_min: float = 300.0
    lunch_return_std_min: float = 12.0
    departure_mean_min: float = 570.0
    departure_std_min: float = 20.0
    lunch_stay_prob: float = 0.06
    absent_prob: float = 0.03


@dataclass(frozen=True)
class Scenario:
    zones: tuple[ZoneParams, ...]
    occupant_slots: tuple[int, ...]
    fcu: FcuParams
    pump: PumpParams
    network: NetworkParams
    comfort: ComfortParams
    lambda_P: float
    outdoor: OutdoorProfile
    occupancy: OccupancyParams
    supply_water_temp_C: float = 7.0
    episode_steps: int = 120
    start_hour: float = 9.0
    rho_air_kg_m3: float = 1.2
    cp_air_J_kgK: float = 1005.0
    initial_temp_low_C: float = 26.0
    initial_temp_high_C: float = 28.0
    topology: NetworkTopology = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.zones) != N_ZONES:
            raise ScenarioError(f"scenario needs exactly {N_ZONES} zones")
        ids = [z.zone_id for z in self.zones]
        if sorted(ids) != list(range(1, N_ZONES + 1)):
            raise ScenarioError("zone ids must be 1..7")
        eta = {}
        for z in self.zones:
            for nid, e in z.adjacency:
                eta[(z.zone_id, nid)] = e
        for (i, j), e in eta.items():
            if eta.get((j, i)) != e:
                raise ScenarioError(
                    f"adjacency must be symmetric: zone {i}->{j} has no equal reverse entry"
                )
        object.__setattr__(self, "topology", build_network(ids, self.network))

    @classmethod
    def from_config(cls, cfg: dict) -> "Scenario":
        zones = []
        slots = []
        for zc in cfg["zones"]:
            walls = tuple(
                WallSpec(w["u_W_m2K"], w["solar_W_m2"], w["area_m2"]) for w in zc["walls"]
            )
            adjacency = tuple((a["zone"], float(a["eta_W_K"])) for a in zc.get("adjacency", []))
            zones.append(
                ZoneParams(
                    zone_id=int(zc["id"]),
                    air_volume_m3=float(zc["volume_m3"]),
                    walls=walls,
                    adjacency=adjacency,
                    beta=float(zc.get("beta", 1.0)),
                    q_p_W=float(zc.get("q_p_W", 70.0)),
                    q_d_W=float(zc.get("q_d_W", 10.0)),
                )
            )
            slots.append(int(zc["occupant_slots"]))
        zones.sort(key=lambda z: z.zone_id)
        sc = cfg["scenario"]
        return cls(
            zones=tuple(zones),
            occupant_slots=tuple(slots),
            fcu=FcuParams(
                rated_airflow_m3_s=cfg["fcu"]["rated_airflow_m3_s"],
                rated_fan_power_W=cfg["fcu"]["rated_fan_power_W"],
                mode_airflow_fractions=tuple(cfg["fcu"]["mode_airflow_fractions"]),
                rated_water_flow_m3_s=cfg["fcu"]["rated_water_flow_m3_s"],
                coil_effectiveness_by_mode=tuple(cfg["fcu"]["coil_effectiveness_by_mode"]),
            ),
            pump=PumpParams(**cfg["pump"]),
            network=NetworkParams(**cfg["network"]),
            comfort=ComfortParams(**cfg["comfort"]),
            lambda_P=float(cfg["reward"]["lambda_P"]),
            outdoor=OutdoorProfile(**cfg["outdoor"]),
            occupancy=OccupancyParams(**cfg["occupancy"]),
            supply_water_temp_C=float(sc["supply_water_temp_C"]),
            episode_steps=int(sc["episode_steps"]),
            start_hour=float(sc["start_hour"]),
            rho_air_kg_m3=float(sc["rho_air_kg_m3"]),
            cp_air_J_kgK=float(sc["cp_air_J_kgK"]),
            initial_temp_low_C=float(sc["initial_temp_low_C"]),
            initial_temp_high_C=float(sc["initial_temp_high_C"]),
        )

    # Precomputed per-zone arrays for the integration kernel.
    def thermal_arrays(self):
        ua = np.array([sum(w.u_value_W_m2K * w.area_m2 for w in z.walls) for z in self.zones])
        solar = np.array([sum(w.solar_gain_W_m2 * w.area_m2 for w in z.walls) for z in self.zones])
        adj = np.zeros((N_ZONES, N_ZONES))
        for z in self.zones:
            for nid, eta in z.adjacency:
                adj[z.zone_id - 1, nid - 1] = eta
        q_p = np.array([z.q_p_W for z in self.zones])
        q_d = np.array([z.q_d_W for z in self.zones])
        beta = np.array([z.beta for z in self.zones])
        caps = np.array(
            [self.rho_air_kg_m3 * self.cp_air_J_kgK * z.air_volume_m3 for z in self.zones]
        )
        return ua, solar, adj, adj.sum(axis=1), q_p, q_d, beta, caps


def occupancy_schedule(scenario: Scenario, seed) -> np.ndarray:
    """Seed-deterministic per-step occupancy, shape (episode_steps+1, 7).

    Each zone has a fixed number of occupant slots; a slot arrives in the
    morning, usually leaves over 12:00-14:00, returns for the afternoon and
    departs before 19:00. The draw count per slot is fixed, so the schedule
    is a pure function of (scenario, seed).
    """
    p = scenario.occupancy
    rng = np.random.default_rng(seed)
    n_steps = scenario.episode_steps
    out = np.zeros((n_steps + 1, N_ZONES), dtype=np.int64)
    for z in range(N_ZONES):
        for _slot in range(scenario.occupant_slots[z]):
            absent = rng.random() < p.absent_prob
            arrival = max(0.0, rng.normal(p.arrival_mean_min, p.arrival_std_min))
            leave = rng.normal(p.lunch_leave_mean_min, p.lunch_leave_std_min)
            stays = rng.random() < p.lunch_stay_prob
            ret = rng.normal(p.lunch_return_mean_min, p.lunch_return_std_min)
            depart = min(float(EPISODE_MINUTES), rng.normal(p.departure_mean_min, p.departure_std_min))
            if absent:
                continue
            for t in range(n_steps + 1):
                minute = t * DT_CONTROL_MIN
                if not arrival <= minute < depart:
                    continue
                if not stays and leave <= minute < ret:
                    continue
                out[t, z] += 1
    return out


# ---------------------------------------------------------------------------
# Learner-facing features: 24 dims, min-max normalized.
# ---------------------------------------------------------------------------

def raw_features(state: BuildingState) -> np.ndarray:
    """[7 zone temps, 7 occupancies, T_out, 7 prev levels / 3, sin/cos clock]."""
    angle = 2.0 * math.pi * (9.0 * 60.0 + state.clock_min) / (24.0 * 60.0)
    parts = np.empty(N_FEATURES)
    parts[0:7] = state.zone_temps_C
    parts[7:14] = state.occupancy
    parts[14] = state.outdoor_temp_C
    parts[15:22] = np.asarray(state.prev_action.levels) / 3.0
    parts[22] = math.sin(angle)
    parts[23] = math.cos(angle)
    return parts


@dataclass(frozen=True)
class FeatureScaler:
    lo: np.ndarray
    hi: np.ndarray

    def transform(self, raw: np.ndarray) -> np.ndarray:
        span = self.hi - self.lo
        safe = np.where(span > 1e-12, span, 1.0)
        return (raw - self.lo) / safe

    @classmethod
    def from_bounds(cls, scenario: Scenario) -> "FeatureScaler":
        lo = np.empty(N_FEATURES)
        hi = np.empty(N_FEATURES)
        lo[0:7], hi[0:7] = 10.0, 40.0
        lo[7:14], hi[7:14] = 0.0, max(8.0, max(scenario.occupant_slots) * 2.0)
        lo[14] = scenario.outdoor.base_C - scenario.outdoor.amplitude_C - 2.0
        hi[14] = scenario.outdoor.base_C + scenario.outdoor.amplitude_C + 2.0
        lo[15:22], hi[15:22] = 0.0, 1.0
        lo[22:24], hi[22:24] = -1.0, 1.0
        return cls(lo=lo, hi=hi)

    @classmethod
    def from_feature_matrix(cls, raw: np.ndarray) -> "FeatureScaler":
        return cls(lo=raw.min(axis=0), hi=raw.max(axis=0))


# ---------------------------------------------------------------------------
# The environment.
# ---------------------------------------------------------------------------

class EpisodeFinished(RuntimeError):
    pass


class BuildingEnv:
    """Single-threaded simulator instance; independent instances can run in
    parallel. reset(seed) fully determines the episode."""

    def __init__(self, scenario: Scenario, scaler: FeatureScaler | None = None):
        self.scenario = scenario
        self.scaler = scaler or FeatureScaler.from_bounds(scenario)
        self.topology = scenario.topology
        self._incidence = self.topology.incidence()
        (
            self._ua,
            self._solar,
            self._adj,
            self._adj_rowsum,
            self._q_p,
            self._q_d,
            self._beta,
            self._caps,
        ) = scenario.thermal_arrays()
        self._coil_branch_idx = np.array(
            [self.topology.branch_index(f"coil_{z.zone_id}") for z in scenario.zones]
        )
        self._schedule = None
        self._state: BuildingState | None = None
        self._t = 0

    @property
    def state(self) -> BuildingState:
        if self._state is None:
            raise RuntimeError("call reset() first")
        return self._state

    def features(self, state: BuildingState | None = None) -> np.ndarray:
        return self.scaler.transform(raw_features(state or self.state))

    def reset(self, seed=None) -> BuildingState:
        rng = np.random.default_rng(seed)
        sc = self.scenario
        temps = rng.uniform(sc.initial_temp_low_C, sc.initial_temp_high_C, size=N_ZONES)
        self._schedule = occupancy_schedule(sc, rng)
        self._t = 0
        self._state = BuildingState(
            zone_temps_C=temps,
            occupancy=self._schedule[0].copy(),
            outdoor_temp_C=sc.outdoor.temp_at(0.0, sc.start_hour),
            prev_action=JointAction.all_off(),
            clock_min=0,
            supply_water_temp_C=sc.supply_water_temp_C,
            return_water_temp_C=sc.supply_water_temp_C,
            pump_freq_Hz=0.0,
        )
        return self._state

    def step(self, action) -> tuple[BuildingState, float, bool, dict]:
        if self._state is None:
            raise RuntimeError("call reset() first")
        if self._t >= self.scenario.episode_steps:
            raise EpisodeFinished("episode finished; call reset()")
        if isinstance(action, (int, np.integer)):
            action = JointAction.from_index(int(action))
        sc = self.scenario
        state = self._state
        levels = np.asarray(action.levels, dtype=np.int64)

        n_active = int((levels > 0).sum())
        freq = pump_frequency_for_active_fcus(n_active, N_ZONES, sc.pump)
        valves = {z.zone_id: bool(levels[i] > 0) for i, z in enumerate(sc.zones)}
        sol = solve_flows(self.topology, sc.pump, freq, valves, sc.network)

        coil_flows = sol.branch_flows_m3_s[self._coil_branch_idx]
        eff = np.array([sc.fcu.coil_effectiveness_by_mode[l] for l in levels])
        eps_cw = eff * RHO_WATER * CP_WATER * coil_flows

        occ = self._schedule[self._t]
        temps = state.zone_temps_C.astype(float).copy()
        t_out = state.outdoor_temp_C
        q_coil = np.zeros(N_ZONES)
        for _ in range(N_SUBSTEPS):
            temps, q_coil = kernels.zone_substep(
                temps,
                occ.astype(np.float64),
                t_out,
                self._ua,
                self._solar,
                self._adj,
                self._adj_rowsum,
                self._q_p,
                self._q_d,
                eps_cw,
                sc.supply_water_temp_C,
                self._beta,
                self._caps,
                DT_SUBSTEP_S,
            )

        zone_pmv = np.array([pmv(t, sc.comfort) for t in temps])
        zone_ppd = np.array([ppd(v) for v in zone_pmv])
        n_total = int(occ.sum())
        ppd_m = mean_ppd(zone_ppd, occ)
        pmv_abs = float((occ * np.abs(zone_pmv)).sum() / n_total) if n_total > 0 else 0.0
        power_W = pump_power(freq, sc.pump) + sum(
            fcu_fan_power(int(l), sc.fcu) for l in levels
        )
        power_kW = power_W / 1000.0
        reward = step_reward(ppd_m, power_kW, n_total, sc.lambda_P)
        comfort_term = -ppd_m if n_total > 0 else 0.0
        energy_term = -sc.lambda_P * power_kW

        prop = propagate_temperatures(
            self.topology,
            sol,
            {z.zone_id: (float(eff[i]), float(temps[i])) for i, z in enumerate(sc.zones)},
            sc.supply_water_temp_C,
        )

        balance = self._incidence @ sol.branch_flows_m3_s
        flow_scale = float(np.abs(sol.branch_flows_m3_s).max())
        mass_balance_rel = float(np.abs(balance).max() / flow_scale) if flow_scale > 0 else 0.0

        self._t += 1
        clock = self._t * DT_CONTROL_MIN
        next_state = BuildingState(
            zone_temps_C=temps,
            occupancy=self._schedule[self._t].copy(),
            outdoor_temp_C=sc.outdoor.temp_at(clock, sc.start_hour),
            prev_action=action,
            clock_min=clock,
            supply_water_temp_C=sc.supply_water_temp_C,
            return_water_temp_C=prop.return_temp_C,
            pump_freq_Hz=freq,
        )
        self._state = next_state
        done = self._t >= sc.episode_steps

        metrics = StepMetrics(
            ppd_mean_pct=float(ppd_m),
            pmv_abs_mean=pmv_abs,
            power_kW=float(power_kW),
            occupants_total=n_total,
            reward=float(reward),
        )
        info = {
            "metrics": metrics,
            "comfort_term": float(comfort_term),
            "energy_term": float(energy_term),
            "zone_pmv": zone_pmv,
            "zone_ppd": zone_ppd,
            "occupancy": occ.copy(),
            "pump_freq_Hz": freq,
            "solution": sol,
            "propagation": prop,
            "mass_balance_rel": mass_balance_rel,
            "fan_airflow_m3_s": np.array([fcu_airflow(int(l), sc.fcu) for l in levels]),
        }
        return next_state, float(reward), done, info


def make_env(cfg: dict, scaler: FeatureScaler | None = None) -> BuildingEnv:
    return BuildingEnv(Scenario.from_config(cfg), scaler=scaler)
