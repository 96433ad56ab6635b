"""Historical-log schema, CSV ingestion and synthetic demonstration rollouts.

The log schema mirrors the building-management export: one timestamp column,
the outdoor temperature, and seven per-zone groups (air temperature, FCU fan
mode, coil supply/return water temperatures, supply/return pressures and the
occupant count).
"""

from dataclasses import dataclass
from datetime import date, datetime, timedelta
from pathlib import Path

import numpy as np

from .environment import (
    DT_CONTROL_MIN,
    N_ZONES,
    BuildingEnv,
    BuildingState,
    JointAction,
    Scenario,
    raw_features,
)
from .policies import RuleBasedPolicy

TIMESTAMP_FMT = "%Y-%m-%d %H:%M:%S"

_GROUPS = (
    "zone_temp",
    "FCU_fan",
    "supply_temp",
    "return_temp",
    "supply_pressure",
    "return_pressure",
    "occupant_num",
)

COLUMNS = ["timestamp", "outdoor_temp"] + [
    f"{g}_{i}" for g in _GROUPS for i in range(1, N_ZONES + 1)
]


class LogFormatError(ValueError):
    """Historical log violates the schema; message names the row/column."""


@dataclass
class HistoricalLog:
    timestamps: list
    outdoor_temp: np.ndarray        # (N,)
    zone_temps: np.ndarray          # (N, 7)
    fan_modes: np.ndarray           # (N, 7) int
    supply_temps: np.ndarray        # (N, 7)
    return_temps: np.ndarray        # (N, 7)
    supply_pressures: np.ndarray    # (N, 7)
    return_pressures: np.ndarray    # (N, 7)
    occupant_counts: np.ndarray     # (N, 7) int

    def __len__(self) -> int:
        return len(self.timestamps)

    def day_key(self, i: int) -> date:
        return self.timestamps[i].date()

    def day_start_indices(self) -> dict:
        """First row index of each calendar day."""
        firsts: dict = {}
        for i, ts in enumerate(self.timestamps):
            firsts.setdefault(ts.date(), i)
        return firsts

    def clock_min(self, i: int, start_hour: int = 9) -> int:
        ts = self.timestamps[i]
        return (ts.hour - start_hour) * 60 + ts.minute

    def state_at(self, i: int) -> BuildingState:
        """Reconstruct the decision-time state of row i. The previous action
        comes from the preceding row of the same day (all-off at day start)."""
        day_first = self.day_start_indices()[self.day_key(i)]
        if i > day_first:
            prev = JointAction.from_levels(self.fan_modes[i - 1])
        else:
            prev = JointAction.all_off()
        return BuildingState(
            zone_temps_C=self.zone_temps[i].astype(float),
            occupancy=self.occupant_counts[i].astype(np.int64),
            outdoor_temp_C=float(self.outdoor_temp[i]),
            prev_action=prev,
            clock_min=self.clock_min(i),
            supply_water_temp_C=float(self.supply_temps[i].mean()),
            return_water_temp_C=float(self.return_temps[i].mean()),
            pump_freq_Hz=0.0,
        )

    def feature_matrix(self) -> np.ndarray:
        """Raw (unnormalized) 24-dim learner features for every row."""
        return np.stack([raw_features(self.state_at(i)) for i in range(len(self))])

    def to_csv(self, path) -> None:
        path = Path(path)
        with open(path, "w") as fh:
            fh.write(",".join(COLUMNS) + "\n")
            for i in range(len(self)):
                row = [self.timestamps[i].strftime(TIMESTAMP_FMT), f"{self.outdoor_temp[i]:.4f}"]
                for arr, fmt in (
                    (self.zone_temps, "{:.4f}"),
                    (self.fan_modes, "{:d}"),
                    (self.supply_temps, "{:.4f}"),
                    (self.return_temps, "{:.4f}"),
                    (self.supply_pressures, "{:.4f}"),
                    (self.return_pressures, "{:.4f}"),
                    (self.occupant_counts, "{:d}"),
                ):
                    row.extend(fmt.format(v) for v in arr[i])
                fh.write(",".join(row) + "\n")


def _parse_float(raw: str, row: int, column: str) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise LogFormatError(f"row {row}: unparseable number {raw!r} in column {column}") from None
    if not np.isfinite(value):
        raise LogFormatError(f"row {row}: non-finite value in column {column}")
    return value


def _parse_int(raw: str, row: int, column: str, lo: int, hi: int | None) -> int:
    value = _parse_float(raw, row, column)
    if value != int(value):
        raise LogFormatError(f"row {row}: column {column} must be an integer, got {raw!r}")
    value = int(value)
    if value < lo or (hi is not None and value > hi):
        raise LogFormatError(f"row {row}: column {column} value {value} out of range")
    return value


def load_historical(path) -> HistoricalLog:
    """Parse and validate a historical CSV, then resample to the 5-minute
    control grid (rows at action boundaries are kept)."""
    path = Path(path)
    if not path.exists():
        raise LogFormatError(f"historical log not found: {path}")
    with open(path) as fh:
        header_line = fh.readline().strip()
        header = header_line.split(",") if header_line else []
        missing = set(COLUMNS) - set(header)
        unknown = set(header) - set(COLUMNS)
        if missing:
            raise LogFormatError(f"missing column {sorted(missing)[0]}")
        if unknown:
            raise LogFormatError(f"unknown column {sorted(unknown)[0]}")
        col = {name: header.index(name) for name in COLUMNS}

        timestamps = []
        rows = []
        prev_ts = None
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != len(header):
                raise LogFormatError(f"row {lineno}: expected {len(header)} fields, got {len(parts)}")
            try:
                ts = datetime.strptime(parts[col["timestamp"]], TIMESTAMP_FMT)
            except ValueError:
                raise LogFormatError(
                    f"row {lineno}: unparseable timestamp {parts[col['timestamp']]!r}"
                ) from None
            if prev_ts is not None and ts <= prev_ts:
                raise LogFormatError(f"row {lineno}: timestamps not strictly increasing")
            prev_ts = ts
            if ts.second != 0 or ts.minute % DT_CONTROL_MIN != 0:
                continue  # between action boundaries; dropped by resampling
            values = {}
            values["outdoor_temp"] = _parse_float(parts[col["outdoor_temp"]], lineno, "outdoor_temp")
            for g in _GROUPS:
                for i in range(1, N_ZONES + 1):
                    name = f"{g}_{i}"
                    raw = parts[col[name]]
                    if g == "FCU_fan":
                        values[name] = _parse_int(raw, lineno, name, 0, 3)
                    elif g == "occupant_num":
                        values[name] = _parse_int(raw, lineno, name, 0, None)
                    else:
                        values[name] = _parse_float(raw, lineno, name)
            timestamps.append(ts)
            rows.append(values)

    if not rows:
        raise LogFormatError(f"historical log {path} has no usable rows")

    def grid(group, dtype=float):
        return np.array(
            [[r[f"{group}_{i}"] for i in range(1, N_ZONES + 1)] for r in rows], dtype=dtype
        )

    return HistoricalLog(
        timestamps=timestamps,
        outdoor_temp=np.array([r["outdoor_temp"] for r in rows]),
        zone_temps=grid("zone_temp"),
        fan_modes=grid("FCU_fan", dtype=np.int64),
        supply_temps=grid("supply_temp"),
        return_temps=grid("return_temp"),
        supply_pressures=grid("supply_pressure"),
        return_pressures=grid("return_pressure"),
        occupant_counts=grid("occupant_num", dtype=np.int64),
    )


def generate_demonstrations(
    scenario: Scenario,
    behavior_policy=None,
    n_days: int = 16,
    seed: int = 0,
    start_date: str = "2021-08-02",
    noise_prob: float = 0.1,
) -> HistoricalLog:
    """Roll out the (noisy) occupancy-reactive rule policy for n_days and
    record log rows in the historical schema. Deterministic given seed."""
    if behavior_policy is None:
        behavior_policy = RuleBasedPolicy(noise_prob=noise_prob)
    day0 = datetime.strptime(start_date, "%Y-%m-%d")
    base = np.random.SeedSequence(seed)
    children = base.spawn(n_days)

    timestamps = []
    outdoor, ztemps, fans = [], [], []
    stemps, rtemps, spress, rpress, occs = [], [], [], [], []

    env = BuildingEnv(scenario)
    for day in range(n_days):
        env_ss, pol_ss = children[day].spawn(2)
        state = env.reset(seed=env_ss)
        rng = np.random.default_rng(pol_ss)
        day_start = day0 + timedelta(days=day, hours=int(scenario.start_hour))
        for t in range(scenario.episode_steps):
            action_idx = behavior_policy.act(state, None, None, rng)
            action = JointAction.from_index(action_idx)
            timestamps.append(day_start + timedelta(minutes=t * DT_CONTROL_MIN))
            outdoor.append(state.outdoor_temp_C)
            ztemps.append(state.zone_temps_C.copy())
            fans.append(np.asarray(action.levels))
            next_state, _, done, info = env.step(action)
            sol = info["solution"]
            prop = info["propagation"]
            p_sup = sol.node_pressures_kPa["supply_header"]
            p_ret = sol.node_pressures_kPa["return_header"]
            stemps.append(np.full(N_ZONES, scenario.supply_water_temp_C))
            rtemps.append(
                np.array(
                    [prop.branch_outlet_C[f"coil_{z.zone_id}"] for z in scenario.zones]
                )
            )
            spress.append(np.full(N_ZONES, p_sup))
            rpress.append(np.full(N_ZONES, p_ret))
            occs.append(info["occupancy"])
            state = next_state
            if done:
                break

    return HistoricalLog(
        timestamps=timestamps,
        outdoor_temp=np.array(outdoor),
        zone_temps=np.stack(ztemps),
        fan_modes=np.stack(fans).astype(np.int64),
        supply_temps=np.stack(stemps),
        return_temps=np.stack(rtemps),
        supply_pressures=np.stack(spress),
        return_pressures=np.stack(rpress),
        occupant_counts=np.stack(occs).astype(np.int64),
    )
