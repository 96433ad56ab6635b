"""Closed-loop chilled-water network: flow solve and temperature transport.

The default network is one pump feeding a supply header, a bank of parallel
FCU coil branches plus one bypass back to the return header, and the pump
closing the loop. Branch pressure drop follows the turbulent square law
R*V*|V|; the solver works on loop flows (one unknown per conducting parallel
branch) with the pump curve as the implicit boundary condition, iterated by
Newton-Raphson to the configured residual tolerance.

The bypass keeps the problem solvable when every FCU valve is shut.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .equipment import PumpParams, pump_head

RHO_WATER = 1000.0     # kg/m^3
CP_WATER = 4186.0      # J/(kg K)

SUPPLY_NODE = "supply_header"
RETURN_NODE = "return_header"

BRANCH_KINDS = ("pipe", "fcu_coil", "pump", "bypass")


class HydraulicSolverError(RuntimeError):
    """Newton iteration failed to reach the residual tolerance."""

    def __init__(self, msg, residual_kPa=None, iterations=None):
        super().__init__(msg)
        self.residual_kPa = residual_kPa
        self.iterations = iterations


class TopologyError(ValueError):
    """Network graph is not of the supported pump + parallel-bank form."""


@dataclass(frozen=True)
class BranchSpec:
    branch_id: str
    upstream: str
    downstream: str
    resistance_kPa_s2_m6: float
    kind: str
    zone_id: int | None = None

    def __post_init__(self):
        if self.kind not in BRANCH_KINDS:
            raise TopologyError(f"unknown branch kind {self.kind!r}")
        if self.resistance_kPa_s2_m6 < 0:
            raise TopologyError(f"branch {self.branch_id}: negative resistance")


@dataclass(frozen=True)
class NetworkTopology:
    nodes: tuple[str, ...]
    branches: tuple[BranchSpec, ...]

    def __post_init__(self):
        if len(set(self.nodes)) != len(self.nodes):
            raise TopologyError("duplicate node ids")
        ids = [b.branch_id for b in self.branches]
        if len(set(ids)) != len(ids):
            raise TopologyError("duplicate branch ids")
        node_set = set(self.nodes)
        for b in self.branches:
            if b.upstream not in node_set or b.downstream not in node_set:
                raise TopologyError(f"branch {b.branch_id} references unknown node")
        if sum(b.kind == "pump" for b in self.branches) != 1:
            raise TopologyError("exactly one pump branch required")
        if not any(b.kind == "bypass" for b in self.branches):
            raise TopologyError("at least one bypass branch required")

    def incidence(self) -> np.ndarray:
        """Node-by-branch matrix: +1 where the node is the branch upstream
        endpoint, -1 downstream."""
        mat = np.zeros((len(self.nodes), len(self.branches)))
        pos = {n: i for i, n in enumerate(self.nodes)}
        for j, b in enumerate(self.branches):
            mat[pos[b.upstream], j] = 1.0
            mat[pos[b.downstream], j] = -1.0
        return mat

    def branch_index(self, branch_id: str) -> int:
        for j, b in enumerate(self.branches):
            if b.branch_id == branch_id:
                return j
        raise KeyError(branch_id)


@dataclass(frozen=True)
class HydraulicSolution:
    branch_flows_m3_s: np.ndarray          # ordered like topology.branches
    node_pressures_kPa: dict[str, float]
    pump_op_point: tuple[float, float]     # (Vdot_pump, dP_kPa)
    iterations: int
    residual_kPa: float


@dataclass
class NetworkParams:
    coil_resistance_kPa_s2_m6: float = 5.6e10
    bypass_resistance_kPa_s2_m6: float = 2.0e11
    design_flow_m3_s: float = 2.0e-4       # initial-guess total flow
    tol_kPa: float = 1e-3
    max_iterations: int = 100


def build_network(zone_ids, params: NetworkParams) -> NetworkTopology:
    """Supply header -> parallel coil branches + bypass -> return header,
    with the pump closing the loop from return to supply."""
    zone_ids = list(zone_ids)
    if not zone_ids:
        raise TopologyError("at least one zone required")
    if len(set(zone_ids)) != len(zone_ids):
        raise TopologyError("duplicate zone ids")
    branches = [
        BranchSpec("pump", RETURN_NODE, SUPPLY_NODE, 0.0, "pump"),
    ]
    for zid in zone_ids:
        branches.append(
            BranchSpec(
                f"coil_{zid}",
                SUPPLY_NODE,
                RETURN_NODE,
                params.coil_resistance_kPa_s2_m6,
                "fcu_coil",
                zone_id=zid,
            )
        )
    branches.append(
        BranchSpec("bypass", SUPPLY_NODE, RETURN_NODE, params.bypass_resistance_kPa_s2_m6, "bypass")
    )
    return NetworkTopology(nodes=(SUPPLY_NODE, RETURN_NODE), branches=tuple(branches))


def solve_flows(
    topology: NetworkTopology,
    pump_params: PumpParams,
    pump_freq_Hz: float,
    valve_open_by_zone: dict[int, bool],
    params: NetworkParams | None = None,
) -> HydraulicSolution:
    """Solve branch flows under the pump boundary condition.

    Closed coil valves carry exactly zero flow. Raises HydraulicSolverError
    when Newton does not converge within the iteration budget.
    """
    params = params or NetworkParams()
    n_branches = len(topology.branches)
    flows = np.zeros(n_branches)

    pump_idx = next(j for j, b in enumerate(topology.branches) if b.kind == "pump")

    if pump_freq_Hz == 0.0:
        return HydraulicSolution(
            branch_flows_m3_s=flows,
            node_pressures_kPa={n: 0.0 for n in topology.nodes},
            pump_op_point=(0.0, 0.0),
            iterations=0,
            residual_kPa=0.0,
        )

    conducting = []
    for j, b in enumerate(topology.branches):
        if b.kind == "bypass":
            conducting.append(j)
        elif b.kind == "fcu_coil" and valve_open_by_zone.get(b.zone_id, False):
            conducting.append(j)
    if not conducting:
        raise TopologyError("no conducting branch between the headers")

    resist = np.array([topology.branches[j].resistance_kPa_s2_m6 for j in conducting])
    speed_sq = (pump_freq_Hz / pump_params.rated_freq_Hz) ** 2
    x0 = np.full(len(conducting), params.design_flow_m3_s / len(conducting))

    x, iters, residual = kernels.newton_flows(
        resist,
        pump_params.alpha1,
        pump_params.alpha2,
        pump_params.alpha3,
        speed_sq,
        x0,
        params.tol_kPa,
        params.max_iterations,
    )
    if residual > params.tol_kPa:
        raise HydraulicSolverError(
            f"hydraulic solve did not converge: residual {residual:.3e} kPa "
            f"after {iters} iterations (tol {params.tol_kPa} kPa)",
            residual_kPa=float(residual),
            iterations=int(iters),
        )

    for j, flow in zip(conducting, x):
        flows[j] = flow
    v_pump = float(x.sum())
    flows[pump_idx] = v_pump
    dp = pump_head(v_pump, pump_freq_Hz, pump_params)

    pressures = {RETURN_NODE: 0.0, SUPPLY_NODE: dp}
    for n in topology.nodes:
        pressures.setdefault(n, 0.0)

    return HydraulicSolution(
        branch_flows_m3_s=flows,
        node_pressures_kPa=pressures,
        pump_op_point=(v_pump, float(dp)),
        iterations=int(iters),
        residual_kPa=float(residual),
    )


def coil_outlet_temp(
    t_water_in_C: float,
    t_air_C: float,
    water_flow_m3_s: float,
    effectiveness: float,
    rho_w: float = RHO_WATER,
    cp_w: float = CP_WATER,
) -> tuple[float, float]:
    """Effectiveness-style coil model with the water side as the minimum
    capacity rate: q = eps*C_w*(T_air - T_w_in) into the water (positive when
    cooling the air), outlet T_w_in + eps*(T_air - T_w_in)."""
    if not 0.0 <= effectiveness <= 1.0:
        raise ValueError("effectiveness must lie in [0, 1]")
    if water_flow_m3_s < 0:
        raise ValueError("water flow must be non-negative")
    c_w = rho_w * cp_w * water_flow_m3_s
    q = effectiveness * c_w * (t_air_C - t_water_in_C)
    t_out = t_water_in_C + effectiveness * (t_air_C - t_water_in_C)
    return t_out, q


@dataclass(frozen=True)
class ThermalPropagation:
    branch_outlet_C: dict[str, float]
    return_temp_C: float
    q_coil_W: dict[int, float] = field(default_factory=dict)


def propagate_temperatures(
    topology: NetworkTopology,
    solution: HydraulicSolution,
    coil_states: dict[int, tuple[float, float]],  # zone_id -> (effectiveness, t_air_C)
    supply_temp_C: float,
    rho_w: float = RHO_WATER,
    cp_w: float = CP_WATER,
) -> ThermalPropagation:
    """Walk the network in flow direction: coil outlets from the coil model,
    bypass passes the supply temperature through, the return header mixes by
    flow weight. Pipe losses are neglected (well-insulated lines)."""
    outlets: dict[str, float] = {}
    q_by_zone: dict[int, float] = {}
    mix_num = 0.0
    mix_den = 0.0
    for j, b in enumerate(topology.branches):
        flow = float(solution.branch_flows_m3_s[j])
        if b.kind == "pump":
            continue
        if b.kind == "fcu_coil":
            eff, t_air = coil_states.get(b.zone_id, (0.0, supply_temp_C))
            t_out, q = coil_outlet_temp(supply_temp_C, t_air, flow, eff, rho_w, cp_w)
            q_by_zone[b.zone_id] = q
        else:  # bypass / pipe between the headers
            t_out = supply_temp_C
        outlets[b.branch_id] = t_out
        mix_num += flow * t_out
        mix_den += flow
    if mix_den <= 0.0:
        # Degenerate no-flow case: everything sits at the supply temperature.
        return ThermalPropagation(
            branch_outlet_C={b: supply_temp_C for b in outlets},
            return_temp_C=supply_temp_C,
            q_coil_W={z: 0.0 for z in q_by_zone},
        )
    return ThermalPropagation(
        branch_outlet_C=outlets,
        return_temp_C=mix_num / mix_den,
        q_coil_W=q_by_zone,
    )


def format_solution(topology: NetworkTopology, solution: HydraulicSolution) -> str:
    """Tabular text dump of branch flows and node pressures."""
    lines = [
        f"{'branch':<12}{'kind':<10}{'flow m3/s':>14}",
        "-" * 36,
    ]
    for j, b in enumerate(topology.branches):
        lines.append(f"{b.branch_id:<12}{b.kind:<10}{solution.branch_flows_m3_s[j]:>14.6e}")
    lines.append("")
    lines.append(f"{'node':<16}{'pressure kPa':>14}")
    lines.append("-" * 30)
    for n in topology.nodes:
        lines.append(f"{n:<16}{solution.node_pressures_kPa[n]:>14.4f}")
    v, dp = solution.pump_op_point
    lines.append("")
    lines.append(
        f"pump operating point: {v:.6e} m3/s at {dp:.4f} kPa "
        f"({solution.iterations} iterations, residual {solution.residual_kPa:.2e} kPa)"
    )
    return "\n".join(lines)
