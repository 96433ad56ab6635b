"""Fan-coil-unit airflow/power laws and the variable-speed pump model.

Fan power follows the similarity law with the exponent reduced to 1.5, the
usual engineering practice for three-speed FCUs. The pump combines a rated
quadratic head curve with affinity scaling (head ~ speed^2, power ~ speed^3).
"""

from dataclasses import dataclass

from .thermal import ScenarioError

FAN_POWER_EXPONENT = 1.5
MODES = (0, 1, 2, 3)


@dataclass(frozen=True)
class FcuParams:
    rated_airflow_m3_s: float = 0.18
    rated_fan_power_W: float = 65.0
    mode_airflow_fractions: tuple[float, float, float, float] = (0.0, 0.5, 0.75, 1.0)
    rated_water_flow_m3_s: float = 2.5e-5
    coil_effectiveness_by_mode: tuple[float, float, float, float] = (0.0, 0.5, 0.65, 0.78)

    def __post_init__(self):
        if self.rated_airflow_m3_s <= 0 or self.rated_fan_power_W <= 0:
            raise ScenarioError("rated FCU airflow and fan power must be positive")
        if self.rated_water_flow_m3_s <= 0:
            raise ScenarioError("rated FCU water flow must be positive")
        f = self.mode_airflow_fractions
        if len(f) != 4 or f[0] != 0.0 or f[3] != 1.0 or any(
            f[i] > f[i + 1] for i in range(3)
        ):
            raise ScenarioError(
                "mode airflow fractions must be non-decreasing with f(0)=0, f(3)=1"
            )
        if len(self.coil_effectiveness_by_mode) != 4 or any(
            not 0.0 <= e <= 1.0 for e in self.coil_effectiveness_by_mode
        ):
            raise ScenarioError("coil effectiveness values must lie in [0, 1]")


@dataclass(frozen=True)
class PumpParams:
    alpha1: float = -5.0e8   # kPa s^2/m^6
    alpha2: float = 0.0      # kPa s/m^3
    alpha3: float = 60.0     # kPa (shutoff head)
    rated_freq_Hz: float = 50.0
    rated_power_W: float = 750.0
    min_freq_Hz: float = 20.0
    max_freq_Hz: float = 50.0

    def __post_init__(self):
        if self.alpha1 >= 0:
            raise ScenarioError("alpha1 must be negative (head falls with flow)")
        if self.alpha3 <= 0:
            raise ScenarioError("alpha3 must be positive (shutoff head)")
        if self.rated_freq_Hz <= 0 or self.rated_power_W <= 0:
            raise ScenarioError("rated pump frequency and power must be positive")
        if not 0 < self.min_freq_Hz <= self.max_freq_Hz <= self.rated_freq_Hz:
            raise ScenarioError("need 0 < min_freq <= max_freq <= rated_freq")


def _check_mode(mode: int) -> None:
    if mode not in MODES:
        raise ValueError(f"fan mode {mode!r} not in {MODES}")


def _check_freq(freq_Hz: float, params: PumpParams) -> None:
    # 0 Hz is the admissible "off" state; otherwise the VFD band applies.
    if freq_Hz == 0.0:
        return
    if not params.min_freq_Hz <= freq_Hz <= params.max_freq_Hz:
        raise ValueError(
            f"pump frequency {freq_Hz} Hz outside "
            f"[{params.min_freq_Hz}, {params.max_freq_Hz}]"
        )


def fcu_airflow(mode: int, params: FcuParams) -> float:
    """Supply airflow at the given fan mode, m^3/s."""
    _check_mode(mode)
    return params.mode_airflow_fractions[mode] * params.rated_airflow_m3_s


def fcu_fan_power(mode: int, params: FcuParams) -> float:
    """Fan electrical power (Vdot/Vdot_rated)^1.5 * W_rated, watts."""
    _check_mode(mode)
    return params.mode_airflow_fractions[mode] ** FAN_POWER_EXPONENT * params.rated_fan_power_W


def pump_head_rated(vdot_m3_s: float, params: PumpParams) -> float:
    """Rated-speed head curve alpha1*V^2 + alpha2*V + alpha3, kPa."""
    if vdot_m3_s < 0:
        raise ValueError("pump flow must be non-negative")
    return params.alpha1 * vdot_m3_s**2 + params.alpha2 * vdot_m3_s + params.alpha3


def pump_head(vdot_m3_s: float, freq_Hz: float, params: PumpParams) -> float:
    """Head at reduced speed: (f/f_rated)^2 times the rated curve, kPa."""
    _check_freq(freq_Hz, params)
    return (freq_Hz / params.rated_freq_Hz) ** 2 * pump_head_rated(vdot_m3_s, params)


def pump_power(freq_Hz: float, params: PumpParams) -> float:
    """Cube-law electrical power (f/f_rated)^3 * W_rated, watts."""
    _check_freq(freq_Hz, params)
    return (freq_Hz / params.rated_freq_Hz) ** 3 * params.rated_power_W


def pump_frequency_for_active_fcus(n_active: int, n_zones: int, params: PumpParams) -> float:
    """Pump scheduling rule: frequency proportional to the number of running
    FCUs, clamped to the VFD band. With everything off the pump idles at the
    minimum frequency so the loop keeps circulating."""
    if n_active < 0 or n_zones <= 0:
        raise ValueError("bad FCU counts")
    raw = params.rated_freq_Hz * n_active / n_zones
    return min(params.max_freq_Hz, max(params.min_freq_Hz, raw))
