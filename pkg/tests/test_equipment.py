import numpy as np
import pytest

from hvacmask.equipment import (
    FcuParams,
    PumpParams,
    fcu_airflow,
    fcu_fan_power,
    pump_frequency_for_active_fcus,
    pump_head,
    pump_head_rated,
    pump_power,
)
from hvacmask.thermal import ScenarioError

FCU = FcuParams(rated_airflow_m3_s=0.2, rated_fan_power_W=100.0)
PUMP = PumpParams(alpha1=-100.0, alpha2=0.0, alpha3=50.0,
                  rated_freq_Hz=50.0, rated_power_W=800.0,
                  min_freq_Hz=20.0, max_freq_Hz=50.0)


class TestFcu:
    def test_airflow_off(self):
        assert fcu_airflow(0, FCU) == 0.0

    def test_airflow_full(self):
        assert fcu_airflow(3, FCU) == FCU.rated_airflow_m3_s

    def test_airflow_half(self):
        assert fcu_airflow(1, FCU) == pytest.approx(0.1)

    def test_airflow_mode_out_of_range(self):
        with pytest.raises(ValueError):
            fcu_airflow(4, FCU)

    def test_fan_power_off(self):
        assert fcu_fan_power(0, FCU) == 0.0

    def test_fan_power_full(self):
        assert fcu_fan_power(3, FCU) == FCU.rated_fan_power_W

    def test_fan_power_half_flow(self):
        assert fcu_fan_power(1, FCU) == pytest.approx(0.5**1.5 * 100.0, rel=1e-15)

    def test_fan_power_monotone(self):
        powers = [fcu_fan_power(m, FCU) for m in range(4)]
        assert powers == sorted(powers)
        assert all(p >= 0 for p in powers)

    def test_fraction_invariants_enforced(self):
        with pytest.raises(ScenarioError):
            FcuParams(mode_airflow_fractions=(0.0, 0.8, 0.5, 1.0))
        with pytest.raises(ScenarioError):
            FcuParams(mode_airflow_fractions=(0.1, 0.5, 0.75, 1.0))
        with pytest.raises(ScenarioError):
            FcuParams(coil_effectiveness_by_mode=(0.0, 0.5, 0.7, 1.2))


class TestPump:
    def test_shutoff_head(self):
        assert pump_head_rated(0.0, PUMP) == 50.0

    def test_quadratic_substitution(self):
        assert pump_head_rated(0.5, PUMP) == pytest.approx(25.0)

    def test_head_strictly_decreasing(self):
        grid = np.linspace(0.0, 0.6, 50)
        heads = [pump_head_rated(v, PUMP) for v in grid]
        assert all(a > b for a, b in zip(heads, heads[1:]))

    def test_negative_flow_rejected(self):
        with pytest.raises(ValueError):
            pump_head_rated(-0.1, PUMP)

    def test_head_at_rated_frequency_matches_rated_curve(self):
        for v in np.linspace(0.0, 0.5, 100):
            assert pump_head(v, 50.0, PUMP) == pump_head_rated(v, PUMP)

    def test_head_quarter_at_half_speed(self):
        assert pump_head(0.0, 25.0, PUMP) == pytest.approx(12.5)

    def test_head_zero_frequency(self):
        assert pump_head(0.3, 0.0, PUMP) == 0.0

    def test_frequency_band_enforced(self):
        with pytest.raises(ValueError):
            pump_head(0.1, 10.0, PUMP)
        with pytest.raises(ValueError):
            pump_power(55.0, PUMP)

    def test_power_cube_law(self):
        assert pump_power(50.0, PUMP) == 800.0
        assert pump_power(25.0, PUMP) == pytest.approx(100.0, rel=1e-15)
        assert pump_power(0.0, PUMP) == 0.0

    def test_power_ratio_property(self):
        for f1, f2 in [(20.0, 40.0), (25.0, 50.0), (30.0, 45.0)]:
            ratio = pump_power(f1, PUMP) / pump_power(f2, PUMP)
            assert ratio == pytest.approx((f1 / f2) ** 3, rel=1e-12)

    def test_params_validation(self):
        with pytest.raises(ScenarioError):
            PumpParams(alpha1=1.0)
        with pytest.raises(ScenarioError):
            PumpParams(alpha3=-5.0)
        with pytest.raises(ScenarioError):
            PumpParams(min_freq_Hz=40.0, max_freq_Hz=30.0)


class TestPumpRule:
    def test_idles_at_minimum_with_everything_off(self):
        assert pump_frequency_for_active_fcus(0, 7, PUMP) == PUMP.min_freq_Hz

    def test_full_activity_hits_the_cap(self):
        assert pump_frequency_for_active_fcus(7, 7, PUMP) == PUMP.max_freq_Hz

    def test_monotone_in_active_count(self):
        freqs = [pump_frequency_for_active_fcus(n, 7, PUMP) for n in range(8)]
        assert freqs == sorted(freqs)

    def test_bad_counts(self):
        with pytest.raises(ValueError):
            pump_frequency_for_active_fcus(-1, 7, PUMP)
