import numpy as np
import pytest
from hypothesis import given, strategies as st

import hvacmask.kernels as kernels
from hvacmask.environment import (
    N_ACTIONS,
    BuildingEnv,
    EpisodeFinished,
    FeatureScaler,
    JointAction,
    Scenario,
    decode_index,
    encode_levels,
    occupancy_schedule,
    raw_features,
)
from hvacmask.equipment import pump_power
from hvacmask.thermal import ScenarioError


class TestJointAction:
    def test_all_off_is_zero(self):
        assert JointAction.all_off().flat_index == 0

    def test_exhaustive_bijection(self):
        for a in range(N_ACTIONS):
            assert encode_levels(decode_index(a)) == a

    def test_digit_table_matches_decode(self):
        idx = np.random.default_rng(0).integers(0, N_ACTIONS, 200)
        for a in idx:
            assert tuple(kernels.DIGITS[a]) == decode_index(int(a))

    @given(st.lists(st.integers(min_value=0, max_value=3), min_size=7, max_size=7))
    def test_roundtrip_from_levels(self, levels):
        act = JointAction.from_levels(levels)
        assert list(act.levels) == levels
        assert JointAction.from_index(act.flat_index).levels == act.levels

    def test_zone_one_least_significant(self):
        act = JointAction.from_levels([1, 0, 0, 0, 0, 0, 0])
        assert act.flat_index == 1
        act = JointAction.from_levels([0, 0, 0, 0, 0, 0, 3])
        assert act.flat_index == 3 * 4**6

    def test_validation(self):
        with pytest.raises(ValueError):
            encode_levels([4, 0, 0, 0, 0, 0, 0])
        with pytest.raises(ValueError):
            decode_index(N_ACTIONS)


class TestReset:
    def test_deterministic(self, scenario):
        env1, env2 = BuildingEnv(scenario), BuildingEnv(scenario)
        s1, s2 = env1.reset(seed=5), env2.reset(seed=5)
        np.testing.assert_array_equal(s1.zone_temps_C, s2.zone_temps_C)
        np.testing.assert_array_equal(s1.occupancy, s2.occupancy)

    def test_initial_state_contract(self, env):
        s = env.reset(seed=0)
        assert s.clock_min == 0
        assert s.prev_action.flat_index == 0
        assert np.all((s.zone_temps_C >= 26.0) & (s.zone_temps_C <= 28.0))

    def test_different_seeds_differ(self, scenario):
        env = BuildingEnv(scenario)
        a = env.reset(seed=1).zone_temps_C.copy()
        b = env.reset(seed=2).zone_temps_C.copy()
        assert not np.array_equal(a, b)


class TestStep:
    def test_fixed_horizon(self, env):
        env.reset(seed=3)
        done = False
        steps = 0
        while not done:
            _, _, done, _ = env.step(0)
            steps += 1
        assert steps == env.scenario.episode_steps
        with pytest.raises(EpisodeFinished):
            env.step(0)

    def test_reward_decomposition(self, env):
        state = env.reset(seed=3)
        for _ in range(20):
            state, reward, _, info = env.step(JointAction.from_levels([1] * 7))
            assert reward == pytest.approx(info["comfort_term"] + info["energy_term"])
            if info["metrics"].occupants_total == 0:
                assert info["comfort_term"] == 0.0

    def test_all_off_unoccupied_reward_is_pump_idle_energy(self, scenario):
        env = BuildingEnv(scenario)
        state = None
        for seed in range(30):  # find a morning where nobody arrived by 09:00
            state = env.reset(seed=seed)
            if int(state.occupancy.sum()) == 0:
                break
        assert int(state.occupancy.sum()) == 0
        _, reward, _, info = env.step(0)
        assert info["metrics"].occupants_total == 0
        idle_kw = pump_power(scenario.pump.min_freq_Hz, scenario.pump) / 1000.0
        assert reward == pytest.approx(-scenario.lambda_P * idle_kw)

    def test_cooling_lowers_temperature_vs_all_off(self, scenario):
        # paired rollout, same seed
        env_a, env_b = BuildingEnv(scenario), BuildingEnv(scenario)
        env_a.reset(seed=9)
        env_b.reset(seed=9)
        hot_zone = 0
        cool = [0] * 7
        cool[hot_zone] = 3
        for _ in range(6):
            sa, _, _, _ = env_a.step(JointAction.from_levels(cool))
            sb, _, _, _ = env_b.step(0)
        assert sa.zone_temps_C[hot_zone] < sb.zone_temps_C[hot_zone]

    def test_trajectory_fully_determined_by_seed_and_actions(self, scenario):
        actions = np.random.default_rng(2).integers(0, N_ACTIONS, 40)
        temps = []
        rewards = []
        for _ in range(2):
            env = BuildingEnv(scenario)
            env.reset(seed=17)
            ts, rs = [], []
            for a in actions:
                s, r, _, _ = env.step(int(a))
                ts.append(s.zone_temps_C.copy())
                rs.append(r)
            temps.append(np.array(ts))
            rewards.append(np.array(rs))
        np.testing.assert_array_equal(temps[0], temps[1])
        np.testing.assert_array_equal(rewards[0], rewards[1])

    def test_hydraulics_reported(self, env):
        env.reset(seed=1)
        _, _, _, info = env.step(JointAction.from_levels([2] * 7))
        assert info["solution"].residual_kPa <= env.scenario.network.tol_kPa
        assert info["mass_balance_rel"] <= 1e-9


class TestOccupancySchedule:
    def test_non_negative_integers(self, scenario):
        sch = occupancy_schedule(scenario, 0)
        assert sch.dtype == np.int64
        assert (sch >= 0).all()

    def test_deterministic(self, scenario):
        np.testing.assert_array_equal(
            occupancy_schedule(scenario, 4), occupancy_schedule(scenario, 4)
        )

    def test_building_mean_matches_field_average(self, scenario):
        means = [
            occupancy_schedule(scenario, seed)[:120].sum(axis=1).mean()
            for seed in range(150)
        ]
        assert 9.9 <= float(np.mean(means)) <= 14.9

    def test_morning_arrivals(self, scenario):
        at_9 = []
        at_10 = []
        for seed in range(120):
            sch = occupancy_schedule(scenario, seed)
            at_9.append(sch[0].sum())
            at_10.append(sch[12].sum())
        assert np.mean(at_9) <= np.mean(at_10)

    def test_lunch_trough(self, scenario):
        mid_morning, lunch = [], []
        for seed in range(60):
            sch = occupancy_schedule(scenario, seed)
            mid_morning.append(sch[24:36].sum(axis=1).mean())   # 11:00-12:00
            lunch.append(sch[40:56].sum(axis=1).mean())         # 12:20-13:40
        assert np.mean(lunch) < 0.25 * np.mean(mid_morning)


class TestFeatures:
    def test_dimension_and_layout(self, env):
        state = env.reset(seed=0)
        raw = raw_features(state)
        assert raw.shape == (24,)
        np.testing.assert_array_equal(raw[:7], state.zone_temps_C)
        np.testing.assert_array_equal(raw[15:22], np.zeros(7))  # all-off / 3

    def test_scaler_maps_bounds_to_unit_interval(self, scenario):
        scaler = FeatureScaler.from_bounds(scenario)
        assert np.all(scaler.transform(scaler.lo) == 0.0)
        assert np.all(scaler.transform(scaler.hi) == 1.0)

    def test_scaler_from_matrix_handles_constant_columns(self):
        mat = np.ones((5, 24))
        scaler = FeatureScaler.from_feature_matrix(mat)
        out = scaler.transform(mat[0])
        assert np.all(np.isfinite(out))


class TestScenarioValidation:
    def test_asymmetric_adjacency_rejected(self, cfg):
        import copy

        bad = copy.deepcopy(cfg)
        bad["zones"][4]["adjacency"] = [{"zone": 6, "eta_W_K": 8.0}]
        bad["zones"][5]["adjacency"] = [{"zone": 7, "eta_W_K": 8.0}]
        bad["zones"][6]["adjacency"] = [{"zone": 6, "eta_W_K": 8.0}]
        with pytest.raises(ScenarioError, match="symmetric"):
            Scenario.from_config(bad)

    def test_outdoor_profile_peaks_at_configured_hour(self, scenario):
        clocks = np.arange(0, 601, 5)
        temps = [scenario.outdoor.temp_at(c) for c in clocks]
        peak_clock = clocks[int(np.argmax(temps))]
        assert peak_clock == (scenario.outdoor.peak_hour - scenario.start_hour) * 60
