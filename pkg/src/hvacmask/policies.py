"""Baseline control policies: full-random, masked-random, rule-based.

The rule-based policy is also the demonstration behavior (with optional
action noise): fan off in vacant zones, otherwise the mode rises with zone
temperature and gets a boost in crowded rooms.
"""

import numpy as np

from .environment import N_ACTIONS, N_ZONES, BuildingState, JointAction

TEMP_TIERS = (25.0, 26.5, 28.0)   # lower edges of modes 1, 2, 3
CROWD_BOOST_AT = 4                # occupants


def rule_levels(zone_temps_C, occupancy) -> np.ndarray:
    """Deterministic occupancy-reactive fan levels."""
    levels = np.zeros(N_ZONES, dtype=np.int64)
    for i in range(N_ZONES):
        if occupancy[i] <= 0:
            continue
        t = zone_temps_C[i]
        mode = 0
        for tier, edge in enumerate(TEMP_TIERS, start=1):
            if t >= edge:
                mode = tier
        if occupancy[i] >= CROWD_BOOST_AT:
            mode += 1
        levels[i] = min(3, mode)
    return levels


def jitter_levels(levels, rng, noise_prob: float) -> np.ndarray:
    """With probability noise_prob per zone, bump the level by +/-1 (clipped)."""
    out = levels.copy()
    for i in range(N_ZONES):
        if rng.random() < noise_prob:
            delta = 1 if rng.random() < 0.5 else -1
            out[i] = min(3, max(0, out[i] + delta))
    return out


class FullRandomPolicy:
    """Uniform over the whole 16384-action space."""

    needs_mask = False

    def act(self, state: BuildingState, features, mask, rng) -> int:
        return int(rng.integers(N_ACTIONS))


class MaskedRandomPolicy:
    """Uniform over the actions the mask leaves feasible."""

    needs_mask = True

    def act(self, state: BuildingState, features, mask, rng) -> int:
        if mask is None:
            raise ValueError("masked-random policy needs an action mask")
        valid = np.flatnonzero(mask)
        if valid.size == 0:
            raise ValueError("empty action mask")
        return int(valid[rng.integers(valid.size)])


class RuleBasedPolicy:
    """The demonstration behavior policy; noise_prob=0 gives the clean rule."""

    needs_mask = False

    def __init__(self, noise_prob: float = 0.0):
        self.noise_prob = noise_prob

    def act(self, state: BuildingState, features, mask, rng) -> int:
        levels = rule_levels(state.zone_temps_C, state.occupancy)
        if self.noise_prob > 0:
            levels = jitter_levels(levels, rng, self.noise_prob)
        return JointAction.from_levels(levels).flat_index


def baseline_policy(kind: str):
    if kind == "full_random":
        return FullRandomPolicy()
    if kind == "masked_random":
        return MaskedRandomPolicy()
    if kind == "rule_based":
        return RuleBasedPolicy(noise_prob=0.0)
    raise ValueError(f"unknown baseline policy kind {kind!r}")
