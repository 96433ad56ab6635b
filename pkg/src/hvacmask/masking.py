"""State-dependent feasible action sets mined by kNN over demonstration logs.

This oracle plays the role a fine-tuned language model would fill in the
full system: given the recent building state it returns, per zone, the fan
levels that similar historical states actually used. The provider interface
(``feasible_sets(state)``) is the swap point for a real model.

Includes the joint-mask algebra over the 16384-action space and a cache
keyed on a discretized state (temperatures to 0.5 C, outdoor to 1 C,
occupancy and previous levels exact, clock in 30-minute buckets). On a miss
the cache evaluates the provider at the bucket representative, so its output
is a pure function of the key.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .environment import (
    N_ACTIONS,
    N_FEATURES,
    N_LEVELS,
    N_ZONES,
    BuildingState,
    FeatureScaler,
    JointAction,
    raw_features,
)

ALL_LEVELS = tuple(range(N_LEVELS))

# Default distance weights over the 24 learner features: zone temperatures
# and occupancy drive the demonstrated behavior, previous-action digits and
# the clock encoding mostly add noise to the neighborhoods.
DEFAULT_FEATURE_WEIGHTS = np.concatenate(
    [
        np.full(7, 2.0),    # zone temperatures
        np.full(7, 3.0),    # occupancy counts
        [1.0],              # outdoor temperature
        np.full(7, 0.25),   # previous fan levels
        [0.5, 0.5],         # clock sin/cos
    ]
)


@dataclass(frozen=True)
class FeasibleSets:
    """Per-zone non-empty subsets of the fan levels, as sorted tuples."""

    per_zone: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if len(self.per_zone) != N_ZONES:
            raise ValueError(f"need {N_ZONES} per-zone sets")
        for j, levels in enumerate(self.per_zone):
            if not levels:
                raise ValueError(f"zone {j + 1}: empty feasible set")
            if any(l not in ALL_LEVELS for l in levels):
                raise ValueError(f"zone {j + 1}: level outside {ALL_LEVELS}")
            if tuple(sorted(set(levels))) != tuple(levels):
                raise ValueError(f"zone {j + 1}: levels must be sorted and unique")

    @classmethod
    def full(cls) -> "FeasibleSets":
        return cls(per_zone=tuple(ALL_LEVELS for _ in range(N_ZONES)))

    def contains(self, action: JointAction) -> bool:
        return all(l in s for l, s in zip(action.levels, self.per_zone))


@dataclass(frozen=True)
class ActionMask:
    bits: np.ndarray          # (16384,) bool
    joint_count: int

    def packed(self) -> np.ndarray:
        return np.packbits(self.bits)


@dataclass(frozen=True)
class CacheSteps:
    temp_step_C: float = 0.5
    outdoor_step_C: float = 1.0
    clock_step_min: int = 30


@dataclass(frozen=True)
class MaskProviderConfig:
    k: int = 50
    tau: float = 0.05
    feature_weights: np.ndarray | None = None   # None -> DEFAULT_FEATURE_WEIGHTS
    cache: CacheSteps = field(default_factory=CacheSteps)

    def __post_init__(self):
        if self.k <= 0:
            raise ValueError("k must be positive")
        # tau <= 1/4 guarantees non-empty per-zone sets: the four level
        # frequencies sum to 1, so the largest is always >= 0.25.
        if not 0.0 < self.tau <= 1.0 / N_LEVELS:
            raise ValueError(f"tau must lie in (0, {1.0 / N_LEVELS}]")
        if self.feature_weights is not None:
            w = np.asarray(self.feature_weights, dtype=float)
            if w.shape != (N_FEATURES,) or (w < 0).any():
                raise ValueError(f"feature weights must be {N_FEATURES} non-negative reals")

    def weights(self) -> np.ndarray:
        if self.feature_weights is None:
            return DEFAULT_FEATURE_WEIGHTS.copy()
        return np.asarray(self.feature_weights, dtype=float)


def weighted_distance(f1, f2, weights) -> float:
    """sqrt(sum_q w_q (f1_q - f2_q)^2)."""
    f1 = np.asarray(f1, dtype=float)
    f2 = np.asarray(f2, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if f1.shape != f2.shape or f1.shape != weights.shape:
        raise ValueError("feature vectors and weights must have equal length")
    if (weights < 0).any():
        raise ValueError("weights must be non-negative")
    return float(math.sqrt(np.sum(weights * (f1 - f2) ** 2)))


def knn_feasible_sets(
    dataset_features: np.ndarray,
    dataset_actions: np.ndarray,
    query_features: np.ndarray,
    config: MaskProviderConfig,
) -> FeasibleSets:
    """Feasible sets from the k nearest rows under the weighted distance.

    Ranking uses squared distances (monotone in the distance itself); ties
    at the k-th neighbor break by dataset row order via a stable sort. Per
    zone, a level is feasible when its neighborhood frequency reaches tau.
    """
    n = dataset_features.shape[0]
    if n == 0:
        raise ValueError("empty demonstration dataset")
    if config.k > n:
        raise ValueError(f"k={config.k} exceeds dataset size {n}")
    w = config.weights()
    d2 = np.sum(w * (dataset_features - query_features) ** 2, axis=1)
    order = np.argsort(d2, kind="stable")[: config.k]
    neighbor_actions = dataset_actions[order]
    per_zone = []
    for j in range(N_ZONES):
        counts = np.bincount(neighbor_actions[:, j], minlength=N_LEVELS)
        freqs = counts / config.k
        levels = tuple(int(l) for l in range(N_LEVELS) if freqs[l] >= config.tau)
        per_zone.append(levels)
    return FeasibleSets(per_zone=tuple(per_zone))


def joint_mask(sets: FeasibleSets) -> ActionMask:
    """16384-bit indicator of the product set; the popcount equals the
    product of the per-zone set sizes."""
    allowed = np.zeros((N_ZONES, N_LEVELS), dtype=np.bool_)
    for j, levels in enumerate(sets.per_zone):
        for l in levels:
            allowed[j, l] = True
    bits = kernels.expand_mask(allowed)
    count = 1
    for levels in sets.per_zone:
        count *= len(levels)
    return ActionMask(bits=bits, joint_count=count)


def remaining_percentage(mask: ActionMask) -> float:
    """Share of the joint action space the mask keeps, percent."""
    return mask.joint_count / N_ACTIONS * 100.0


class KnnMaskProvider:
    """Exact-scan kNN oracle over a normalized demonstration dataset.

    Read-only after construction; safe to share across threads.
    """

    def __init__(
        self,
        dataset_features: np.ndarray,
        dataset_actions: np.ndarray,
        config: MaskProviderConfig,
        scaler: FeatureScaler,
    ):
        dataset_features = np.asarray(dataset_features, dtype=float)
        dataset_actions = np.asarray(dataset_actions, dtype=np.int64)
        if dataset_features.ndim != 2 or dataset_features.shape[1] != N_FEATURES:
            raise ValueError(f"dataset features must be (N, {N_FEATURES})")
        if dataset_actions.shape != (dataset_features.shape[0], N_ZONES):
            raise ValueError("dataset actions must be (N, 7)")
        if config.k > dataset_features.shape[0]:
            raise ValueError("k exceeds dataset size")
        self.features = dataset_features
        self.actions = dataset_actions
        self.config = config
        self.scaler = scaler

    @classmethod
    def from_log(cls, log, config: MaskProviderConfig, scaler: FeatureScaler | None = None):
        raw = log.feature_matrix()
        if scaler is None:
            scaler = FeatureScaler.from_feature_matrix(raw)
        feats = np.stack([scaler.transform(r) for r in raw])
        return cls(feats, log.fan_modes, config, scaler)

    def feasible_sets_for_features(self, query_features: np.ndarray) -> FeasibleSets:
        return knn_feasible_sets(self.features, self.actions, query_features, self.config)

    def feasible_sets(self, state: BuildingState) -> FeasibleSets:
        return self.feasible_sets_for_features(self.scaler.transform(raw_features(state)))


class FullMaskProvider:
    """Returns the unconstrained level sets (vanilla control path)."""

    def feasible_sets(self, state: BuildingState) -> FeasibleSets:
        return FeasibleSets.full()


class CachedMaskProvider:
    """Discretized-key cache in front of a provider.

    On a miss the wrapped provider is evaluated at the bucket representative
    state reconstructed from the key, so hits and misses agree for every
    state that maps to the same bucket; the approximation is entirely in the
    key, never silent corruption of a stored value.
    """

    def __init__(self, provider, steps: CacheSteps | None = None):
        self.provider = provider
        self.steps = steps or CacheSteps()
        self._cache: dict[tuple, FeasibleSets] = {}
        self.hits = 0
        self.misses = 0

    def __len__(self) -> int:
        return len(self._cache)

    def key(self, state: BuildingState) -> tuple:
        s = self.steps
        return (
            tuple(int(math.floor(t / s.temp_step_C)) for t in state.zone_temps_C),
            tuple(int(n) for n in state.occupancy),
            int(math.floor(state.outdoor_temp_C / s.outdoor_step_C)),
            state.prev_action.flat_index,
            int(state.clock_min // s.clock_step_min),
        )

    def representative(self, key: tuple) -> BuildingState:
        temps_k, occ, out_k, prev_idx, clock_k = key
        s = self.steps
        return BuildingState(
            zone_temps_C=np.array([k * s.temp_step_C for k in temps_k]),
            occupancy=np.array(occ, dtype=np.int64),
            outdoor_temp_C=out_k * s.outdoor_step_C,
            prev_action=JointAction.from_index(prev_idx),
            clock_min=clock_k * s.clock_step_min,
        )

    def feasible_sets(self, state: BuildingState) -> FeasibleSets:
        key = self.key(state)
        hit = self._cache.get(key)
        if hit is not None:
            self.hits += 1
            return hit
        sets = self.provider.feasible_sets(self.representative(key))
        self._cache[key] = sets
        self.misses += 1
        return sets

    def warm(self, states) -> int:
        """Populate the cache from an iterable of states (e.g. a demo day)."""
        before = len(self._cache)
        for st in states:
            key = self.key(st)
            if key not in self._cache:
                self._cache[key] = self.provider.feasible_sets(self.representative(key))
        return len(self._cache) - before

    def hit_rate_pct(self) -> float:
        total = self.hits + self.misses
        return 100.0 * self.hits / total if total else 0.0

    def reset_counters(self) -> None:
        self.hits = 0
        self.misses = 0
