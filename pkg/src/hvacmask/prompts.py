"""Prompt serialization, recommendation parsing and SFT dataset export.

The prompt/JSON pair is the wire format between the controller and whatever
produces feasible sets. ``serialize_prompt`` renders the recent five-step
observation window plus the instructions; ``parse_recommendations`` recovers
per-zone level sets from the two-field response object, with one error kind
per failure mode so callers can fall back to the full level set.
"""

import json
from pathlib import Path

from .environment import N_ZONES
from .masking import ALL_LEVELS, FeasibleSets, KnnMaskProvider, MaskProviderConfig

WINDOW = 5

_SYSTEM_LINES = [
    "You are a building-management assistant for a seven-zone office served by "
    "one fan coil unit (FCU) per zone.",
    "Objective: keep occupied zones thermally comfortable while avoiding "
    "unnecessary HVAC energy use.",
    "Domain knowledge:",
    "- Fan-speed levels: 0 = off, 1 = low, 2 = medium, 3 = high cooling intensity.",
    "- Zones 1-4 are thermally independent offices; zones 5-7 exchange heat "
    "with each other (5-6 and 6-7 are coupled).",
    "- Cooling demand follows occupancy: vacant zones rarely need conditioning.",
]

_FORMAT_LINES = [
    "Respond with a single JSON object with exactly two fields:",
    '- "analysis": a short free-text justification.',
    '- "recommendations": an object with keys "zone_1" ... "zone_7", each a '
    "non-empty list of feasible fan-speed levels drawn from [0, 1, 2, 3].",
    "Output the JSON object only, with no surrounding text.",
]


class RecommendationError(ValueError):
    """Base class for recommendation parsing failures."""


class MalformedRecommendation(RecommendationError):
    """Not valid JSON, or the recommendations field is missing/mistyped."""


class MissingZone(RecommendationError):
    pass


class EmptyLevelSet(RecommendationError):
    pass


class LevelOutOfRange(RecommendationError):
    pass


def _clock_text(clock_min: int) -> str:
    total = 9 * 60 + clock_min
    return f"{total // 60:02d}:{total % 60:02d}"


def serialize_prompt(window) -> str:
    """Deterministic prompt text for the most recent five control steps
    (oldest first, the last entry is the current state)."""
    window = list(window)
    if len(window) != WINDOW:
        raise ValueError(f"prompt window must contain exactly {WINDOW} states")
    lines = list(_SYSTEM_LINES)
    lines.append("")
    lines.append(f"Recent observations (last {WINDOW} control steps, 5-minute interval):")
    for step, st in enumerate(window):
        tag = "current" if step == WINDOW - 1 else f"t-{WINDOW - 1 - step}"
        lines.append(f"[{tag}] time {_clock_text(st.clock_min)}")
        lines.append(
            "  zone temperatures C: "
            + ", ".join(f"zone_{i + 1}={st.zone_temps_C[i]:.2f}" for i in range(N_ZONES))
        )
        lines.append(
            "  occupancy: "
            + ", ".join(f"zone_{i + 1}={int(st.occupancy[i])}" for i in range(N_ZONES))
        )
        lines.append(
            "  previous fan levels: "
            + ", ".join(f"zone_{i + 1}={st.prev_action.levels[i]}" for i in range(N_ZONES))
        )
        lines.append(f"  outdoor temperature C: {st.outdoor_temp_C:.2f}")
    lines.append("")
    lines.extend(_FORMAT_LINES)
    return "\n".join(lines)


def parse_recommendations(json_text: str) -> FeasibleSets:
    """Recover per-zone feasible sets from a response document. The analysis
    field is ignored. Raises a distinct error kind per failure mode."""
    try:
        doc = json.loads(json_text)
    except json.JSONDecodeError as exc:
        raise MalformedRecommendation(f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise MalformedRecommendation("top-level JSON value must be an object")
    rec = doc.get("recommendations")
    if not isinstance(rec, dict):
        raise MalformedRecommendation("missing or mistyped recommendations field")
    per_zone = []
    for i in range(1, N_ZONES + 1):
        key = f"zone_{i}"
        if key not in rec:
            raise MissingZone(f"recommendations missing {key}")
        levels = rec[key]
        if not isinstance(levels, list):
            raise MalformedRecommendation(f"{key}: levels must be a list")
        if not levels:
            raise EmptyLevelSet(f"{key}: empty level set")
        clean = []
        for l in levels:
            if isinstance(l, bool) or not isinstance(l, int):
                raise MalformedRecommendation(f"{key}: level {l!r} is not an integer")
            if l not in ALL_LEVELS:
                raise LevelOutOfRange(f"{key}: level {l} outside {list(ALL_LEVELS)}")
            clean.append(l)
        per_zone.append(tuple(sorted(set(clean))))
    return FeasibleSets(per_zone=tuple(per_zone))


def recommendations_payload(sets: FeasibleSets) -> dict:
    return {f"zone_{i + 1}": list(sets.per_zone[i]) for i in range(N_ZONES)}


def analysis_text(window, sets: FeasibleSets) -> str:
    """Fixed rule-based analysis: temperature trend, occupancy, pruning count."""
    first = float(window[0].zone_temps_C.mean())
    last = float(window[-1].zone_temps_C.mean())
    delta = last - first
    if delta > 0.05:
        trend = f"rising by {delta:.2f} C"
    elif delta < -0.05:
        trend = f"falling by {abs(delta):.2f} C"
    else:
        trend = "steady"
    occupants = int(window[-1].occupancy.sum())
    pruned = sum(4 - len(s) for s in sets.per_zone)
    return (
        f"Mean zone temperature over the window is {trend}. "
        f"Total occupancy is {occupants}. "
        f"Pruned {pruned} of {4 * N_ZONES} zone-level options."
    )


def export_sft_dataset(log, config: MaskProviderConfig, out_path) -> int:
    """Write one JSONL record per eligible step: the serialized prompt window
    as input, the templated analysis plus kNN-derived recommendations as the
    target. Windows never cross day boundaries. Returns the record count."""
    if len(log) < config.k + WINDOW:
        raise ValueError(
            f"log has {len(log)} rows; need at least k + {WINDOW} = {config.k + WINDOW}"
        )
    provider = KnnMaskProvider.from_log(log, config)
    day_firsts = log.day_start_indices()
    out_path = Path(out_path)
    count = 0
    with open(out_path, "w") as fh:
        for i in range(len(log)):
            if i - day_firsts[log.day_key(i)] < WINDOW - 1:
                continue
            window = [log.state_at(j) for j in range(i - WINDOW + 1, i + 1)]
            sets = provider.feasible_sets(window[-1])
            record = {
                "input": serialize_prompt(window),
                "target": {
                    "analysis": analysis_text(window, sets),
                    "recommendations": recommendations_payload(sets),
                },
            }
            fh.write(json.dumps(record) + "\n")
            count += 1
    return count
