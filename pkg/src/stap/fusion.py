"""Decision fusion of temporal and spatial verdicts for one window (parallel mode)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

from .model import (
    ANOMALY_ORDER,
    AnomalyClass,
    AnomalyPrediction,
    KeyObjectClass,
    PredictionSource,
    SpatialResult,
    TemporalResult,
    associated_anomaly,
)
from .spatial import key_object_summary, person_gun_gate


@dataclass(frozen=True)
class FusionPolicy:
    key_object_priority: tuple[AnomalyClass, ...] = (
        AnomalyClass.GUNSHOT,
        AnomalyClass.FIRE,
        AnomalyClass.FIGHT,
    )
    gate_required_for_gunshot: bool = True
    person_triggers_fight: bool = True

    def __post_init__(self) -> None:
        prio = tuple(AnomalyClass.parse(c) for c in self.key_object_priority)
        if len(set(prio)) != len(prio):
            raise ValueError(f"duplicate class in key_object_priority: {prio}")
        if AnomalyClass.NORMAL in prio:
            raise ValueError("key_object_priority cannot contain normal")
        object.__setattr__(self, "key_object_priority", prio)

    def ranking(self) -> tuple[AnomalyClass, ...]:
        """Priority list, completed by any missing anomaly class in enumeration order."""
        rest = [c for c in ANOMALY_ORDER if c.is_anomaly and c not in self.key_object_priority]
        return self.key_object_priority + tuple(rest)

    def to_dict(self) -> dict:
        return {
            "key_object_priority": [c.value for c in self.key_object_priority],
            "gate_required_for_gunshot": self.gate_required_for_gunshot,
            "person_triggers_fight": self.person_triggers_fight,
        }


def fuse_decision(
    flag: bool,
    temporal_class: AnomalyClass,
    objects: Iterable[KeyObjectClass],
    gate: bool,
    policy: FusionPolicy = FusionPolicy(),
) -> tuple[AnomalyClass, PredictionSource]:
    """The fusion rule over abstract inputs: temporal flag first, then key objects."""
    if flag:
        return temporal_class, PredictionSource.TEMPORAL
    candidates = set()
    for k in objects:
        anomaly = associated_anomaly(k)
        if anomaly is AnomalyClass.GUNSHOT and policy.gate_required_for_gunshot and not gate:
            continue
        if k is KeyObjectClass.PERSON and not policy.person_triggers_fight:
            continue
        candidates.add(anomaly)
    for c in policy.ranking():
        if c in candidates:
            return c, PredictionSource.SPATIAL_OVERRIDE
    return AnomalyClass.NORMAL, PredictionSource.TEMPORAL


def fuse(
    t: TemporalResult,
    flag: bool,
    s: SpatialResult,
    policy: FusionPolicy = FusionPolicy(),
    latency_ms: Mapping[str, float] | None = None,
    t_start_ms: float = 0.0,
) -> AnomalyPrediction:
    label, source = fuse_decision(
        flag, t.argmax_class, key_object_summary(s), person_gun_gate(s), policy
    )
    return AnomalyPrediction(
        window_index=s.window_index,
        label=label,
        source=source,
        scores=dict(t.scores),
        latency_ms=dict(latency_ms or {}),
        t_start_ms=t_start_ms,
    )
