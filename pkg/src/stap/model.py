"""
Domain types shared by every pipeline stage.

All types are immutable after construction. Pixel buffers are numpy
``uint8`` arrays of shape ``(height, width, 3)`` marked read-only.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

import numpy as np

MODEL_SIZE = 112
DEFAULT_WINDOW_SIZE = 15
COCO_JOINTS = 17


class InvalidFrame(ValueError):
    """Raised for frames with an inconsistent or degenerate pixel buffer."""


class _ParseMixin:
    @classmethod
    def parse(cls, text: str | "_ParseMixin"):
        if isinstance(text, cls):
            return text
        key = str(text).strip().lower().replace("_", "-")
        for member in cls:  # type: ignore[attr-defined]
            if member.value == key or member.name.lower().replace("_", "") == key.replace("-", ""):
                return member
        raise ValueError(f"unknown {cls.__name__}: {text!r}")

    def __str__(self) -> str:
        return self.value  # type: ignore[attr-defined]


class AnomalyClass(_ParseMixin, enum.Enum):
    FIGHT = "fight"
    GUNSHOT = "gunshot"
    FIRE = "fire"
    NORMAL = "normal"

    @property
    def title(self) -> str:
        return self.value.capitalize()

    @property
    def is_anomaly(self) -> bool:
        return self is not AnomalyClass.NORMAL


ANOMALY_ORDER: tuple[AnomalyClass, ...] = tuple(AnomalyClass)
PROFILE_4 = ANOMALY_ORDER
PROFILE_3 = (AnomalyClass.FIGHT, AnomalyClass.GUNSHOT, AnomalyClass.NORMAL)


def class_profile(n: int | str) -> tuple[AnomalyClass, ...]:
    """Return the ordered class list for the 3- or 4-class profile."""
    n = int(n)
    if n == 4:
        return PROFILE_4
    if n == 3:
        return PROFILE_3
    raise ValueError(f"class profile must be 3 or 4, got {n}")


class KeyObjectClass(_ParseMixin, enum.Enum):
    PERSON = "person"
    FIREARM = "firearm"
    FLAME = "flame"
    SMOKE = "smoke"


_ASSOCIATED = {
    KeyObjectClass.PERSON: AnomalyClass.FIGHT,
    KeyObjectClass.FIREARM: AnomalyClass.GUNSHOT,
    KeyObjectClass.FLAME: AnomalyClass.FIRE,
    KeyObjectClass.SMOKE: AnomalyClass.FIRE,
}


def associated_anomaly(k: KeyObjectClass) -> AnomalyClass:
    """Anomaly made plausible by the presence of key object ``k``."""
    return _ASSOCIATED[k]


class PredictionSource(_ParseMixin, enum.Enum):
    TEMPORAL = "temporal"
    SPATIAL_OVERRIDE = "spatial-override"
    TEMPORAL_ON_SERIAL = "temporal-on-serial"


@dataclass(frozen=True, slots=True)
class BoundingBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        if not (self.x_min <= self.x_max and self.y_min <= self.y_max):
            raise ValueError(f"invalid box {self.as_list()}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x_min + self.x_max) / 2, (self.y_min + self.y_max) / 2)

    def contains(self, x: float, y: float) -> bool:
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max

    def as_list(self) -> list[float]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]

    @classmethod
    def from_list(cls, values: Iterable[float]) -> "BoundingBox":
        vals = [float(v) for v in values]
        if len(vals) != 4:
            raise ValueError(f"box needs 4 coordinates, got {len(vals)}")
        return cls(*vals)


@dataclass(frozen=True, slots=True)
class Keypoint:
    joint_id: int
    x: float
    y: float
    confidence: float = 1.0

    def __post_init__(self) -> None:
        if not 0 <= self.joint_id < COCO_JOINTS:
            raise ValueError(f"joint_id out of COCO-17 range: {self.joint_id}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"keypoint confidence out of [0,1]: {self.confidence}")

    def as_list(self) -> list[float]:
        return [self.joint_id, self.x, self.y, self.confidence]


@dataclass(frozen=True, slots=True)
class Detection:
    object_class: KeyObjectClass
    confidence: float
    box: BoundingBox
    keypoints: tuple[Keypoint, ...] | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence out of [0,1]: {self.confidence}")
        if self.keypoints is not None:
            if self.object_class is not KeyObjectClass.PERSON:
                raise ValueError("keypoints are only valid on person detections")
            ids = [k.joint_id for k in self.keypoints]
            if len(ids) != len(set(ids)):
                raise ValueError("duplicate joint_id in keypoint set")

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "class": self.object_class.value,
            "conf": self.confidence,
            "box": self.box.as_list(),
        }
        if self.keypoints is not None:
            d["keypoints"] = [k.as_list() for k in self.keypoints]
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Detection":
        kps = d.get("keypoints")
        keypoints = None
        if kps is not None:
            keypoints = tuple(
                Keypoint(int(k[0]), float(k[1]), float(k[2]), float(k[3])) for k in kps
            )
        return cls(
            object_class=KeyObjectClass.parse(d["class"]),
            confidence=float(d["conf"]),
            box=BoundingBox.from_list(d["box"]),
            keypoints=keypoints,
        )


@dataclass(frozen=True, eq=False)
class Frame:
    """One decoded RGB8 image with its position in the source stream."""

    index: int
    timestamp: float
    pixels: np.ndarray

    def __post_init__(self) -> None:
        if self.index < 0:
            raise InvalidFrame(f"negative frame index {self.index}")
        px = self.pixels
        if px.dtype != np.uint8 or px.ndim != 3 or px.shape[2] != 3:
            raise InvalidFrame(
                f"pixels must be uint8 (h, w, 3), got {px.dtype} {px.shape}"
            )
        if px.flags.writeable:
            px = px.copy()
            px.flags.writeable = False
            object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def size(self) -> tuple[int, int]:
        return (self.width, self.height)

    def with_pixels(self, pixels: np.ndarray) -> "Frame":
        return Frame(self.index, self.timestamp, pixels)

    def same_as(self, other: "Frame") -> bool:
        return (
            self.index == other.index
            and self.timestamp == other.timestamp
            and np.array_equal(self.pixels, other.pixels)
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "index": self.index,
            "timestamp": self.timestamp,
            "width": self.width,
            "height": self.height,
        }


@dataclass(frozen=True, eq=False)
class SequenceWindow:
    """
    An ordered run of frames forming one temporal prediction unit.

    ``padded`` counts trailing frames that repeat the last real frame
    (tail padding); those repeat its index, so strict index increase only
    holds over the first ``len(frames) - padded`` frames.
    """

    window_index: int
    frames: tuple[Frame, ...]
    padded: int = 0

    def __post_init__(self) -> None:
        if not self.frames:
            raise ValueError("window must contain at least one frame")
        object.__setattr__(self, "frames", tuple(self.frames))
        real = self.frames[: len(self.frames) - self.padded]
        for a, b in zip(real, real[1:]):
            if b.index <= a.index:
                raise ValueError("frame indices must strictly increase within a window")
        sizes = {f.size for f in self.frames}
        if len(sizes) != 1:
            raise ValueError(f"mixed frame sizes in window: {sorted(sizes)}")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def source_span(self) -> tuple[int, int]:
        return (self.frames[0].index, self.frames[-1].index)

    @property
    def frame_size(self) -> tuple[int, int]:
        return self.frames[0].size

    @property
    def is_model_space(self) -> bool:
        return self.frame_size == (MODEL_SIZE, MODEL_SIZE)

    @property
    def t_start_ms(self) -> float:
        return self.frames[0].timestamp

    def with_frames(self, frames: Iterable[Frame]) -> "SequenceWindow":
        return SequenceWindow(self.window_index, tuple(frames), self.padded)

    def same_as(self, other: "SequenceWindow") -> bool:
        return (
            self.window_index == other.window_index
            and self.padded == other.padded
            and len(self) == len(other)
            and all(a.same_as(b) for a, b in zip(self.frames, other.frames))
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "window_index": self.window_index,
            "source_span": list(self.source_span),
            "frames": [f.index for f in self.frames],
            "padded": self.padded,
        }


def _normalize_scores(scores: Mapping[AnomalyClass, float]) -> dict[AnomalyClass, float]:
    total = float(sum(scores.values()))
    if total <= 0 or not np.isfinite(total):
        raise ValueError(f"scores cannot be normalized: {dict(scores)}")
    return {c: float(v) / total for c, v in scores.items()}


def argmax_class(scores: Mapping[AnomalyClass, float]) -> AnomalyClass:
    """Class with the maximal score; ties go to the earliest in enumeration order."""
    best = None
    for cls in ANOMALY_ORDER:
        if cls in scores and (best is None or scores[cls] > scores[best]):
            best = cls
    if best is None:
        raise ValueError("empty score map")
    return best


@dataclass(frozen=True)
class TemporalResult:
    scores: Mapping[AnomalyClass, float]

    def __post_init__(self) -> None:
        scores = {AnomalyClass.parse(k): float(v) for k, v in self.scores.items()}
        if any(v < 0 for v in scores.values()):
            raise ValueError(f"negative score in {scores}")
        if abs(sum(scores.values()) - 1.0) > 1e-6:
            raise ValueError(f"scores must sum to 1 within 1e-6, got {sum(scores.values())}")
        ordered = {c: scores[c] for c in ANOMALY_ORDER if c in scores}
        object.__setattr__(self, "scores", ordered)

    @classmethod
    def from_raw(cls, scores: Mapping[AnomalyClass, float]) -> "TemporalResult":
        return cls(_normalize_scores({AnomalyClass.parse(k): v for k, v in scores.items()}))

    @property
    def argmax_class(self) -> AnomalyClass:
        return argmax_class(self.scores)

    def to_dict(self) -> dict[str, Any]:
        return {
            "scores": {c.value: v for c, v in self.scores.items()},
            "argmax_class": self.argmax_class.value,
        }


@dataclass(frozen=True)
class SpatialResult:
    """Detections for the analyzed frames of one window, keyed by source frame index."""

    window_index: int
    source_span: tuple[int, int]
    detections: Mapping[int, tuple[Detection, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        lo, hi = self.source_span
        dets = {}
        for idx in sorted(self.detections):
            if not lo <= idx <= hi:
                raise ValueError(f"frame {idx} outside window span {self.source_span}")
            dets[int(idx)] = tuple(self.detections[idx])
        object.__setattr__(self, "detections", dets)

    @property
    def analyzed_frames(self) -> list[int]:
        return list(self.detections)

    def all_detections(self) -> Iterable[Detection]:
        for dets in self.detections.values():
            yield from dets

    def to_dict(self) -> dict[str, Any]:
        return {
            "window_index": self.window_index,
            "source_span": list(self.source_span),
            "frames": {
                str(i): [d.to_dict() for d in dets] for i, dets in self.detections.items()
            },
        }


@dataclass(frozen=True)
class AnomalyPrediction:
    window_index: int
    label: AnomalyClass
    source: PredictionSource
    scores: Mapping[AnomalyClass, float] = field(default_factory=dict)
    latency_ms: Mapping[str, float] = field(default_factory=dict)
    t_start_ms: float = 0.0

    def __post_init__(self) -> None:
        if self.source is PredictionSource.SPATIAL_OVERRIDE and self.label is AnomalyClass.NORMAL:
            raise ValueError("a spatial override cannot predict normal")
        if any(v < 0 for v in self.latency_ms.values()):
            raise ValueError(f"negative latency in {dict(self.latency_ms)}")

    def to_dict(self, timing: bool = True) -> dict[str, Any]:
        d: dict[str, Any] = {
            "window_index": self.window_index,
            "label": self.label.value,
            "source": self.source.value,
            "scores": {c.value: v for c, v in self.scores.items()},
            "t_start_ms": self.t_start_ms,
        }
        if timing:
            d["latency_ms"] = dict(self.latency_ms)
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "AnomalyPrediction":
        return cls(
            window_index=int(d["window_index"]),
            label=AnomalyClass.parse(d["label"]),
            source=PredictionSource.parse(d.get("source", "temporal")),
            scores={AnomalyClass.parse(k): float(v) for k, v in d.get("scores", {}).items()},
            latency_ms={k: float(v) for k, v in d.get("latency_ms", {}).items()},
            t_start_ms=float(d.get("t_start_ms", 0.0)),
        )
