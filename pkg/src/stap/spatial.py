"""Per-frame key-object detection behind pluggable backends, plus IoU utilities."""

from __future__ import annotations

import enum
import json
import logging
import os
import threading
import time
from dataclasses import dataclass
from itertools import product
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .model import (
    BoundingBox,
    Detection,
    Frame,
    KeyObjectClass,
    SequenceWindow,
    SpatialResult,
    _ParseMixin,
)

log = logging.getLogger(__name__)


class BackendError(RuntimeError):
    """An inference backend failed; carries the frame or window it failed on."""

    def __init__(self, message: str, frame_index: int | None = None, window_index: int | None = None):
        super().__init__(message)
        self.frame_index = frame_index
        self.window_index = window_index


class TraceFormatError(ValueError):
    pass


class FrameSelection(_ParseMixin, enum.Enum):
    EVENLY_SPACED = "evenly-spaced"
    FIRST = "first"
    ALL = "all"


@dataclass(frozen=True)
class SpatialConfig:
    confidence_threshold: float = 0.25
    frames_per_window: int = 3
    frame_selection: FrameSelection = FrameSelection.EVENLY_SPACED

    def __post_init__(self) -> None:
        object.__setattr__(self, "frame_selection", FrameSelection.parse(self.frame_selection))
        if not 0.0 <= self.confidence_threshold <= 1.0:
            raise ValueError(f"confidence_threshold out of [0,1]: {self.confidence_threshold}")
        if self.frames_per_window < 1:
            raise ValueError(f"frames_per_window must be >= 1, got {self.frames_per_window}")

    @classmethod
    def all_frames(cls, confidence_threshold: float = 0.25) -> "SpatialConfig":
        return cls(confidence_threshold, frames_per_window=1, frame_selection=FrameSelection.ALL)

    def to_dict(self) -> dict:
        return {
            "confidence_threshold": self.confidence_threshold,
            "frames_per_window": self.frames_per_window,
            "frame_selection": self.frame_selection.value,
        }


# --------------------------------------------------------------------------
# geometry


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes; 0 when the union has no area."""
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    inter = iw * ih if iw > 0 and ih > 0 else 0.0
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return min(1.0, max(0.0, inter / union))


def selected_positions(window_size: int, cfg: SpatialConfig) -> list[int]:
    """Positions inside a window that the spatial stage analyzes."""
    if cfg.frame_selection is FrameSelection.ALL:
        return list(range(window_size))
    k = min(cfg.frames_per_window, window_size)
    if cfg.frame_selection is FrameSelection.FIRST:
        return list(range(k))
    return [i * window_size // k for i in range(k)]


# --------------------------------------------------------------------------
# backends


class SpatialBackend:
    """Interface: ``detect(frame) -> list[Detection]``."""

    has_pose: bool = False

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.calls = 0

    def _count(self) -> None:
        with self._lock:
            self.calls += 1

    def detect(self, frame: Frame) -> list[Detection]:
        raise NotImplementedError

    def describe(self) -> str:
        return type(self).__name__


class NullSpatialBackend(SpatialBackend):
    def detect(self, frame: Frame) -> list[Detection]:
        self._count()
        return []

    def describe(self) -> str:
        return "none"


def load_detection_trace(path: str | os.PathLike) -> dict[int, tuple[Detection, ...]]:
    """Parse a JSON Lines detection trace; fails fast on any malformed record."""
    table: dict[int, list[Detection]] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                frame = rec["frame"]
                if not isinstance(frame, int) or isinstance(frame, bool) or frame < 0:
                    raise ValueError(f"bad frame index {frame!r}")
                dets = [Detection.from_dict(d) for d in rec["detections"]]
            except (ValueError, KeyError, TypeError, IndexError) as exc:
                raise TraceFormatError(f"{path}:{lineno}: {exc}") from exc
            table.setdefault(frame, []).extend(dets)
    return {k: tuple(v) for k, v in table.items()}


class TraceSpatialBackend(SpatialBackend):
    """Replays recorded detections keyed by source frame index."""

    def __init__(self, path: str | os.PathLike | None = None, table: dict[int, Iterable[Detection]] | None = None):
        super().__init__()
        self.path = str(path) if path is not None else None
        if table is None:
            if path is None:
                raise ValueError("trace backend needs a path or a table")
            table = load_detection_trace(path)
        self.table = {int(k): tuple(v) for k, v in table.items()}
        self.has_pose = any(d.keypoints is not None for ds in self.table.values() for d in ds)

    def detect(self, frame: Frame) -> list[Detection]:
        self._count()
        return list(self.table.get(frame.index, ()))

    def describe(self) -> str:
        return f"trace:{self.path}" if self.path else "trace:<memory>"


def red_region(pixels: np.ndarray, min_fraction: float = 0.005) -> BoundingBox | None:
    """Bounding box of red-dominant pixels, or None when they are too few."""
    p = pixels.astype(np.int16)
    r, g, b = p[..., 0], p[..., 1], p[..., 2]
    mask = (r >= 128) & (r - g >= 64) & (r - b >= 64)
    if mask.sum() < max(1, min_fraction * mask.size):
        return None
    ys, xs = np.nonzero(mask)
    return BoundingBox(float(xs.min()), float(ys.min()), float(xs.max() + 1), float(ys.max() + 1))


def rule_red_flame(frame: Frame) -> list[Detection]:
    box = red_region(frame.pixels)
    if box is None:
        return []
    return [Detection(KeyObjectClass.FLAME, 0.9, box)]


def rule_none(frame: Frame) -> list[Detection]:
    return []


SPATIAL_RULES: dict[str, Callable[[Frame], list[Detection]]] = {
    "red-flame": rule_red_flame,
    "none": rule_none,
}


class SyntheticSpatialBackend(SpatialBackend):
    """Sleeps ``latency_ms`` per call, then applies a content rule."""

    def __init__(self, latency_ms: float = 0.0, rule: str = "red-flame"):
        super().__init__()
        if rule not in SPATIAL_RULES:
            raise ValueError(f"unknown spatial rule {rule!r}; choose from {sorted(SPATIAL_RULES)}")
        if latency_ms < 0:
            raise ValueError("latency_ms must be >= 0")
        self.latency_ms = float(latency_ms)
        self.rule = rule

    def detect(self, frame: Frame) -> list[Detection]:
        self._count()
        if self.latency_ms:
            time.sleep(self.latency_ms / 1000.0)
        return SPATIAL_RULES[self.rule](frame)

    def describe(self) -> str:
        return f"synthetic:latency={self.latency_ms:g},rule={self.rule}"


def parse_synthetic_spec(spec: str) -> dict[str, str]:
    """Parse ``"50"`` or ``"latency=50,rule=red-flame"`` into a dict."""
    out: dict[str, str] = {}
    for part in filter(None, (p.strip() for p in spec.split(","))):
        if "=" in part:
            k, v = part.split("=", 1)
            out[k.strip()] = v.strip()
        else:
            out["latency"] = part
    return out


def build_spatial_backend(spec: str | None, base_dir: str | os.PathLike | None = None) -> SpatialBackend:
    """Build a backend from ``trace:FILE``, ``synthetic:SPEC`` or ``none``."""
    if spec is None or spec.strip().lower() in ("", "none"):
        return NullSpatialBackend()
    kind, _, arg = spec.partition(":")
    kind = kind.strip().lower()
    if kind == "trace":
        path = Path(arg)
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        return TraceSpatialBackend(path)
    if kind == "synthetic":
        opts = parse_synthetic_spec(arg)
        unknown = set(opts) - {"latency", "rule"}
        if unknown:
            raise ValueError(f"unknown synthetic spatial option(s): {sorted(unknown)}")
        return SyntheticSpatialBackend(float(opts.get("latency", 0)), opts.get("rule", "red-flame"))
    raise ValueError(f"unknown spatial backend spec {spec!r}")


# --------------------------------------------------------------------------
# window-level analysis


def analyze_window(w: SequenceWindow, backend: SpatialBackend, cfg: SpatialConfig) -> SpatialResult:
    """
    Run ``backend.detect`` on the selected frames of ``w``, sequentially.

    Any backend failure voids the whole window (raises BackendError).
    """
    seen: dict[int, Frame] = {}
    for pos in selected_positions(len(w), cfg):
        f = w.frames[pos]
        seen.setdefault(f.index, f)
    out: dict[int, tuple[Detection, ...]] = {}
    for idx, f in seen.items():
        try:
            dets = backend.detect(f)
        except BackendError as exc:
            raise BackendError(str(exc), frame_index=idx, window_index=w.window_index) from exc
        except Exception as exc:
            raise BackendError(
                f"spatial backend failed on frame {idx}: {exc}", frame_index=idx, window_index=w.window_index
            ) from exc
        out[idx] = tuple(d for d in dets if d.confidence >= cfg.confidence_threshold)
    return SpatialResult(w.window_index, w.source_span, out)


def max_person_gun_iou(r: SpatialResult) -> float:
    best = 0.0
    for dets in r.detections.values():
        guns = [d.box for d in dets if d.object_class is KeyObjectClass.FIREARM]
        people = [d.box for d in dets if d.object_class is KeyObjectClass.PERSON]
        for g, p in product(guns, people):
            best = max(best, iou(g, p))
    return best


def person_gun_gate(r: SpatialResult) -> bool:
    """True iff some analyzed frame holds a firearm overlapping a person (IoU > 0)."""
    return max_person_gun_iou(r) > 0.0


def key_object_summary(r: SpatialResult) -> frozenset[KeyObjectClass]:
    return frozenset(d.object_class for d in r.all_detections())
