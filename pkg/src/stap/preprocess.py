"""
Serial-mode frame enrichment: box masking and skeleton rendering.

Pixel geometry: pixel ``(x, y)`` covers the unit square whose centre is
``(x + 0.5, y + 0.5)``. A pixel is inside a box when its centre satisfies
``x_min <= cx < x_max`` (same for y), and belongs to a limb when its centre
lies within ``thickness / 2`` of the limb segment.
"""

from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .model import Detection, Frame, KeyObjectClass, SequenceWindow, SpatialResult, _ParseMixin

# COCO-17 limb list (0-based joint ids): legs, hips/torso, arms, head.
COCO_SKELETON: tuple[tuple[int, int], ...] = (
    (15, 13), (13, 11), (16, 14), (14, 12), (11, 12),
    (5, 11), (6, 12), (5, 6), (5, 7), (6, 8),
    (7, 9), (8, 10), (1, 2), (0, 1), (0, 2),
    (1, 3), (2, 4), (3, 5), (4, 6),
)

LIMB_COLORS: tuple[tuple[int, int, int], ...] = (
    (255, 128, 0), (255, 153, 51), (255, 178, 102), (230, 230, 0), (255, 153, 255),
    (153, 204, 255), (255, 102, 255), (255, 51, 255), (102, 178, 255), (51, 153, 255),
    (255, 153, 153), (255, 102, 102), (255, 51, 51), (153, 255, 153), (102, 255, 102),
    (51, 255, 51), (0, 255, 0), (0, 0, 255), (255, 0, 0),
)

_EPS = 1e-9


class PreprocessVariant(_ParseMixin, enum.Enum):
    IDENTITY = "identity"
    MASK_KEEP_ORIGINAL = "mask-keep"
    MASK_BLACK_FALLBACK = "mask-black"
    SKELETON_ON_BACKGROUND = "skeleton-bg"
    SKELETON_ON_BLACK = "skeleton-black"


class MaskFallback(_ParseMixin, enum.Enum):
    KEEP_ORIGINAL = "keep-original"
    BLACK_FRAME = "black-frame"


class SkeletonMode(_ParseMixin, enum.Enum):
    ON_BACKGROUND = "on-background"
    ON_BLACK = "on-black"


@dataclass(frozen=True)
class SkeletonStyle:
    line_thickness_px: float = 2.0
    min_joint_conf: float = 0.3

    def __post_init__(self) -> None:
        if self.line_thickness_px <= 0:
            raise ValueError("line_thickness_px must be positive")
        if not 0.0 <= self.min_joint_conf <= 1.0:
            raise ValueError("min_joint_conf must lie in [0, 1]")


def box_pixel_range(lo: float, hi: float, limit: int) -> tuple[int, int]:
    """Half-open pixel range whose centres fall in ``[lo, hi)``, clipped to ``[0, limit)``."""
    start = math.ceil(lo - 0.5)
    stop = math.ceil(hi - 0.5)
    return max(0, min(limit, start)), max(0, min(limit, stop))


def box_mask(height: int, width: int, dets: Iterable[Detection]) -> np.ndarray:
    mask = np.zeros((height, width), dtype=bool)
    for d in dets:
        x0, x1 = box_pixel_range(d.box.x_min, d.box.x_max, width)
        y0, y1 = box_pixel_range(d.box.y_min, d.box.y_max, height)
        if x1 > x0 and y1 > y0:
            mask[y0:y1, x0:x1] = True
    return mask


def apply_mask(f: Frame, dets: Sequence[Detection], fallback: MaskFallback | str) -> Frame:
    """Zero every pixel outside the union of detection boxes."""
    fallback = MaskFallback.parse(fallback)
    if not dets:
        if fallback is MaskFallback.KEEP_ORIGINAL:
            return f
        return f.with_pixels(np.zeros_like(f.pixels))
    mask = box_mask(f.height, f.width, dets)
    return f.with_pixels(np.where(mask[..., None], f.pixels, np.uint8(0)))


def _draw_segment(canvas: np.ndarray, p: tuple[float, float], q: tuple[float, float],
                  radius: float, color: tuple[int, int, int]) -> None:
    h, w = canvas.shape[:2]
    x0 = max(0, math.floor(min(p[0], q[0]) - radius - 0.5))
    x1 = min(w, math.ceil(max(p[0], q[0]) + radius + 0.5) + 1)
    y0 = max(0, math.floor(min(p[1], q[1]) - radius - 0.5))
    y1 = min(h, math.ceil(max(p[1], q[1]) + radius + 0.5) + 1)
    if x1 <= x0 or y1 <= y0:
        return
    cx = np.arange(x0, x1, dtype=np.float64)[None, :] + 0.5
    cy = np.arange(y0, y1, dtype=np.float64)[:, None] + 0.5
    dx, dy = q[0] - p[0], q[1] - p[1]
    seg2 = dx * dx + dy * dy
    if seg2 > 0:
        t = np.clip(((cx - p[0]) * dx + (cy - p[1]) * dy) / seg2, 0.0, 1.0)
    else:
        t = np.zeros((1, 1))
    ex = cx - (p[0] + t * dx)
    ey = cy - (p[1] + t * dy)
    hit = ex * ex + ey * ey <= radius * radius + _EPS
    canvas[y0:y1, x0:x1][hit] = color


def draw_skeletons(canvas: np.ndarray, persons: Sequence[Detection], style: SkeletonStyle) -> int:
    """Draw limbs in person order then fixed edge order; returns skipped person count."""
    skipped = 0
    radius = style.line_thickness_px / 2.0
    for person in persons:
        if person.keypoints is None:
            skipped += 1
            continue
        joints = {k.joint_id: k for k in person.keypoints}
        for (a, b), color in zip(COCO_SKELETON, LIMB_COLORS):
            ka, kb = joints.get(a), joints.get(b)
            if ka is None or kb is None:
                continue
            if ka.confidence < style.min_joint_conf or kb.confidence < style.min_joint_conf:
                continue
            _draw_segment(canvas, (ka.x, ka.y), (kb.x, kb.y), radius, color)
    return skipped


def render_skeleton(
    f: Frame,
    persons: Sequence[Detection],
    mode: SkeletonMode | str,
    style: SkeletonStyle = SkeletonStyle(),
    diagnostics: Counter | None = None,
) -> Frame:
    mode = SkeletonMode.parse(mode)
    if mode is SkeletonMode.ON_BLACK:
        canvas = np.zeros_like(f.pixels)
    else:
        canvas = f.pixels.copy()
    skipped = draw_skeletons(canvas, persons, style)
    if diagnostics is not None and skipped:
        diagnostics["persons_without_keypoints"] += skipped
    if mode is SkeletonMode.ON_BACKGROUND and not persons:
        return f
    return f.with_pixels(canvas)


def held_detections(w: SequenceWindow, r: SpatialResult) -> list[tuple[Detection, ...]]:
    """Per-frame detections; unanalyzed frames reuse the nearest preceding analyzed frame."""
    analyzed = sorted(r.detections)
    out = []
    j = -1
    current: tuple[Detection, ...] = ()
    for f in w.frames:
        while j + 1 < len(analyzed) and analyzed[j + 1] <= f.index:
            j += 1
            current = r.detections[analyzed[j]]
        out.append(current if j >= 0 else ())
    return out


def enrich_window(
    w: SequenceWindow,
    r: SpatialResult,
    v: PreprocessVariant | str,
    style: SkeletonStyle = SkeletonStyle(),
    diagnostics: Counter | None = None,
) -> SequenceWindow:
    v = PreprocessVariant.parse(v)
    if v is PreprocessVariant.IDENTITY:
        return w
    per_frame = held_detections(w, r)
    frames = []
    for f, dets in zip(w.frames, per_frame):
        if v is PreprocessVariant.MASK_KEEP_ORIGINAL:
            frames.append(apply_mask(f, dets, MaskFallback.KEEP_ORIGINAL))
        elif v is PreprocessVariant.MASK_BLACK_FALLBACK:
            frames.append(apply_mask(f, dets, MaskFallback.BLACK_FRAME))
        else:
            persons = [d for d in dets if d.object_class is KeyObjectClass.PERSON]
            mode = (SkeletonMode.ON_BLACK if v is PreprocessVariant.SKELETON_ON_BLACK
                    else SkeletonMode.ON_BACKGROUND)
            frames.append(render_skeleton(f, persons, mode, style, diagnostics))
    return w.with_frames(frames)
