"""
Deterministic synthetic fixture set: packed videos, detection/score traces,
ground truth and ready-to-run configs.

Everything derives from ``numpy.random.default_rng(seed)`` and fixed
patterns, so regenerating with the same seed gives byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import os
from itertools import combinations
from pathlib import Path
from typing import Any

import numpy as np

from .fusion import FusionPolicy, fuse_decision
from .ingest import write_packed_video
from .model import AnomalyClass, Frame, KeyObjectClass
from .spatial import rule_red_flame
from .temporal import leaning_scores

FPS = 30.0
FIXTURE_FILES = (
    "constant.stap", "checkerboard.stap", "red_quadrant.stap", "motion.stap",
    "fixture30.stap", "empty_spatial.jsonl", "fixture30_temporal.jsonl",
    "red_quadrant_spatial.jsonl", "fusion.stap", "fusion_spatial.jsonl",
    "fusion_temporal.jsonl", "fusion_cells.jsonl", "fusion_truth.csv",
    "pose.stap", "pose_spatial.jsonl", "parallel.ini", "serial.ini",
)
FUSION_FRAME = 32

# boxes on a 32x32 frame
PERSON_BOX = [4.0, 4.0, 20.0, 28.0]
GUN_OVERLAP = [16.0, 10.0, 26.0, 16.0]
GUN_EDGE = [20.0, 10.0, 28.0, 16.0]  # shares the x=20 edge with PERSON_BOX
FLAME_BOX = [2.0, 20.0, 12.0, 30.0]
SMOKE_BOX = [18.0, 0.0, 30.0, 8.0]


def constant_frames(n: int, width: int = 64, height: int = 48, color=(90, 120, 150)) -> list[np.ndarray]:
    return [np.full((height, width, 3), color, dtype=np.uint8) for _ in range(n)]


def checkerboard(size: int = 224, cell: int = 1) -> np.ndarray:
    y, x = np.indices((size, size))
    board = (((x // cell) + (y // cell)) % 2 * 255).astype(np.uint8)
    return np.repeat(board[..., None], 3, axis=2)


def red_quadrant(size: int = 112) -> np.ndarray:
    img = np.zeros((size, size, 3), dtype=np.uint8)
    img[: size // 2, : size // 2] = (255, 0, 0)
    return img


def alternating_frames(n: int, size: int = 64) -> list[np.ndarray]:
    black = np.zeros((size, size, 3), dtype=np.uint8)
    white = np.full((size, size, 3), 255, dtype=np.uint8)
    return [white if i % 2 else black for i in range(n)]


def fusion_cells() -> list[tuple[bool, frozenset[KeyObjectClass], bool]]:
    """Every realizable (temporal flag, key-object set, gate) combination."""
    objs = list(KeyObjectClass)
    subsets = [frozenset(c) for r in range(len(objs) + 1) for c in combinations(objs, r)]
    cells = []
    for flag in (False, True):
        for s in subsets:
            gates = (False, True) if {KeyObjectClass.PERSON, KeyObjectClass.FIREARM} <= s else (False,)
            for gate in gates:
                cells.append((flag, s, gate))
    return cells


def _cell_detections(objects: frozenset[KeyObjectClass], gate: bool, rng: np.random.Generator) -> list[dict]:
    dets = []

    def conf() -> float:
        return round(float(rng.uniform(0.5, 1.0)), 4)

    if KeyObjectClass.PERSON in objects:
        dets.append({"class": "person", "conf": conf(), "box": PERSON_BOX})
    if KeyObjectClass.FIREARM in objects:
        box = GUN_OVERLAP if gate else GUN_EDGE
        dets.append({"class": "firearm", "conf": conf(), "box": box})
    if KeyObjectClass.FLAME in objects:
        dets.append({"class": "flame", "conf": conf(), "box": FLAME_BOX})
    if KeyObjectClass.SMOKE in objects:
        dets.append({"class": "smoke", "conf": conf(), "box": SMOKE_BOX})
    # sub-threshold noise, always filtered at the default 0.25 threshold
    if rng.random() < 0.5:
        dets.append({"class": "person", "conf": round(float(rng.uniform(0.01, 0.2)), 4), "box": [0.0, 0.0, 3.0, 3.0]})
    return dets


def _jsonl(path: Path, records: list[dict]) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def _ini(text: str, path: Path) -> None:
    path.write_text(text.lstrip())


def demo_person_keypoints(cx: float, cy: float, scale: float = 1.0) -> list[list[float]]:
    """A standing COCO-17 figure around ``(cx, cy)`` for skeleton fixtures."""
    pts = {
        0: (0, -20), 1: (-2, -22), 2: (2, -22), 3: (-4, -21), 4: (4, -21),
        5: (-7, -14), 6: (7, -14), 7: (-10, -5), 8: (10, -5), 9: (-11, 3), 10: (11, 3),
        11: (-5, 2), 12: (5, 2), 13: (-6, 12), 14: (6, 12), 15: (-6, 22), 16: (6, 22),
    }
    return [[j, cx + dx * scale, cy + dy * scale, 0.9] for j, (dx, dy) in pts.items()]


def generate_fixtures(out_dir: str | os.PathLike, seed: int = 0) -> dict[str, Any]:
    """Write the fixture set into ``out_dir`` and return its manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    write_packed_video(out / "constant.stap", constant_frames(30), FPS)
    write_packed_video(out / "checkerboard.stap", [checkerboard()] * 4, FPS)
    rq = red_quadrant()
    write_packed_video(out / "red_quadrant.stap", [rq] * 30, FPS)
    write_packed_video(out / "motion.stap", alternating_frames(30), FPS)

    noise30 = [rng.integers(0, 256, (48, 64, 3), dtype=np.uint8) for _ in range(30)]
    write_packed_video(out / "fixture30.stap", noise30, FPS)
    (out / "empty_spatial.jsonl").write_text("")
    _jsonl(out / "fixture30_temporal.jsonl", [
        {"window": 0, "scores": {"fight": 0.6, "gunshot": 0.2, "fire": 0.1, "normal": 0.1}},
        {"window": 1, "scores": {"fight": 0.05, "gunshot": 0.05, "fire": 0.1, "normal": 0.8}},
    ])

    # recorded output of the synthetic red-flame rule on the red-quadrant video
    red_records = []
    for i in range(30):
        dets = rule_red_flame(Frame(i, i * 1000.0 / FPS, rq))
        red_records.append({"frame": i, "detections": [d.to_dict() for d in dets]})
    _jsonl(out / "red_quadrant_spatial.jsonl", red_records)

    # fusion coverage: one window per realizable truth-table cell
    cells = fusion_cells()
    n_frames = len(cells) * 15
    fusion_frames = [rng.integers(0, 256, (FUSION_FRAME, FUSION_FRAME, 3), dtype=np.uint8) for _ in range(n_frames)]
    write_packed_video(out / "fusion.stap", fusion_frames, FPS)
    spatial_recs, temporal_recs, truth_rows, cell_rows = [], [], [], []
    anomalies = [AnomalyClass.FIGHT, AnomalyClass.GUNSHOT, AnomalyClass.FIRE]
    policy = FusionPolicy()
    classes = tuple(AnomalyClass)
    for w, (flag, objects, gate) in enumerate(cells):
        spatial_recs.append({"frame": w * 15, "detections": _cell_detections(objects, gate, rng)})
        lead = anomalies[w % 3] if flag else AnomalyClass.NORMAL
        scores = leaning_scores(classes, lead, 0.55 if flag else 0.7)
        temporal_recs.append({"window": w, "scores": {c.value: round(v, 6) for c, v in scores.items()}})
        label, source = fuse_decision(flag, lead, objects, gate, policy)
        truth_rows.append(("fusion", w, label.value))
        cell_rows.append({
            "window": w,
            "flag": flag,
            "objects": sorted(k.value for k in objects),
            "gate": gate,
            "label": label.value,
            "source": source.value,
        })
    _jsonl(out / "fusion_spatial.jsonl", spatial_recs)
    _jsonl(out / "fusion_temporal.jsonl", temporal_recs)
    _jsonl(out / "fusion_cells.jsonl", cell_rows)
    with open(out / "fusion_truth.csv", "w") as fh:
        fh.write("video_id,window_index,label\n")
        for vid, w, label in truth_rows:
            fh.write(f"{vid},{w},{label}\n")

    # skeleton fixture: one person per frame, slowly walking
    pose_frames, pose_recs = [], []
    for i in range(30):
        pose_frames.append(np.full((96, 96, 3), 40, dtype=np.uint8))
        cx = 30.0 + i
        kps = demo_person_keypoints(cx, 48.0)
        pose_recs.append({"frame": i, "detections": [
            {"class": "person", "conf": 0.95, "box": [cx - 15, 20.0, cx + 15, 76.0], "keypoints": kps}
        ]})
    write_packed_video(out / "pose.stap", pose_frames, FPS)
    _jsonl(out / "pose_spatial.jsonl", pose_recs)

    _ini("""
[pipeline]
mode = parallel
max_inflight_windows = 2

[sampling]
frame_interval = 1
window_size = 15

[backends]
spatial = trace:fusion_spatial.jsonl
temporal = trace:fusion_temporal.jsonl
""", out / "parallel.ini")
    _ini("""
[pipeline]
mode = serial

[sampling]
window_size = 15

[preprocess]
variant = mask-black

[backends]
spatial = trace:fusion_spatial.jsonl
temporal = trace:fusion_temporal.jsonl
""", out / "serial.ini")

    files = sorted(FIXTURE_FILES)
    manifest = {
        "seed": seed,
        "fps": FPS,
        "files": {name: hashlib.sha256((out / name).read_bytes()).hexdigest() for name in files},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest
