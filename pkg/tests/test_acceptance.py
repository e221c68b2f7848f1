"""
Acceptance suite. Every criterion prints one ``PASS``/``FAIL`` line, visible
even without ``-s``; run with ``pytest tests/test_acceptance.py -v``.
"""

import itertools
import time

import numpy as np
import pytest

from stap.bench import run_bench
from stap.config import PipelineConfig
from stap.evaluation import score_labels
from stap.fusion import fuse, fuse_decision
from stap.ingest import SamplingPolicy, SyntheticSource, open_source, window_stream
from stap.model import (
    AnomalyClass,
    BoundingBox,
    Detection,
    KeyObjectClass,
    PredictionSource,
    SpatialResult,
    TemporalResult,
)
from stap.orchestrator import Pipeline
from stap.preprocess import MaskFallback, SkeletonMode, SkeletonStyle, apply_mask, render_skeleton
from stap.spatial import NullSpatialBackend, TraceSpatialBackend, iou
from stap.temporal import SyntheticTemporalBackend, TraceTemporalBackend

from test_preprocess import random_frame, random_person, reference_mask, reference_skeleton

F, G, X, N = AnomalyClass.FIGHT, AnomalyClass.GUNSHOT, AnomalyClass.FIRE, AnomalyClass.NORMAL
P, GUN, FLAME, SMOKE = KeyObjectClass.PERSON, KeyObjectClass.FIREARM, KeyObjectClass.FLAME, KeyObjectClass.SMOKE


@pytest.fixture
def verdict(capsys):
    def emit(n, text, ok):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {text}")
        assert ok, f"criterion {n}: {text}"
    return emit


# -- 1 ------------------------------------------------------------------------

def oracle_fusion(flag, temporal_class, objects, gate):
    if flag:
        return temporal_class, PredictionSource.TEMPORAL
    if GUN in objects and gate:
        return G, PredictionSource.SPATIAL_OVERRIDE
    if FLAME in objects or SMOKE in objects:
        return X, PredictionSource.SPATIAL_OVERRIDE
    if P in objects:
        return F, PredictionSource.SPATIAL_OVERRIDE
    return N, PredictionSource.TEMPORAL


def test_criterion_1_fusion_oracle(verdict):
    subsets = [frozenset(c) for r in range(5) for c in itertools.combinations(list(KeyObjectClass), r)]
    t0 = time.perf_counter()
    cells = list(itertools.product((False, True), subsets, (False, True)))
    agree = 0
    for flag, objects, gate in cells:
        cls = F if flag else N
        agree += fuse_decision(flag, cls, objects, gate) == oracle_fusion(flag, cls, objects, gate)
    elapsed = time.perf_counter() - t0
    verdict(1, f"{agree}/{len(cells)} fusion cells agree in {elapsed * 1000:.1f} ms",
            len(cells) == 64 and agree == 64 and elapsed < 1.0)


# -- 2 ------------------------------------------------------------------------

def random_box(rng):
    x0, x1 = sorted(float(v) for v in rng.uniform(-50, 150, 2))
    y0, y1 = sorted(float(v) for v in rng.uniform(-50, 150, 2))
    return BoundingBox(x0, y0, x1, y1)


def test_criterion_2_iou_properties(verdict):
    rng = np.random.default_rng(2)
    bad = 0
    for _ in range(10_000):
        a, b = random_box(rng), random_box(rng)
        v = iou(a, b)
        ok = v == iou(b, a) and 0.0 <= v <= 1.0
        if a.area > 0:
            ok = ok and abs(iou(a, a) - 1.0) <= 1e-12
        bad += not ok
    hand = iou(BoundingBox(0, 0, 10, 10), BoundingBox(5, 5, 15, 15))
    verdict(2, f"{10_000 - bad}/10000 random pairs hold; hand case {hand:.12f} vs {25 / 175:.12f}",
            bad == 0 and abs(hand - 25 / 175) <= 1e-9)


# -- 3 ------------------------------------------------------------------------

def test_criterion_3_gate_strictness(verdict):
    rng = np.random.default_rng(3)
    normal = TemporalResult({F: 0.1, G: 0.1, X: 0.1, N: 0.7})
    violations = trials = 0
    for _ in range(2000):
        x0, y0 = rng.integers(-20, 100, 2)
        w, h, gw, gh = rng.integers(1, 40, 4)
        person = BoundingBox(x0, y0, x0 + w, y0 + h)
        # firearm sharing exactly one edge or one corner of the person box
        side = rng.integers(0, 6)
        gx, gy = {
            0: (x0 + w, y0 + rng.integers(-gh + 1, h)),
            1: (x0 - gw, y0 + rng.integers(-gh + 1, h)),
            2: (x0 + rng.integers(-gw + 1, w), y0 + h),
            3: (x0 + rng.integers(-gw + 1, w), y0 - gh),
            4: (x0 + w, y0 + h),
            5: (x0 - gw, y0 - gh),
        }[int(side)]
        gun = BoundingBox(gx, gy, gx + gw, gy + gh)
        s = SpatialResult(0, (0, 14), {0: (Detection(P, 0.9, person), Detection(GUN, 0.9, gun))})
        p = fuse(normal, False, s)
        trials += 1
        violations += p.label is G and p.source is PredictionSource.SPATIAL_OVERRIDE
    verdict(3, f"{violations} Gunshot overrides across {trials} edge/corner-touching pairs", violations == 0)


# -- 4 ------------------------------------------------------------------------

def test_criterion_4_preprocess_oracles(verdict):
    rng = np.random.default_rng(4)
    mask_ok = 0
    for i in range(100):
        h, w = (int(v) for v in rng.integers(4, 48, 2))
        f = random_frame(rng, h, w)
        boxes = []
        for _ in range(int(rng.integers(0, 4))):
            xs = sorted(rng.uniform(-5, w + 5, 2))
            ys = sorted(rng.uniform(-5, h + 5, 2))
            boxes.append((xs[0], ys[0], xs[1], ys[1]))
        fallback = MaskFallback.BLACK_FRAME if i % 2 else MaskFallback.KEEP_ORIGINAL
        dets = [Detection(P, 0.9, BoundingBox(*b)) for b in boxes]
        out = apply_mask(f, dets, fallback).pixels
        mask_ok += out.tobytes() == reference_mask(f.pixels, boxes, fallback is MaskFallback.BLACK_FRAME).tobytes()
    skel_ok = 0
    for _ in range(50):
        size = 48
        f = random_frame(rng, size, size)
        person = random_person(rng, size)
        thickness = float(rng.choice([1.0, 2.0, 2.5, 3.0]))
        out = render_skeleton(f, [person], SkeletonMode.ON_BLACK, SkeletonStyle(thickness, 0.3)).pixels
        ref = reference_skeleton(np.zeros_like(f.pixels), [person], thickness, 0.3)
        got_set = set(zip(*np.nonzero(out.any(axis=2))))
        ref_set = set(zip(*np.nonzero(ref.any(axis=2))))
        skel_ok += got_set == ref_set and np.array_equal(out, ref)
    verdict(4, f"mask {mask_ok}/100 byte-equal, skeleton {skel_ok}/50 pixel sets equal",
            mask_ok == 100 and skel_ok == 50)


# -- 5 ------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_5_latency_ordering(verdict):
    result = run_bench(("parallel", "serial"), 50.0, 100.0, repeat=5, window_size=15,
                       spatial_frames=3, windows=20)
    par, ser = result.rows_for("parallel"), result.rows_for("serial")
    ordered = all(p.mean_ms < s.mean_ms for p, s in zip(par, ser))
    within = all(abs(r.mean_ms - 150) <= 0.25 * 150 for r in par) and \
        all(abs(r.mean_ms - 850) <= 0.25 * 850 for r in ser)
    counts = all(r.windows == 20 for r in par + ser) and len(par) == len(ser) == 5
    means = ", ".join(f"{p.mean_ms:.0f}/{s.mean_ms:.0f}" for p, s in zip(par, ser))
    verdict(5, f"parallel/serial mean ms per repeat: {means} (model 150/850)", ordered and within and counts)


# -- 6 ------------------------------------------------------------------------

def test_criterion_6_identity_equivalence(verdict, fixtures_dir):
    total = same = 0
    for video, spatial_trace, temporal_trace in (
        ("fusion.stap", "fusion_spatial.jsonl", "fusion_temporal.jsonl"),
        ("fixture30.stap", "empty_spatial.jsonl", "fixture30_temporal.jsonl"),
    ):
        src = open_source(fixtures_dir / video)
        spatial = TraceSpatialBackend(fixtures_dir / spatial_trace)
        temporal = TraceTemporalBackend(fixtures_dir / temporal_trace)
        ser = Pipeline(PipelineConfig(mode="serial", preprocess_variant="identity"), spatial, temporal).run(src)
        tonly = Pipeline(PipelineConfig(mode="temporal-only"), spatial, temporal).run(src)
        pairs = list(zip(ser.predictions, tonly.predictions))
        total += max(len(ser.predictions), len(tonly.predictions))
        same += sum(a.window_index == b.window_index and a.label is b.label for a, b in pairs)
    verdict(6, f"{same}/{total} windows agree between serial Identity and temporal-only", total > 0 and same == total)


# -- 7 ------------------------------------------------------------------------

# Hand-enumerated window counts, window size 15, Drop tail policy.
# Columns: (interval, stride) = (1,5) (1,15) (3,5) (3,15) (5,5) (5,15).
WINDOW_MATRIX = {
    2: (0, 0, 0, 0, 0, 0),
    9: (0, 0, 0, 0, 0, 0),
    16: (1, 1, 0, 0, 0, 0),
    30: (4, 2, 0, 0, 0, 0),
    60: (10, 4, 2, 1, 0, 0),
    270: (52, 18, 16, 6, 8, 3),
    480: (94, 32, 30, 10, 17, 6),
    690: (136, 46, 44, 15, 25, 9),
    1050: (208, 70, 68, 23, 40, 14),
    1320: (262, 88, 86, 29, 50, 17),
    1500: (298, 100, 98, 33, 58, 20),
    1800: (358, 120, 118, 40, 70, 24),
    1950: (388, 130, 128, 43, 76, 26),
    3090: (616, 206, 204, 68, 121, 41),
}
COLUMNS = [(1, 5), (1, 15), (3, 5), (3, 15), (5, 5), (5, 15)]


def test_criterion_7_windowing_matrix(verdict):
    px = np.zeros((2, 2, 3), dtype=np.uint8)
    mismatches = []
    for n, expected in WINDOW_MATRIX.items():
        for (interval, stride), want in zip(COLUMNS, expected):
            policy = SamplingPolicy(frame_interval=interval, window_size=15, window_stride=stride)
            got = sum(1 for _ in window_stream(SyntheticSource(lambda i: px, count=n), policy, model_space=False))
            if got != want:
                mismatches.append((n, interval, stride, got, want))
    cells = len(WINDOW_MATRIX) * len(COLUMNS)
    verdict(7, f"{cells - len(mismatches)}/{cells} window counts match {mismatches or ''}", not mismatches)


# -- 8 ------------------------------------------------------------------------

def test_criterion_8_evaluation_identity(verdict):
    rng = np.random.default_rng(8)
    classes = list(AnomalyClass)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 60))
        t = [classes[i] for i in rng.integers(0, 4, n)]
        p = [classes[i] for i in rng.integers(0, 4, n)]
        r = score_labels(t, p)
        worst = max(worst, abs(r.weighted_recall - r.accuracy))
    toy = score_labels([F, F, N], [F, N, N]).weighted_precision
    verdict(8, f"max |recall - accuracy| = {worst:.2e} over 1000 sets; toy weighted precision {toy:.4f}%",
            worst <= 1e-9 and abs(toy - 83.33) <= 0.01)


# -- 9 ------------------------------------------------------------------------

def test_criterion_9_determinism(verdict, fixtures_dir):
    def run(mode, variant=None):
        spatial = TraceSpatialBackend(fixtures_dir / "fusion_spatial.jsonl")
        temporal = TraceTemporalBackend(fixtures_dir / "fusion_temporal.jsonl")
        cfg = PipelineConfig(mode=mode, preprocess_variant=variant)
        return Pipeline(cfg, spatial, temporal).run(open_source(fixtures_dir / "fusion.stap")).to_json(timing=False)

    results = {}
    for mode, variant in (("parallel", None), ("serial", "mask-black"), ("serial", "skeleton-bg")):
        results[f"{mode}/{variant or '-'}"] = run(mode, variant).encode() == run(mode, variant).encode()
    verdict(9, "byte-identical reports: " + ", ".join(f"{k}={v}" for k, v in results.items()), all(results.values()))


# -- 10 -----------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_10_backpressure(verdict):
    px = np.zeros((8, 8, 3), dtype=np.uint8)
    src = SyntheticSource(lambda i: px, count=100 * 15)
    cfg = PipelineConfig(mode="parallel", max_inflight_windows=2)
    report = Pipeline(cfg, NullSpatialBackend(), SyntheticTemporalBackend(latency_ms=1000)).run(src)
    ok = report.peak_resident_windows <= 2 and len(report.predictions) == 100
    verdict(10, f"peak resident windows {report.peak_resident_windows} (limit 2) over "
                f"{len(report.predictions)} windows", ok)
