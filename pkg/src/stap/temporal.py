"""Window-level sequence classification behind pluggable backends."""

from __future__ import annotations

import json
import logging
import math
import os
import threading
import time
from pathlib import Path
from typing import Mapping

import numpy as np

from .model import (
    AnomalyClass,
    SequenceWindow,
    TemporalResult,
    class_profile,
)
from .spatial import BackendError, TraceFormatError, parse_synthetic_spec

log = logging.getLogger(__name__)


class MissingTraceEntry(BackendError):
    pass


class TemporalBackend:
    """Interface: ``classify(window) -> TemporalResult`` over a 3- or 4-class profile."""

    profile: int = 4

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.calls = 0

    def _count(self) -> None:
        with self._lock:
            self.calls += 1

    @property
    def classes(self) -> tuple[AnomalyClass, ...]:
        return class_profile(self.profile)

    def classify(self, w: SequenceWindow) -> TemporalResult:
        raise NotImplementedError

    def describe(self) -> str:
        return type(self).__name__


class ConstantNormalBackend(TemporalBackend):
    """Always certain of Normal; stands in for a deactivated temporal branch."""

    def __init__(self, profile: int = 4):
        super().__init__()
        self.profile = profile

    def classify(self, w: SequenceWindow) -> TemporalResult:
        self._count()
        return TemporalResult({c: float(c is AnomalyClass.NORMAL) for c in self.classes})

    def describe(self) -> str:
        return "none"


def _parse_scores(raw: Mapping[str, float]) -> dict[AnomalyClass, float]:
    scores = {AnomalyClass.parse(k): float(v) for k, v in raw.items()}
    if any(v < 0 or not math.isfinite(v) for v in scores.values()):
        raise ValueError(f"scores must be finite and non-negative: {raw}")
    return scores


def load_score_trace(path: str | os.PathLike) -> dict[int, TemporalResult]:
    table: dict[int, TemporalResult] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                window = rec["window"]
                if not isinstance(window, int) or isinstance(window, bool) or window < 0:
                    raise ValueError(f"bad window index {window!r}")
                scores = _parse_scores(rec["scores"])
                total = sum(scores.values())
                if abs(total - 1.0) > 1e-6:
                    log.warning("%s:%d: scores sum to %.9g; renormalizing", path, lineno, total)
                result = TemporalResult.from_raw(scores)
            except (ValueError, KeyError, TypeError) as exc:
                raise TraceFormatError(f"{path}:{lineno}: {exc}") from exc
            if window in table:
                raise TraceFormatError(f"{path}:{lineno}: duplicate window {window}")
            table[window] = result
    return table


class TraceTemporalBackend(TemporalBackend):
    """Replays per-window score vectors keyed by window index."""

    def __init__(self, path: str | os.PathLike | None = None,
                 table: Mapping[int, TemporalResult] | None = None, profile: int | None = None):
        super().__init__()
        self.path = str(path) if path is not None else None
        if table is None:
            if path is None:
                raise ValueError("trace backend needs a path or a table")
            table = load_score_trace(path)
        self.table = dict(table)
        has_fire = any(AnomalyClass.FIRE in r.scores for r in self.table.values())
        if profile is None:
            profile = 4 if has_fire or not self.table else 3
        class_profile(profile)
        if profile == 3 and has_fire:
            raise TraceFormatError("3-class trace contains fire scores")
        self.profile = profile

    def classify(self, w: SequenceWindow) -> TemporalResult:
        self._count()
        try:
            return self.table[w.window_index]
        except KeyError:
            raise MissingTraceEntry(
                f"no trace entry for window {w.window_index}", window_index=w.window_index
            ) from None

    def describe(self) -> str:
        return f"trace:{self.path}" if self.path else "trace:<memory>"


def mean_motion(w: SequenceWindow) -> float:
    """Mean absolute pixel difference between consecutive frames (0..255)."""
    if len(w) < 2:
        return 0.0
    stack = np.stack([f.pixels for f in w.frames]).astype(np.int16)
    return float(np.abs(np.diff(stack, axis=0)).mean())


def leaning_scores(classes: tuple[AnomalyClass, ...], lead: AnomalyClass, weight: float = 0.7) -> dict[AnomalyClass, float]:
    rest = (1.0 - weight) / (len(classes) - 1)
    return {c: (weight if c is lead else rest) for c in classes}


class SyntheticTemporalBackend(TemporalBackend):
    """
    Sleeps ``latency_ms`` then scores by a content heuristic.

    ``motion``: mean inter-frame |delta| above ``cutoff`` leans Fight, else Normal.
    ``normal``: always Normal-leaning.
    """

    RULES = ("motion", "normal")

    def __init__(self, latency_ms: float = 0.0, rule: str = "motion", cutoff: float = 20.0, profile: int = 4):
        super().__init__()
        if rule not in self.RULES:
            raise ValueError(f"unknown temporal rule {rule!r}; choose from {self.RULES}")
        if latency_ms < 0:
            raise ValueError("latency_ms must be >= 0")
        class_profile(profile)
        self.latency_ms = float(latency_ms)
        self.rule = rule
        self.cutoff = float(cutoff)
        self.profile = int(profile)

    def classify(self, w: SequenceWindow) -> TemporalResult:
        self._count()
        if self.latency_ms:
            time.sleep(self.latency_ms / 1000.0)
        lead = AnomalyClass.NORMAL
        if self.rule == "motion" and mean_motion(w) > self.cutoff:
            lead = AnomalyClass.FIGHT
        return TemporalResult.from_raw(leaning_scores(self.classes, lead))

    def describe(self) -> str:
        return (f"synthetic:latency={self.latency_ms:g},rule={self.rule},"
                f"cutoff={self.cutoff:g},profile={self.profile}")


def build_temporal_backend(spec: str | None, base_dir: str | os.PathLike | None = None) -> TemporalBackend:
    """Build a backend from ``trace:FILE``, ``synthetic:SPEC`` or ``none``."""
    if spec is None or spec.strip().lower() in ("", "none"):
        return ConstantNormalBackend()
    kind, _, arg = spec.partition(":")
    kind = kind.strip().lower()
    if kind == "trace":
        path = Path(arg)
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        return TraceTemporalBackend(path)
    if kind == "synthetic":
        opts = parse_synthetic_spec(arg)
        unknown = set(opts) - {"latency", "rule", "cutoff", "profile"}
        if unknown:
            raise ValueError(f"unknown synthetic temporal option(s): {sorted(unknown)}")
        return SyntheticTemporalBackend(
            float(opts.get("latency", 0)),
            opts.get("rule", "motion"),
            float(opts.get("cutoff", 20.0)),
            int(opts.get("profile", 4)),
        )
    raise ValueError(f"unknown temporal backend spec {spec!r}")


def is_anomaly(result: TemporalResult, anomaly_threshold: float = 0.0) -> bool:
    top = result.argmax_class
    if top is AnomalyClass.NORMAL:
        return False
    if anomaly_threshold <= 0:
        return True
    return result.scores[top] >= anomaly_threshold


def classify_window(
    w: SequenceWindow, backend: TemporalBackend, anomaly_threshold: float = 0.0
) -> tuple[TemporalResult, bool]:
    """Classify one model-space window; returns the scores and the anomaly flag."""
    if not 0.0 <= anomaly_threshold <= 1.0:
        raise ValueError(f"anomaly_threshold out of [0,1]: {anomaly_threshold}")
    if not w.is_model_space:
        raise ValueError(f"window {w.window_index} is not in model space: {w.frame_size}")
    try:
        result = backend.classify(w)
    except BackendError as exc:
        exc.window_index = w.window_index
        raise
    except Exception as exc:
        raise BackendError(f"temporal backend failed: {exc}", window_index=w.window_index) from exc
    if not isinstance(result, TemporalResult):
        result = TemporalResult.from_raw(result)
    if backend.profile == 3 and AnomalyClass.FIRE in result.scores:
        raise BackendError("3-class backend emitted a fire score", window_index=w.window_index)
    return result, is_anomaly(result, anomaly_threshold)
