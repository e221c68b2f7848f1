"""
Pipeline assembly: ingest -> spatial / temporal -> fusion, in parallel or serial.

Backpressure is pull-based: the dispatcher takes a free in-flight slot
*before* pulling the next window from the ingest generator, so a slow
backend stalls frame reading instead of buffering windows. At most
``max_inflight_windows`` windows are resident at once, and predictions
are emitted strictly in window order.

Per-window latency runs from the moment the window's last frame has been
read (window ready) to the moment its verdict is joined.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import statistics
import threading
import time
from collections import Counter, deque
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator

from .config import Mode, PipelineConfig
from .fusion import fuse
from .ingest import FrameSource, SourceError, resize_window, window_stream, write_packed_video
from .model import (
    AnomalyClass,
    AnomalyPrediction,
    Frame,
    InvalidFrame,
    PredictionSource,
    SequenceWindow,
    SpatialResult,
    TemporalResult,
)
from .preprocess import enrich_window
from .spatial import BackendError, SpatialBackend, analyze_window, build_spatial_backend
from .temporal import TemporalBackend, build_temporal_backend, classify_window

log = logging.getLogger(__name__)

CSV_FIELDS = ("window_index", "t_start_ms", "label", "source", "latency_ms")


@dataclass(frozen=True)
class Gap:
    window_index: int
    stage: str
    message: str
    frame_index: int | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "window_index": self.window_index,
            "stage": self.stage,
            "frame_index": self.frame_index,
            "message": self.message,
        }


@dataclass
class RunReport:
    mode: str
    config: dict[str, Any]
    predictions: list[AnomalyPrediction] = field(default_factory=list)
    gaps: list[Gap] = field(default_factory=list)
    windows_formed: int = 0
    frames_read: int = 0
    source_duration_ms: float = 0.0
    total_processing_ms: float = 0.0
    peak_resident_windows: int = 0
    spatial_calls: int = 0
    temporal_calls: int = 0
    diagnostics: dict[str, int] = field(default_factory=dict)
    source_error: str | None = None
    source: dict[str, Any] = field(default_factory=dict)

    @property
    def skipped_windows(self) -> int:
        return len(self.gaps)

    @property
    def latencies(self) -> list[float]:
        return [p.latency_ms["end_to_end"] for p in self.predictions if "end_to_end" in p.latency_ms]

    @property
    def mean_latency_ms(self) -> float:
        lat = self.latencies
        return statistics.fmean(lat) if lat else 0.0

    @property
    def median_latency_ms(self) -> float:
        lat = self.latencies
        return statistics.median(lat) if lat else 0.0

    @property
    def complete(self) -> bool:
        return not self.gaps and self.source_error is None

    def stats(self) -> dict[str, float]:
        return {
            "mean_latency_ms": self.mean_latency_ms,
            "median_latency_ms": self.median_latency_ms,
            "total_processing_ms": self.total_processing_ms,
            "source_duration_ms": self.source_duration_ms,
            "peak_resident_windows": self.peak_resident_windows,
        }

    def to_dict(self, timing: bool = True) -> dict[str, Any]:
        d: dict[str, Any] = {
            "mode": self.mode,
            "config": self.config,
            "source": self.source,
            "windows_formed": self.windows_formed,
            "predictions_emitted": len(self.predictions),
            "skipped_windows": self.skipped_windows,
            "frames_read": self.frames_read,
            "spatial_calls": self.spatial_calls,
            "temporal_calls": self.temporal_calls,
            "diagnostics": dict(sorted(self.diagnostics.items())),
            "source_error": self.source_error,
            "predictions": [p.to_dict(timing=timing) for p in self.predictions],
            "gaps": [g.to_dict() for g in self.gaps],
        }
        if timing:
            d["stats"] = self.stats()
        else:
            d["stats"] = {"source_duration_ms": self.source_duration_ms}
        return d

    def to_json(self, timing: bool = True) -> str:
        return json.dumps(self.to_dict(timing=timing), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_FIELDS)
        for p in self.predictions:
            writer.writerow([
                p.window_index,
                f"{p.t_start_ms:.3f}",
                p.label.value,
                p.source.value,
                f"{p.latency_ms.get('end_to_end', 0.0):.3f}",
            ])
        return buf.getvalue()

    def write(self, out_dir: str | os.PathLike, stem: str = "report") -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"json": out / f"{stem}.json", "csv": out / f"{stem}.csv"}
        paths["json"].write_text(self.to_json())
        paths["csv"].write_text(self.to_csv())
        return paths


class ResidentCounter:
    """Instrumented count of windows currently held by the pipeline."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.current = 0
        self.peak = 0

    def acquire(self) -> None:
        with self._lock:
            self.current += 1
            self.peak = max(self.peak, self.current)

    def release(self) -> None:
        with self._lock:
            self.current -= 1


class _Done:
    """Future-like wrapper for work executed inline (single-threaded mode)."""

    def __init__(self, fn: Callable[[], Any]):
        try:
            self._value, self._exc = fn(), None
        except BaseException as exc:  # re-raised by result()
            self._value, self._exc = None, exc

    def result(self) -> Any:
        if self._exc is not None:
            raise self._exc
        return self._value


def _timed(fn: Callable[..., Any], *args: Any) -> tuple[Any, float]:
    t0 = time.perf_counter()
    value = fn(*args)
    return value, (time.perf_counter() - t0) * 1000.0


def _normal_result() -> TemporalResult:
    return TemporalResult({c: float(c is AnomalyClass.NORMAL) for c in AnomalyClass})


class Pipeline:
    """
    One configured engine instance.

    Backends default to the specs in ``cfg``; pass instances to override
    (tests, custom model adapters). ``debug_dump`` receives the enriched
    model-space window of every serial-mode window as a packed raw video.
    """

    def __init__(
        self,
        cfg: PipelineConfig,
        spatial_backend: SpatialBackend | None = None,
        temporal_backend: TemporalBackend | None = None,
        debug_dump: str | os.PathLike | None = None,
    ):
        self.cfg = cfg
        self.spatial_cfg = cfg.resolved_spatial()
        self.spatial_backend = spatial_backend or build_spatial_backend(cfg.spatial_backend)
        self.temporal_backend = temporal_backend or build_temporal_backend(cfg.temporal_backend)
        self.debug_dump = Path(debug_dump) if debug_dump is not None else None
        self._branch_pool: ThreadPoolExecutor | None = None
        self._diag_lock = threading.Lock()
        self._diagnostics: Counter = Counter()
        self._fps = 30.0

    # -- per-window work -------------------------------------------------

    def _run_branches(self, w: SequenceWindow, spatial: bool, temporal: bool):
        """Run the active branches (concurrently when threaded); fail together."""
        jobs: dict[str, tuple[Callable[..., Any], tuple]] = {}
        if spatial:
            jobs["spatial"] = (analyze_window, (w, self.spatial_backend, self.spatial_cfg))
        if temporal:
            jobs["temporal"] = (classify_window, (w, self.temporal_backend, self.cfg.anomaly_threshold))
        if self._branch_pool is not None and len(jobs) > 1:
            futures = {k: self._branch_pool.submit(_timed, fn, *args) for k, (fn, args) in jobs.items()}
            outcomes = {}
            for k, fut in futures.items():
                try:
                    outcomes[k] = fut.result()
                except BaseException as exc:
                    outcomes[k] = exc
        else:
            outcomes = {}
            for k, (fn, args) in jobs.items():
                try:
                    outcomes[k] = _timed(fn, *args)
                except BaseException as exc:
                    outcomes[k] = exc
        for k, v in outcomes.items():
            if isinstance(v, BaseException):
                if isinstance(v, BackendError):
                    v.stage = k
                raise v
        return {k: v[0] for k, v in outcomes.items()}, {f"{k}_ms": v[1] for k, v in outcomes.items()}

    def _process_stamped(self, w: SequenceWindow) -> tuple[AnomalyPrediction, float]:
        pred = self._process(w)
        return pred, time.perf_counter()

    def _process(self, w: SequenceWindow) -> AnomalyPrediction:
        mode = self.cfg.mode
        if mode is Mode.SERIAL:
            return self._process_serial(w)
        results, stages = self._run_branches(
            w, spatial=mode is not Mode.TEMPORAL_ONLY, temporal=mode is not Mode.SPATIAL_ONLY
        )
        t_res, flag = results.get("temporal", (_normal_result(), False))
        s_res = results.get("spatial", SpatialResult(w.window_index, w.source_span, {}))
        t0 = time.perf_counter()
        pred = fuse(t_res, flag, s_res, self.cfg.fusion, t_start_ms=w.t_start_ms)
        stages["fuse_ms"] = (time.perf_counter() - t0) * 1000.0
        return replace(pred, latency_ms=stages)

    def _process_serial(self, w: SequenceWindow) -> AnomalyPrediction:
        stages: dict[str, float] = {}
        try:
            s_res, stages["spatial_ms"] = _timed(analyze_window, w, self.spatial_backend, self.spatial_cfg)
        except BackendError as exc:
            exc.stage = "spatial"
            raise
        diag: Counter = Counter()
        t0 = time.perf_counter()
        enriched = resize_window(
            enrich_window(w, s_res, self.cfg.preprocess_variant, self.cfg.skeleton, diag)
        )
        stages["preprocess_ms"] = (time.perf_counter() - t0) * 1000.0
        if diag:
            with self._diag_lock:
                self._diagnostics.update(diag)
        if self.debug_dump is not None:
            write_packed_video(self.debug_dump / f"window_{w.window_index:06d}.stap", enriched.frames, self._fps)
        try:
            (t_res, flag), stages["temporal_ms"] = _timed(
                classify_window, enriched, self.temporal_backend, self.cfg.anomaly_threshold
            )
        except BackendError as exc:
            exc.stage = "temporal"
            raise
        label = t_res.argmax_class if flag else AnomalyClass.NORMAL
        return AnomalyPrediction(
            window_index=w.window_index,
            label=label,
            source=PredictionSource.TEMPORAL_ON_SERIAL,
            scores=dict(t_res.scores),
            latency_ms=stages,
            t_start_ms=w.t_start_ms,
        )

    # -- driver ------------------------------------------------------------

    def windows(self, frames: Iterable[Frame]) -> Iterator[SequenceWindow]:
        return window_stream(frames, self.cfg.sampling, model_space=self.cfg.mode is not Mode.SERIAL)

    def run(self, source: FrameSource | Iterable[Frame], max_windows: int | None = None) -> RunReport:
        cfg = self.cfg
        self._fps = float(getattr(source, "fps", 30.0) or 30.0)
        self._diagnostics = Counter()
        if self.debug_dump is not None:
            self.debug_dump.mkdir(parents=True, exist_ok=True)
        spatial_calls0 = self.spatial_backend.calls
        temporal_calls0 = self.temporal_backend.calls
        report = RunReport(mode=cfg.mode.value, config=cfg.to_dict())
        if hasattr(source, "describe"):
            report.source = source.describe()

        counted = {"frames": 0}

        def counting(frames: Iterable[Frame]) -> Iterator[Frame]:
            for f in frames:
                counted["frames"] += 1
                yield f

        windows = self.windows(counting(source))
        resident = ResidentCounter()
        limit = cfg.max_inflight_windows if cfg.threaded else 1
        pending: deque = deque()
        exhausted = False
        window_pool = branch_pool = None
        if cfg.threaded:
            window_pool = ThreadPoolExecutor(max_workers=limit, thread_name_prefix="stap-window")
            branch_pool = ThreadPoolExecutor(max_workers=2 * limit, thread_name_prefix="stap-branch")
        self._branch_pool = branch_pool
        t_run = time.perf_counter()
        try:
            while True:
                while not exhausted and len(pending) < limit:
                    if max_windows is not None and report.windows_formed >= max_windows:
                        exhausted = True
                        break
                    try:
                        w = next(windows)
                    except StopIteration:
                        exhausted = True
                        break
                    except (SourceError, InvalidFrame) as exc:
                        report.source_error = str(exc)
                        log.error("source error: %s", exc)
                        exhausted = True
                        break
                    t_ready = time.perf_counter()
                    resident.acquire()
                    report.windows_formed += 1
                    if window_pool is not None:
                        fut: Future | _Done = window_pool.submit(self._process_stamped, w)
                    else:
                        fut = _Done(lambda w=w: self._process_stamped(w))
                    pending.append((w, t_ready, fut))
                if not pending:
                    break
                w, t_ready, fut = pending.popleft()
                try:
                    pred, t_done = fut.result()
                except BackendError as exc:
                    report.gaps.append(Gap(w.window_index, getattr(exc, "stage", "unknown"), str(exc), exc.frame_index))
                    log.warning("window %d skipped: %s", w.window_index, exc)
                else:
                    latency = dict(pred.latency_ms)
                    latency["end_to_end"] = (t_done - t_ready) * 1000.0
                    report.predictions.append(replace(pred, latency_ms=latency))
                finally:
                    resident.release()
        finally:
            self._branch_pool = None
            for pool in (window_pool, branch_pool):
                if pool is not None:
                    pool.shutdown(wait=True)
        report.total_processing_ms = (time.perf_counter() - t_run) * 1000.0
        report.frames_read = counted["frames"]
        report.source_duration_ms = report.frames_read * 1000.0 / self._fps
        report.peak_resident_windows = resident.peak
        report.spatial_calls = self.spatial_backend.calls - spatial_calls0
        report.temporal_calls = self.temporal_backend.calls - temporal_calls0
        report.diagnostics = dict(self._diagnostics)
        return report


def run_pipeline(cfg: PipelineConfig, source, **kwargs: Any) -> RunReport:
    max_windows = kwargs.pop("max_windows", None)
    return Pipeline(cfg, **kwargs).run(source, max_windows=max_windows)


def run_parallel(cfg: PipelineConfig, source, **kwargs: Any) -> RunReport:
    if cfg.mode is not Mode.PARALLEL:
        raise ValueError(f"run_parallel needs mode=parallel, got {cfg.mode.value}")
    return run_pipeline(cfg, source, **kwargs)


def run_serial(cfg: PipelineConfig, source, **kwargs: Any) -> RunReport:
    if cfg.mode is not Mode.SERIAL:
        raise ValueError(f"run_serial needs mode=serial, got {cfg.mode.value}")
    return run_pipeline(cfg, source, **kwargs)


# --------------------------------------------------------------------------
# latency model and mode comparison


def modeled_parallel_latency(frames_analyzed: int, spatial_ms: float, temporal_ms: float) -> float:
    """Per-window latency when both branches overlap and spatial calls run back to back."""
    return max(frames_analyzed * spatial_ms, temporal_ms)


def modeled_serial_latency(frames_analyzed: int, spatial_ms: float, temporal_ms: float) -> float:
    return frames_analyzed * spatial_ms + temporal_ms


@dataclass
class ModeComparison:
    parallel: RunReport
    serial: RunReport
    modeled_ratio: float | None = None

    @property
    def latency_ratio(self) -> float:
        """Parallel mean per-window latency divided by serial mean."""
        s = self.serial.mean_latency_ms
        return self.parallel.mean_latency_ms / s if s else float("nan")

    @property
    def agreement(self) -> float:
        ser = {p.window_index: p.label for p in self.serial.predictions}
        common = [p for p in self.parallel.predictions if p.window_index in ser]
        if not common:
            return float("nan")
        return sum(ser[p.window_index] is p.label for p in common) / len(common)

    def to_dict(self, timing: bool = True) -> dict[str, Any]:
        d = {
            "parallel": self.parallel.to_dict(timing),
            "serial": self.serial.to_dict(timing),
            "label_agreement": self.agreement,
        }
        if timing:
            d["latency_ratio"] = self.latency_ratio
            d["modeled_ratio"] = self.modeled_ratio
        return d


def compare_modes(
    parallel_cfg: PipelineConfig,
    serial_cfg: PipelineConfig,
    source: FrameSource,
    spatial_backend: SpatialBackend | None = None,
    temporal_backend: TemporalBackend | None = None,
    modeled_ratio: float | None = None,
) -> ModeComparison:
    """Run the same source through both architectures with the same backends."""
    if parallel_cfg.mode is not Mode.PARALLEL or serial_cfg.mode is not Mode.SERIAL:
        raise ValueError("compare_modes needs a (parallel, serial) config pair")
    par = Pipeline(parallel_cfg, spatial_backend, temporal_backend).run(source)
    ser = Pipeline(serial_cfg, spatial_backend, temporal_backend).run(source)
    return ModeComparison(par, ser, modeled_ratio)
