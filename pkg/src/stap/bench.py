"""Wall-clock latency benchmark of the parallel and serial architectures."""

from __future__ import annotations

import io
import json
import statistics
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .config import Mode, PipelineConfig
from .ingest import FrameSource, SamplingPolicy, SyntheticSource
from .orchestrator import Pipeline, modeled_parallel_latency, modeled_serial_latency
from .preprocess import PreprocessVariant
from .spatial import SpatialConfig, SyntheticSpatialBackend, selected_positions
from .temporal import SyntheticTemporalBackend


@dataclass
class BenchRow:
    mode: str
    repeat: int
    windows: int
    mean_ms: float
    median_ms: float
    p95_ms: float
    total_processing_ms: float
    source_duration_ms: float
    modeled_ms: float

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


@dataclass
class BenchResult:
    params: dict[str, Any]
    rows: list[BenchRow] = field(default_factory=list)

    def rows_for(self, mode: str) -> list[BenchRow]:
        return [r for r in self.rows if r.mode == mode]

    def summary(self) -> dict[str, dict[str, float]]:
        out = {}
        for mode in dict.fromkeys(r.mode for r in self.rows):
            rows = self.rows_for(mode)
            out[mode] = {
                "mean_ms": statistics.fmean(r.mean_ms for r in rows),
                "median_ms": statistics.median(r.median_ms for r in rows),
                "total_processing_ms": statistics.fmean(r.total_processing_ms for r in rows),
                "modeled_ms": rows[0].modeled_ms,
            }
        return out

    def to_dict(self) -> dict[str, Any]:
        return {"params": self.params, "rows": [r.to_dict() for r in self.rows], "summary": self.summary()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def format_duration(ms: float) -> str:
    """Human duration in the style 601ms / 1.5s / 16s / 1min 43."""
    if ms < 1000:
        return f"{ms:.0f}ms"
    s = ms / 1000.0
    if s < 10:
        return f"{s:.1f}s".replace(".0s", "s")
    if s < 60:
        return f"{s:.0f}s"
    minutes, secs = divmod(int(round(s)), 60)
    return f"{minutes}min {secs:02d}"


def format_bench_table(result: BenchResult) -> str:
    heads = ["Mode", "Repeat", "Video duration", "Average detections", "Median", "Processing time", "Modeled"]
    rows = [
        [r.mode, str(r.repeat), format_duration(r.source_duration_ms), format_duration(r.mean_ms),
         format_duration(r.median_ms), format_duration(r.total_processing_ms), format_duration(r.modeled_ms)]
        for r in result.rows
    ]
    widths = [max(len(h), *(len(row[i]) for row in rows)) if rows else len(h) for i, h in enumerate(heads)]
    out = io.StringIO()
    out.write(" | ".join(h.ljust(w) for h, w in zip(heads, widths)).rstrip() + "\n")
    out.write("-+-".join("-" * w for w in widths) + "\n")
    for row in rows:
        out.write(" | ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() + "\n")
    return out.getvalue()


def constant_source(windows: int, window_size: int = 15, frame_interval: int = 1, size: int = 112) -> SyntheticSource:
    frame = np.full((size, size, 3), 96, dtype=np.uint8)
    return SyntheticSource(lambda i: frame, count=windows * window_size * frame_interval)


def bench_configs(
    window_size: int = 15,
    frame_interval: int = 1,
    spatial_frames: int = 3,
    max_inflight: int = 2,
    serial_variant: PreprocessVariant = PreprocessVariant.IDENTITY,
) -> dict[str, PipelineConfig]:
    sampling = SamplingPolicy(frame_interval=frame_interval, window_size=window_size)
    return {
        "parallel": PipelineConfig(
            mode=Mode.PARALLEL,
            sampling=sampling,
            spatial=SpatialConfig(frames_per_window=min(spatial_frames, window_size)),
            max_inflight_windows=max_inflight,
        ),
        "serial": PipelineConfig(
            mode=Mode.SERIAL,
            sampling=sampling,
            spatial=SpatialConfig.all_frames(),
            preprocess_variant=serial_variant,
            max_inflight_windows=max_inflight,
        ),
    }


def run_bench(
    modes: Sequence[str] = ("parallel", "serial"),
    spatial_latency_ms: float = 50.0,
    temporal_latency_ms: float = 100.0,
    source: FrameSource | None = None,
    repeat: int = 1,
    window_size: int = 15,
    frame_interval: int = 1,
    spatial_frames: int = 3,
    max_inflight: int = 2,
    windows: int = 20,
    spatial_rule: str = "red-flame",
    temporal_rule: str = "motion",
) -> BenchResult:
    """Run each mode ``repeat`` times with synthetic sleeping backends."""
    if repeat < 1:
        raise ValueError("repeat must be >= 1")
    configs = bench_configs(window_size, frame_interval, spatial_frames, max_inflight)
    unknown = [m for m in modes if m not in configs]
    if unknown:
        raise ValueError(f"bench supports modes {sorted(configs)}, got {unknown}")
    if source is None:
        source = constant_source(windows, window_size, frame_interval)
    params = {
        "modes": list(modes),
        "spatial_latency_ms": spatial_latency_ms,
        "temporal_latency_ms": temporal_latency_ms,
        "repeat": repeat,
        "window_size": window_size,
        "frame_interval": frame_interval,
        "spatial_frames": spatial_frames,
        "max_inflight_windows": max_inflight,
        "source": source.describe() if hasattr(source, "describe") else {},
        "configs": {m: configs[m].to_dict() for m in modes},
    }
    result = BenchResult(params)
    for rep in range(repeat):
        for mode in modes:
            cfg = configs[mode]
            spatial = SyntheticSpatialBackend(spatial_latency_ms, spatial_rule)
            temporal = SyntheticTemporalBackend(temporal_latency_ms, temporal_rule)
            report = Pipeline(cfg, spatial, temporal).run(source)
            k = len(set(selected_positions(window_size, cfg.resolved_spatial())))
            model = modeled_parallel_latency if mode == "parallel" else modeled_serial_latency
            lat = report.latencies or [0.0]
            result.rows.append(BenchRow(
                mode=mode,
                repeat=rep,
                windows=len(report.predictions),
                mean_ms=report.mean_latency_ms,
                median_ms=report.median_latency_ms,
                p95_ms=float(np.percentile(lat, 95)),
                total_processing_ms=report.total_processing_ms,
                source_duration_ms=report.source_duration_ms,
                modeled_ms=model(k, spatial_latency_ms, temporal_latency_ms),
            ))
    return result
