"""
Declarative run configuration.

Config files are INI documents whose sections mirror the dataclass fields::

    [pipeline]
    mode = parallel
    max_inflight_windows = 2

    [sampling]
    frame_interval = 1
    window_size = 15

    [backends]
    spatial = trace:spatial.jsonl
    temporal = synthetic:latency=100

Relative trace paths are resolved against the config file's directory.
"""

from __future__ import annotations

import configparser
import enum
import io
import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

from .fusion import FusionPolicy
from .ingest import SamplingPolicy
from .model import _ParseMixin
from .preprocess import PreprocessVariant, SkeletonStyle
from .spatial import SpatialConfig


class ConfigError(ValueError):
    pass


class Mode(_ParseMixin, enum.Enum):
    PARALLEL = "parallel"
    SERIAL = "serial"
    TEMPORAL_ONLY = "temporal-only"
    SPATIAL_ONLY = "spatial-only"


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _bool(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in _TRUE:
        return True
    if text in _FALSE:
        return False
    raise ConfigError(f"not a boolean: {value!r}")


@dataclass(frozen=True)
class PipelineConfig:
    mode: Mode = Mode.PARALLEL
    sampling: SamplingPolicy = field(default_factory=SamplingPolicy)
    spatial: SpatialConfig | None = None
    preprocess_variant: PreprocessVariant | None = None
    skeleton: SkeletonStyle = field(default_factory=SkeletonStyle)
    fusion: FusionPolicy = field(default_factory=FusionPolicy)
    spatial_backend: str = "none"
    temporal_backend: str = "none"
    max_inflight_windows: int = 2
    anomaly_threshold: float = 0.0
    threaded: bool = True

    def __post_init__(self) -> None:
        try:
            object.__setattr__(self, "mode", Mode.parse(self.mode))
            if self.preprocess_variant is not None:
                object.__setattr__(
                    self, "preprocess_variant", PreprocessVariant.parse(self.preprocess_variant)
                )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.mode is Mode.SERIAL and self.preprocess_variant is None:
            raise ConfigError("serial mode requires a preprocess variant")
        if self.max_inflight_windows < 1:
            raise ConfigError("max_inflight_windows must be >= 1")
        if not 0.0 <= self.anomaly_threshold <= 1.0:
            raise ConfigError("anomaly_threshold must lie in [0, 1]")
        spatial = self.resolved_spatial()
        if (spatial.frame_selection.value != "all"
                and spatial.frames_per_window > self.sampling.window_size):
            raise ConfigError(
                f"frames_per_window ({spatial.frames_per_window}) exceeds "
                f"window_size ({self.sampling.window_size})"
            )

    def resolved_spatial(self) -> SpatialConfig:
        """Explicit spatial config, else all frames in serial mode and 3 evenly spaced otherwise."""
        if self.spatial is not None:
            return self.spatial
        if self.mode is Mode.SERIAL:
            return SpatialConfig.all_frames()
        return SpatialConfig()

    def with_overrides(self, **changes: Any) -> "PipelineConfig":
        return replace(self, **changes)

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        """Fully resolved config; feeding it back to ``from_dict`` reproduces the run."""
        skel = self.skeleton
        return {
            "pipeline": {
                "mode": self.mode.value,
                "max_inflight_windows": self.max_inflight_windows,
                "anomaly_threshold": self.anomaly_threshold,
                "threaded": self.threaded,
            },
            "sampling": self.sampling.to_dict(),
            "spatial": self.resolved_spatial().to_dict(),
            "preprocess": {
                "variant": self.preprocess_variant.value if self.preprocess_variant else "none",
                "line_thickness_px": skel.line_thickness_px,
                "min_joint_conf": skel.min_joint_conf,
            },
            "fusion": self.fusion.to_dict(),
            "backends": {"spatial": self.spatial_backend, "temporal": self.temporal_backend},
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Mapping[str, Any]], base_dir: str | os.PathLike | None = None) -> "PipelineConfig":
        known = {"pipeline", "sampling", "spatial", "preprocess", "fusion", "backends"}
        unknown = set(d) - known - {"DEFAULT"}
        if unknown:
            raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
        try:
            return cls._from_sections(d, base_dir)
        except ConfigError:
            raise
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def _from_sections(cls, d: Mapping[str, Mapping[str, Any]], base_dir) -> "PipelineConfig":
        def section(name: str, allowed: set[str]) -> dict[str, Any]:
            sec = dict(d.get(name, {}))
            extra = set(sec) - allowed
            if extra:
                raise ConfigError(f"unknown key(s) in [{name}]: {sorted(extra)}")
            return sec

        pipe = section("pipeline", {"mode", "max_inflight_windows", "anomaly_threshold", "threaded"})
        samp = section("sampling", {"frame_interval", "window_size", "window_stride", "tail_policy"})
        spat = section("spatial", {"confidence_threshold", "frames_per_window", "frame_selection"})
        prep = section("preprocess", {"variant", "line_thickness_px", "min_joint_conf"})
        fus = section("fusion", {"key_object_priority", "gate_required_for_gunshot", "person_triggers_fight"})
        back = section("backends", {"spatial", "temporal"})

        window_size = int(samp.get("window_size", 15))
        stride = samp.get("window_stride")
        sampling = SamplingPolicy(
            frame_interval=int(samp.get("frame_interval", 1)),
            window_size=window_size,
            window_stride=int(stride) if stride not in (None, "", "none") else None,
            tail_policy=samp.get("tail_policy", "drop"),
        )
        spatial = None
        if spat:
            spatial = SpatialConfig(
                confidence_threshold=float(spat.get("confidence_threshold", 0.25)),
                frames_per_window=int(spat.get("frames_per_window", 3)),
                frame_selection=spat.get("frame_selection", "evenly-spaced"),
            )
        variant = prep.get("variant")
        if variant in (None, "", "none"):
            variant = None
        prio = fus.get("key_object_priority", "gunshot, fire, fight")
        if isinstance(prio, str):
            prio = [p for p in (x.strip() for x in prio.split(",")) if p]
        fusion = FusionPolicy(
            key_object_priority=tuple(prio),
            gate_required_for_gunshot=_bool(fus.get("gate_required_for_gunshot", True)),
            person_triggers_fight=_bool(fus.get("person_triggers_fight", True)),
        )
        return cls(
            mode=pipe.get("mode", "parallel"),
            sampling=sampling,
            spatial=spatial,
            preprocess_variant=variant,
            skeleton=SkeletonStyle(
                line_thickness_px=float(prep.get("line_thickness_px", 2.0)),
                min_joint_conf=float(prep.get("min_joint_conf", 0.3)),
            ),
            fusion=fusion,
            spatial_backend=resolve_backend_spec(back.get("spatial", "none"), base_dir),
            temporal_backend=resolve_backend_spec(back.get("temporal", "none"), base_dir),
            max_inflight_windows=int(pipe.get("max_inflight_windows", 2)),
            anomaly_threshold=float(pipe.get("anomaly_threshold", 0.0)),
            threaded=_bool(pipe.get("threaded", True)),
        )

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        for name, sec in self.to_dict().items():
            cp[name] = {
                k: (", ".join(v) if isinstance(v, list) else str(v).lower() if isinstance(v, bool) else str(v))
                for k, v in sec.items()
            }
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def resolve_backend_spec(spec: str, base_dir: str | os.PathLike | None) -> str:
    """Make ``trace:`` paths absolute so an echoed config works from any directory."""
    spec = str(spec).strip()
    kind, sep, arg = spec.partition(":")
    if kind.lower() == "trace" and sep:
        path = Path(arg)
        if not path.is_absolute() and base_dir is not None:
            path = Path(base_dir) / path
        return f"trace:{path.resolve() if base_dir is not None else path}"
    return spec


def load_config_sections(path: str | os.PathLike) -> tuple[dict[str, dict[str, Any]], Path]:
    """Raw config sections from an INI file or a JSON run report's ``config`` echo."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if text.lstrip().startswith("{"):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        sections = doc.get("config", doc)
    else:
        cp = configparser.ConfigParser()
        try:
            cp.read_string(text, source=str(path))
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        sections = {s: dict(cp[s]) for s in cp.sections()}
    return {k: dict(v) for k, v in sections.items()}, path.parent


def load_config(path: str | os.PathLike) -> PipelineConfig:
    sections, base = load_config_sections(path)
    return PipelineConfig.from_dict(sections, base)
