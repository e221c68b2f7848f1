"""Real-time spatio-temporal video anomaly detection pipeline engine."""

__version__ = "0.1.0"

from .config import ConfigError, Mode, PipelineConfig, load_config
from .evaluation import EvalReport, GroundTruthSet, score, score_labels
from .fusion import FusionPolicy, fuse, fuse_decision
from .ingest import (
    FrameDirectorySource,
    PackedVideoSource,
    SamplingPolicy,
    SyntheticSource,
    TailPolicy,
    make_windows,
    open_source,
    resize_to_model,
    sample,
)
from .model import (
    AnomalyClass,
    AnomalyPrediction,
    BoundingBox,
    Detection,
    Frame,
    KeyObjectClass,
    Keypoint,
    PredictionSource,
    SequenceWindow,
    SpatialResult,
    TemporalResult,
    associated_anomaly,
)
from .orchestrator import Pipeline, RunReport, compare_modes, run_parallel, run_serial
from .preprocess import PreprocessVariant, apply_mask, enrich_window, render_skeleton
from .spatial import SpatialConfig, analyze_window, iou, key_object_summary, person_gun_gate
from .temporal import classify_window
