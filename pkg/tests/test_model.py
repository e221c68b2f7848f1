import numpy as np
import pytest
from hypothesis import given, strategies as st

from stap.model import (
    AnomalyClass,
    AnomalyPrediction,
    BoundingBox,
    Detection,
    Frame,
    InvalidFrame,
    KeyObjectClass,
    Keypoint,
    PredictionSource,
    SequenceWindow,
    SpatialResult,
    TemporalResult,
    argmax_class,
    associated_anomaly,
    class_profile,
)

from conftest import make_frame


@pytest.mark.parametrize("k, expected", [
    (KeyObjectClass.FLAME, AnomalyClass.FIRE),
    (KeyObjectClass.SMOKE, AnomalyClass.FIRE),
    (KeyObjectClass.PERSON, AnomalyClass.FIGHT),
    (KeyObjectClass.FIREARM, AnomalyClass.GUNSHOT),
])
def test_associated_anomaly(k, expected):
    assert associated_anomaly(k) is expected


def test_associated_anomaly_never_normal():
    assert all(associated_anomaly(k) is not AnomalyClass.NORMAL for k in KeyObjectClass)


def test_anomaly_class_closed_enumeration():
    assert [c.value for c in AnomalyClass] == ["fight", "gunshot", "fire", "normal"]
    assert [c for c in AnomalyClass if not c.is_anomaly] == [AnomalyClass.NORMAL]


@pytest.mark.parametrize("cls", list(AnomalyClass))
def test_anomaly_class_round_trip(cls):
    assert AnomalyClass.parse(str(cls)) is cls
    assert AnomalyClass.parse(cls.title) is cls
    assert AnomalyClass.parse(cls.name) is cls


def test_parse_rejects_unknown():
    with pytest.raises(ValueError):
        AnomalyClass.parse("explosion")


def test_prediction_source_parse_accepts_names_and_values():
    assert PredictionSource.parse("SpatialOverride") is PredictionSource.SPATIAL_OVERRIDE
    assert PredictionSource.parse("temporal-on-serial") is PredictionSource.TEMPORAL_ON_SERIAL


def test_class_profiles():
    assert class_profile(4) == (AnomalyClass.FIGHT, AnomalyClass.GUNSHOT, AnomalyClass.FIRE, AnomalyClass.NORMAL)
    assert class_profile(3) == (AnomalyClass.FIGHT, AnomalyClass.GUNSHOT, AnomalyClass.NORMAL)
    with pytest.raises(ValueError):
        class_profile(2)


def test_bounding_box_invariants():
    b = BoundingBox(0, 0, 4, 3)
    assert b.area == 12
    assert b.center == (2, 1.5)
    assert BoundingBox(1, 1, 1, 5).area == 0
    with pytest.raises(ValueError):
        BoundingBox(5, 0, 4, 3)
    assert BoundingBox.from_list(b.as_list()) == b


def test_keypoint_validation():
    with pytest.raises(ValueError):
        Keypoint(17, 0, 0, 1.0)
    with pytest.raises(ValueError):
        Keypoint(0, 0, 0, 1.5)


def test_detection_validation():
    box = BoundingBox(0, 0, 1, 1)
    with pytest.raises(ValueError):
        Detection(KeyObjectClass.PERSON, 1.2, box)
    with pytest.raises(ValueError):
        Detection(KeyObjectClass.FLAME, 0.5, box, keypoints=(Keypoint(0, 0, 0),))
    with pytest.raises(ValueError):
        Detection(KeyObjectClass.PERSON, 0.5, box, keypoints=(Keypoint(0, 0, 0), Keypoint(0, 1, 1)))


def test_detection_serialization_round_trip():
    d = Detection(KeyObjectClass.PERSON, 0.8, BoundingBox(1, 2, 3, 4), (Keypoint(0, 1.5, 2.5, 0.9),))
    doc = d.to_dict()
    assert doc == {"class": "person", "conf": 0.8, "box": [1, 2, 3, 4], "keypoints": [[0, 1.5, 2.5, 0.9]]}
    assert Detection.from_dict(doc) == d


def test_frame_rejects_bad_buffers():
    with pytest.raises(InvalidFrame):
        Frame(0, 0.0, np.zeros((4, 4), dtype=np.uint8))
    with pytest.raises(InvalidFrame):
        Frame(0, 0.0, np.zeros((4, 4, 3), dtype=np.float32))
    with pytest.raises(InvalidFrame):
        Frame(-1, 0.0, np.zeros((4, 4, 3), dtype=np.uint8))


def test_frame_is_immutable():
    px = np.zeros((2, 2, 3), dtype=np.uint8)
    f = Frame(0, 0.0, px)
    px[0, 0, 0] = 9
    assert f.pixels[0, 0, 0] == 0
    with pytest.raises(ValueError):
        f.pixels[0, 0, 0] = 1


def test_window_requires_increasing_indices_and_uniform_size():
    with pytest.raises(ValueError):
        SequenceWindow(0, (make_frame(1), make_frame(1)))
    with pytest.raises(ValueError):
        SequenceWindow(0, (make_frame(0, size=112), make_frame(1, size=64)))
    w = SequenceWindow(3, (make_frame(4), make_frame(7)))
    assert w.source_span == (4, 7)
    assert w.is_model_space


@pytest.mark.parametrize("scores, expected", [
    ({AnomalyClass.FIGHT: 0.25, AnomalyClass.GUNSHOT: 0.25, AnomalyClass.FIRE: 0.25, AnomalyClass.NORMAL: 0.25}, AnomalyClass.FIGHT),
    ({AnomalyClass.FIGHT: 0.1, AnomalyClass.GUNSHOT: 0.4, AnomalyClass.FIRE: 0.4, AnomalyClass.NORMAL: 0.1}, AnomalyClass.GUNSHOT),
    ({AnomalyClass.FIGHT: 0.0, AnomalyClass.GUNSHOT: 0.0, AnomalyClass.FIRE: 0.5, AnomalyClass.NORMAL: 0.5}, AnomalyClass.FIRE),
])
def test_argmax_tie_break_follows_enumeration_order(scores, expected):
    assert argmax_class(scores) is expected


def test_temporal_result_normalization_contract():
    with pytest.raises(ValueError):
        TemporalResult({AnomalyClass.FIGHT: 0.5, AnomalyClass.NORMAL: 0.6})
    r = TemporalResult.from_raw({"fight": 2.0, "normal": 6.0})
    assert r.scores == {AnomalyClass.FIGHT: 0.25, AnomalyClass.NORMAL: 0.75}
    assert r.argmax_class is AnomalyClass.NORMAL


@given(st.lists(st.floats(0.001, 100.0), min_size=4, max_size=4))
def test_argmax_attains_max(raw):
    r = TemporalResult.from_raw(dict(zip(AnomalyClass, raw)))
    assert abs(sum(r.scores.values()) - 1.0) <= 1e-6
    assert r.scores[r.argmax_class] == max(r.scores.values())


def test_spatial_result_rejects_frames_outside_span():
    with pytest.raises(ValueError):
        SpatialResult(0, (0, 14), {15: ()})


def test_prediction_invariants():
    with pytest.raises(ValueError):
        AnomalyPrediction(0, AnomalyClass.NORMAL, PredictionSource.SPATIAL_OVERRIDE)
    with pytest.raises(ValueError):
        AnomalyPrediction(0, AnomalyClass.FIGHT, PredictionSource.TEMPORAL, latency_ms={"end_to_end": -1.0})
    p = AnomalyPrediction(2, AnomalyClass.FIRE, PredictionSource.SPATIAL_OVERRIDE,
                          {AnomalyClass.NORMAL: 1.0}, {"end_to_end": 3.0}, 500.0)
    assert AnomalyPrediction.from_dict(p.to_dict()) == p
    assert "latency_ms" not in p.to_dict(timing=False)
