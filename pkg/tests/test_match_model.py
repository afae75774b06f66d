import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pitchstream.match_model import (
    BoundingBox,
    Detection,
    FrameRecord,
    InvariantViolation,
    KeypointObservation,
    MalformedRecord,
    NonMonotonicFrameIndex,
    NumberObservation,
    ObjectClass,
    parse_frame_line,
    parse_observation_stream,
    serialize_frame,
    standard_field_model,
    validate_frame,
)


def make_record(frame=0, n_dets=2, with_extras=False):
    dets = []
    for i in range(n_dets):
        emb = patch = num = None
        if with_extras:
            v = np.arange(1.0, 9.0) + i
            emb = v / np.linalg.norm(v)
            patch = (np.arange(2 * 3 * 3) % 256).astype(np.uint8).reshape(2, 3, 3)
            num = NumberObservation(7 + i, 0.8)
        dets.append(
            Detection(
                BoundingBox(10.0 * i, 5.0, 20.0, 40.0),
                ObjectClass.PLAYER,
                0.9,
                emb,
                patch,
                num,
            )
        )
    kps = (KeypointObservation(1, 100.0, 200.0, 0.9),)
    return FrameRecord(frame, frame * 40, tuple(dets), kps)


# -- parsing ------------------------------------------------------------------


def test_empty_input_is_empty_sequence():
    assert list(parse_observation_stream("")) == []
    assert list(parse_observation_stream([])) == []


def test_parse_echoes_fields():
    line = json.dumps(
        {
            "frame": 3,
            "ts_ms": 120,
            "detections": [
                {"bbox": [1, 2, 3, 4], "class": "player", "conf": 0.7},
                {"bbox": [5, 6, 7, 8], "class": "ball", "conf": 0.8},
            ],
            "keypoints": [{"id": 7, "x": 640.0, "y": 360.0, "score": 1.0}],
        }
    )
    (rec,) = parse_observation_stream([line])
    assert rec.frame_index == 3 and rec.ts_ms == 120
    assert len(rec.detections) == 2
    assert rec.detections[0].bbox == BoundingBox(1, 2, 3, 4)
    assert rec.detections[1].obj_class is ObjectClass.BALL
    assert rec.keypoints[0].id == 7


def test_missing_frame_key_reports_line_number():
    lines = ['{"frame": 0, "detections": [], "keypoints": []}', '{"detections": []}']
    with pytest.raises(MalformedRecord) as e:
        list(parse_observation_stream(lines))
    assert e.value.line_no == 2


def test_invalid_json_is_malformed():
    with pytest.raises(MalformedRecord):
        list(parse_observation_stream(["{not json"]))


def test_non_monotonic_frame_index():
    lines = [json.dumps({"frame": f}) for f in (0, 1, 1)]
    with pytest.raises(NonMonotonicFrameIndex):
        list(parse_observation_stream(lines))


def test_embedding_norm_slack():
    def line(scale):
        v = (np.ones(4) / 2.0) * scale
        return json.dumps(
            {
                "frame": 0,
                "detections": [
                    {"bbox": [0, 0, 1, 1], "class": "player", "conf": 0.5, "embedding": v.tolist()}
                ],
            }
        )

    (rec,) = parse_observation_stream([line(1.05)])  # within slack: renormalized
    assert math.isclose(float(np.linalg.norm(rec.detections[0].embedding)), 1.0)
    with pytest.raises(MalformedRecord):
        list(parse_observation_stream([line(1.5)]))


# -- round trip ---------------------------------------------------------------


def test_round_trip_fixed():
    rec = make_record(5, 3, with_extras=True)
    back = parse_frame_line(serialize_frame(rec))
    assert back.frame_index == rec.frame_index and back.ts_ms == rec.ts_ms
    for a, b in zip(back.detections, rec.detections):
        assert a.bbox == b.bbox and a.obj_class is b.obj_class
        assert np.allclose(a.embedding, b.embedding)
        assert np.array_equal(a.patch, b.patch)
        assert a.number_obs == b.number_obs


@st.composite
def frame_records(draw):
    n = draw(st.integers(0, 4))
    dets = []
    for _ in range(n):
        x = draw(st.floats(-100, 1e4, allow_nan=False))
        y = draw(st.floats(-100, 1e4, allow_nan=False))
        w = draw(st.floats(0.5, 500))
        h = draw(st.floats(0.5, 500))
        conf = draw(st.floats(0, 1))
        cls = draw(st.sampled_from(list(ObjectClass)))
        dets.append(Detection(BoundingBox(x, y, w, h), cls, conf))
    kps = []
    for kid in draw(st.lists(st.integers(1, 17), unique=True, max_size=3)):
        kps.append(
            KeypointObservation(
                kid,
                draw(st.floats(0, 1280)),
                draw(st.floats(0, 720)),
                draw(st.floats(0, 1)),
            )
        )
    return FrameRecord(draw(st.integers(0, 10**6)), draw(st.integers(0, 10**9)), tuple(dets), tuple(kps))


@settings(max_examples=200, deadline=None)
@given(frame_records())
def test_round_trip_property(rec):
    assert parse_frame_line(serialize_frame(rec)) == rec


# -- invariants ---------------------------------------------------------------


def test_zero_width_bbox_rejected():
    with pytest.raises(InvariantViolation) as e:
        BoundingBox(0, 0, 0, 10)
    assert e.value.field == "bbox.w"


def test_bbox_derived_quantities():
    b = BoundingBox(10, 20, 30, 40)
    assert (b.cx, b.cy) == (25, 40)
    assert b.aspect == 0.75
    assert b.bottom_center == (25, 60)
    cx, cy, a, h = b.to_xyah()
    assert BoundingBox.from_xyah(cx, cy, a, h) == b


def test_iou_basics():
    a = BoundingBox(0, 0, 10, 10)
    assert a.iou(a) == 1.0
    assert a.iou(BoundingBox(20, 20, 10, 10)) == 0.0
    assert math.isclose(a.iou(BoundingBox(5, 0, 10, 10)), 50 / 150)


def test_number_observation_range():
    with pytest.raises(InvariantViolation):
        NumberObservation(100, 0.5)
    with pytest.raises(InvariantViolation):
        NumberObservation(5, 1.5)


def test_keypoint_id_range():
    with pytest.raises(InvariantViolation):
        KeypointObservation(0, 0, 0, 0.5)
    with pytest.raises(InvariantViolation):
        KeypointObservation(18, 0, 0, 0.5)


# -- validate_frame -----------------------------------------------------------


def test_confidence_floor_drops_detection():
    rec = FrameRecord(
        0,
        0,
        (
            Detection(BoundingBox(0, 0, 1, 1), ObjectClass.PLAYER, 0.1),
            Detection(BoundingBox(0, 0, 1, 1), ObjectClass.PLAYER, 0.9),
        ),
        (),
    )
    frame = validate_frame(rec, 0.3)
    assert len(frame.detections) == 1
    assert frame.detections[0].confidence == 0.9


def test_duplicate_keypoint_id_rejected():
    rec = FrameRecord(
        0,
        0,
        (),
        (KeypointObservation(7, 0, 0, 1.0), KeypointObservation(7, 1, 1, 1.0)),
    )
    with pytest.raises(InvariantViolation) as e:
        validate_frame(rec)
    assert e.value.field == "keypoints"


@settings(max_examples=100, deadline=None)
@given(frame_records(), st.floats(0, 1))
def test_validate_never_adds_detections(rec, floor):
    assert len(validate_frame(rec, floor).detections) <= len(rec.detections)


# -- field model --------------------------------------------------------------


def test_field_model_constants():
    fm = standard_field_model()
    assert len(fm.keypoints) == 17
    assert fm.keypoints[1] == (0.0, 0.0)
    assert fm.keypoints[7] == (52.5, 34.0)


def test_field_model_reflection_invariance():
    fm = standard_field_model()
    pts = {(round(x, 9), round(y, 9)) for x, y in fm.keypoints.values()}
    mirrored_x = {(round(fm.length_m - x, 9), y) for x, y in pts}
    mirrored_y = {(x, round(fm.width_m - y, 9)) for x, y in pts}
    assert pts == mirrored_x
    assert pts == mirrored_y
