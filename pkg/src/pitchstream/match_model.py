"""Core domain types, the standard field model, and observation-stream parsing."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Iterator, Optional

import numpy as np

FIELD_LENGTH_M = 105.0
FIELD_WIDTH_M = 68.0

# Embeddings whose norm deviates from 1 by more than this are rejected;
# smaller deviations are silently renormalized.
EMBEDDING_NORM_SLACK = 0.10

DEFAULT_CONFIDENCE_FLOOR = 0.3


class MalformedRecord(ValueError):
    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


class NonMonotonicFrameIndex(ValueError):
    def __init__(self, frame_index: int):
        self.frame_index = frame_index
        super().__init__(f"frame index {frame_index} is not strictly increasing")


class InvariantViolation(ValueError):
    def __init__(self, field_name: str, reason: str = ""):
        self.field = field_name
        self.reason = reason
        super().__init__(f"{field_name}: {reason}" if reason else field_name)


class ObjectClass(str, Enum):
    PLAYER = "player"
    REFEREE = "referee"
    BALL = "ball"


class GroupLabel(str, Enum):
    TEAM_A = "TeamA"
    TEAM_B = "TeamB"
    REFEREE = "Referee"
    GOALKEEPER_A = "GoalkeeperA"
    GOALKEEPER_B = "GoalkeeperB"
    UNKNOWN = "Unknown"

    @property
    def team(self) -> Optional["GroupLabel"]:
        """Team a label contributes possession to (goalkeepers count, referees don't)."""
        if self in (GroupLabel.TEAM_A, GroupLabel.GOALKEEPER_A):
            return GroupLabel.TEAM_A
        if self in (GroupLabel.TEAM_B, GroupLabel.GOALKEEPER_B):
            return GroupLabel.TEAM_B
        return None


@dataclass(frozen=True)
class BoundingBox:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0):
            raise InvariantViolation("bbox.w", "width must be positive")
        if not (self.h > 0):
            raise InvariantViolation("bbox.h", "height must be positive")

    @property
    def cx(self) -> float:
        return self.x + self.w / 2.0

    @property
    def cy(self) -> float:
        return self.y + self.h / 2.0

    @property
    def aspect(self) -> float:
        return self.w / self.h

    @property
    def bottom_center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h)

    def to_xyah(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.aspect, self.h])

    @staticmethod
    def from_xyah(cx: float, cy: float, a: float, h: float) -> "BoundingBox":
        w = a * h
        return BoundingBox(cx - w / 2.0, cy - h / 2.0, w, h)

    def iou(self, other: "BoundingBox") -> float:
        x1 = max(self.x, other.x)
        y1 = max(self.y, other.y)
        x2 = min(self.x + self.w, other.x + other.w)
        y2 = min(self.y + self.h, other.y + other.h)
        inter = max(0.0, x2 - x1) * max(0.0, y2 - y1)
        union = self.w * self.h + other.w * other.h - inter
        return inter / union if union > 0 else 0.0


@dataclass(frozen=True)
class NumberObservation:
    value: int
    confidence: float

    def __post_init__(self):
        if not (0 <= self.value <= 99):
            raise InvariantViolation("number.value", "must be in [0, 99]")
        if not (0.0 <= self.confidence <= 1.0):
            raise InvariantViolation("number.conf", "must be in [0, 1]")


@dataclass(frozen=True)
class Detection:
    bbox: BoundingBox
    obj_class: ObjectClass
    confidence: float
    embedding: Optional[np.ndarray] = None
    patch: Optional[np.ndarray] = None  # (h_p, w_p, 3) uint8
    number_obs: Optional[NumberObservation] = None
    # Group hint attached downstream of clustering; never present on the wire.
    group: GroupLabel = GroupLabel.UNKNOWN
    group_confidence: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.confidence <= 1.0):
            raise InvariantViolation("detection.confidence", "must be in [0, 1]")
        if self.embedding is not None:
            n = float(np.linalg.norm(self.embedding))
            if abs(n - 1.0) > 1e-6:
                raise InvariantViolation("detection.embedding", "must be unit-norm")

    def with_group(self, label: GroupLabel, confidence: float) -> "Detection":
        return replace(self, group=label, group_confidence=confidence)


@dataclass(frozen=True)
class KeypointObservation:
    id: int
    x: float
    y: float
    score: float
    score_patch: Optional[np.ndarray] = None  # S x S, S odd

    def __post_init__(self):
        if not (1 <= self.id <= 17):
            raise InvariantViolation("keypoint.id", "must be in [1, 17]")
        if not (0.0 <= self.score <= 1.0):
            raise InvariantViolation("keypoint.score", "must be in [0, 1]")
        if self.score_patch is not None:
            p = self.score_patch
            if p.ndim != 2 or p.shape[0] != p.shape[1] or p.shape[0] % 2 == 0:
                raise InvariantViolation("keypoint.score_patch", "must be square with odd side")


@dataclass(frozen=True)
class FrameRecord:
    frame_index: int
    ts_ms: int
    detections: tuple[Detection, ...]
    keypoints: tuple[KeypointObservation, ...]


@dataclass(frozen=True)
class ValidatedFrame:
    frame_index: int
    ts_ms: int
    detections: tuple[Detection, ...]
    keypoints: tuple[KeypointObservation, ...]


@dataclass(frozen=True)
class FieldModel:
    length_m: float
    width_m: float
    keypoints: dict[int, tuple[float, float]]
    zones: dict[str, tuple[float, float, float, float]]  # name -> (x0, y0, x1, y1)

    def __post_init__(self):
        if len(self.keypoints) != 17:
            raise InvariantViolation("field.keypoints", "exactly 17 keypoints required")
        for kid, (x, y) in self.keypoints.items():
            if not (0.0 <= x <= self.length_m and 0.0 <= y <= self.width_m):
                raise InvariantViolation("field.keypoints", f"keypoint {kid} out of bounds")


def standard_field_model() -> FieldModel:
    """105 x 68 m pitch with the 17 reference keypoints used for registration.

    1-4 corners, 5-6 halfway-line endpoints, 7 center mark, 8-9 center circle
    on the halfway line, 10-13 left penalty-area corners, 14-17 right.
    """
    L, W = FIELD_LENGTH_M, FIELD_WIDTH_M
    r = 9.15  # center circle radius
    py = 20.16  # penalty area half-width
    px = 16.5  # penalty area depth
    kps = {
        1: (0.0, 0.0),
        2: (L, 0.0),
        3: (L, W),
        4: (0.0, W),
        5: (L / 2, 0.0),
        6: (L / 2, W),
        7: (L / 2, W / 2),
        8: (L / 2, W / 2 - r),
        9: (L / 2, W / 2 + r),
        10: (0.0, W / 2 - py),
        11: (px, W / 2 - py),
        12: (px, W / 2 + py),
        13: (0.0, W / 2 + py),
        14: (L - px, W / 2 - py),
        15: (L, W / 2 - py),
        16: (L, W / 2 + py),
        17: (L - px, W / 2 + py),
    }
    zones = {
        "defensive_third_a": (0.0, 0.0, L / 3, W),
        "middle_third": (L / 3, 0.0, 2 * L / 3, W),
        "defensive_third_b": (2 * L / 3, 0.0, L, W),
    }
    return FieldModel(L, W, kps, zones)


def _parse_detection(obj: dict, line_no: int) -> Detection:
    try:
        bx, by, bw, bh = obj["bbox"]
        cls = ObjectClass(obj["class"])
        conf = float(obj["conf"])
    except (KeyError, ValueError, TypeError) as e:
        raise MalformedRecord(line_no, f"bad detection: {e}") from None

    embedding = None
    if obj.get("embedding") is not None:
        emb = np.asarray(obj["embedding"], dtype=np.float64)
        n = float(np.linalg.norm(emb))
        if abs(n - 1.0) > EMBEDDING_NORM_SLACK or n == 0.0:
            raise MalformedRecord(line_no, f"embedding norm {n:.4f} too far from 1")
        embedding = emb / n

    patch = None
    if obj.get("patch") is not None:
        p = obj["patch"]
        try:
            w_p, h_p = int(p["w"]), int(p["h"])
            patch = np.asarray(p["rgb"], dtype=np.uint8).reshape(h_p, w_p, 3)
        except (KeyError, ValueError, TypeError) as e:
            raise MalformedRecord(line_no, f"bad patch: {e}") from None

    number_obs = None
    if obj.get("number") is not None:
        nm = obj["number"]
        try:
            number_obs = NumberObservation(int(nm["value"]), float(nm["conf"]))
        except (KeyError, InvariantViolation, ValueError, TypeError) as e:
            raise MalformedRecord(line_no, f"bad number observation: {e}") from None

    try:
        bbox = BoundingBox(float(bx), float(by), float(bw), float(bh))
        return Detection(bbox, cls, conf, embedding, patch, number_obs)
    except (InvariantViolation, ValueError, TypeError) as e:
        raise MalformedRecord(line_no, str(e)) from None


def _parse_keypoint(obj: dict, line_no: int) -> KeypointObservation:
    try:
        patch = None
        if obj.get("patch") is not None:
            patch = np.asarray(obj["patch"], dtype=np.float64)
        return KeypointObservation(
            int(obj["id"]), float(obj["x"]), float(obj["y"]), float(obj["score"]), patch
        )
    except MalformedRecord:
        raise
    except (KeyError, InvariantViolation, ValueError, TypeError) as e:
        raise MalformedRecord(line_no, f"bad keypoint: {e}") from None


def parse_frame_line(line: str, line_no: int = 0) -> FrameRecord:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise MalformedRecord(line_no, f"invalid JSON: {e.msg}") from None
    if not isinstance(obj, dict):
        raise MalformedRecord(line_no, "record must be a JSON object")
    if "frame" not in obj:
        raise MalformedRecord(line_no, 'missing "frame" key')
    try:
        frame_index = int(obj["frame"])
        ts_ms = int(obj.get("ts_ms", 0))
    except (ValueError, TypeError):
        raise MalformedRecord(line_no, "frame/ts_ms must be integers") from None
    if frame_index < 0:
        raise MalformedRecord(line_no, "frame index must be non-negative")
    dets = tuple(_parse_detection(d, line_no) for d in obj.get("detections", []))
    kps = tuple(_parse_keypoint(k, line_no) for k in obj.get("keypoints", []))
    return FrameRecord(frame_index, ts_ms, dets, kps)


def parse_observation_stream(source) -> Iterator[FrameRecord]:
    """Lazily parse newline-delimited frame records.

    Accepts bytes, str, or any iterable of lines (e.g. an open file).
    Frame indices must be strictly increasing.
    """
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    if isinstance(source, str):
        source = source.splitlines()
    last = -1
    for line_no, line in enumerate(source, start=1):
        if isinstance(line, bytes):
            line = line.decode("utf-8")
        line = line.strip()
        if not line:
            continue
        rec = parse_frame_line(line, line_no)
        if rec.frame_index <= last:
            raise NonMonotonicFrameIndex(rec.frame_index)
        last = rec.frame_index
        yield rec


def serialize_frame(rec: FrameRecord) -> str:
    """Inverse of parse_frame_line (round-trips on valid records)."""
    dets = []
    for d in rec.detections:
        obj = {
            "bbox": [d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h],
            "class": d.obj_class.value,
            "conf": d.confidence,
        }
        if d.embedding is not None:
            obj["embedding"] = d.embedding.tolist()
        if d.patch is not None:
            h_p, w_p = d.patch.shape[:2]
            obj["patch"] = {"w": w_p, "h": h_p, "rgb": d.patch.ravel().tolist()}
        if d.number_obs is not None:
            obj["number"] = {"value": d.number_obs.value, "conf": d.number_obs.confidence}
        dets.append(obj)
    kps = []
    for k in rec.keypoints:
        obj = {"id": k.id, "x": k.x, "y": k.y, "score": k.score}
        if k.score_patch is not None:
            obj["patch"] = k.score_patch.tolist()
        kps.append(obj)
    return json.dumps(
        {"frame": rec.frame_index, "ts_ms": rec.ts_ms, "detections": dets, "keypoints": kps}
    )


def validate_frame(
    rec: FrameRecord, confidence_floor: float = DEFAULT_CONFIDENCE_FLOOR
) -> ValidatedFrame:
    """Check invariants and drop detections below the confidence floor."""
    seen_ids = set()
    for k in rec.keypoints:
        if k.id in seen_ids:
            raise InvariantViolation("keypoints", f"duplicate keypoint id {k.id}")
        seen_ids.add(k.id)
    kept = tuple(d for d in rec.detections if d.confidence >= confidence_floor)
    return ValidatedFrame(rec.frame_index, rec.ts_ms, kept, rec.keypoints)
