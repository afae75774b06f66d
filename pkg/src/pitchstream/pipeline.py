"""Single-pass streaming orchestration: validation, tracking, team
clustering, homography, field projection, and summary accumulation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Optional, TextIO

import numpy as np

from .config import PipelineConfig
from .geometry import DegenerateProjection, HomographyTracker, project_point
from .highlights import (
    CLIP_ROWS,
    ClipSample,
    HighlightClass,
    SoftmaxModel,
    classify_clip,
    extract_highlight_intervals,
)
from .jersey import NumberVote
from .match_model import (
    Detection,
    FrameRecord,
    GroupLabel,
    ObjectClass,
    ValidatedFrame,
    standard_field_model,
    validate_frame,
)
from .summary import SummaryAccumulator, build_summary
from .teams import (
    GroupVote,
    InsufficientForeground,
    NoGrassFound,
    cluster_teams,
    estimate_grass_model,
    extract_color_feature,
    label_clusters,
    nearest_cluster,
    segment_person,
)
from .tracking import Tracker, TrackerConfig, TrackStatus

GRASS_SAMPLE_TARGET = 20000  # pixels accumulated before fitting the pitch model


@dataclass
class _TrackAux:
    group_vote: GroupVote = field(default_factory=GroupVote)
    number_vote: NumberVote = field(default_factory=NumberVote)
    last_group: GroupLabel = GroupLabel.UNKNOWN


class MatchPipeline:
    """Owns all per-match mutable state; strictly sequential per match."""

    def __init__(self, config: Optional[PipelineConfig] = None, tracks_out: Optional[TextIO] = None):
        self.cfg = config or PipelineConfig()
        self.cfg.validate()
        self.tracker = Tracker(
            TrackerConfig(
                n_init=self.cfg.n_init,
                max_age=self.cfg.max_age,
                appearance_gate=self.cfg.appearance_gate,
                hard_gate_confidence=self.cfg.hard_gate_confidence,
                hard_gate_enabled=self.cfg.hard_gate_enabled,
                ball_noise_scale=self.cfg.ball_noise_scale,
            )
        )
        self.field = standard_field_model()
        self.homography = HomographyTracker(
            self.cfg.homography_min_keypoints,
            self.cfg.homography_min_score,
            self.cfg.homography_max_hold,
        )
        self.summary = SummaryAccumulator(self.cfg.heatmap_cols, self.cfg.heatmap_rows)
        self.tracks_out = tracks_out

        self.grass_model = None
        self._grass_pixels: list[np.ndarray] = []
        self._grass_px_count = 0
        self._feature_buffer: list[tuple[int, object, Optional[tuple[float, float]]]] = []
        self._centroids: Optional[np.ndarray] = None
        self._cluster_labels: dict[int, GroupLabel] = {}
        self._last_cluster_frame = -(10**9)
        self._aux: dict[int, _TrackAux] = {}
        # frames observed before the first clustering pass, replayed once
        # group labels exist: list of (ball_pos, [(track_id, field_pos)])
        self._pending_summary: list = []
        self._roster: dict[str, dict[str, int]] = {"TeamA": {}, "TeamB": {}}
        self.frames_processed = 0

    # -- team clustering ----------------------------------------------------

    def _ensure_grass(self, patch: np.ndarray) -> bool:
        if self.grass_model is not None:
            return True
        self._grass_pixels.append(patch.reshape(-1, 3))
        self._grass_px_count += patch.shape[0] * patch.shape[1]
        if self._grass_px_count >= GRASS_SAMPLE_TARGET:
            sample = np.concatenate(self._grass_pixels)
            try:
                self.grass_model = estimate_grass_model(sample)
            except NoGrassFound:
                self._grass_pixels = [sample[-(GRASS_SAMPLE_TARGET // 2) :]]
                self._grass_px_count = self._grass_pixels[0].shape[0]
                return False
            self._grass_pixels = []
            return True
        return False

    def _color_feature(self, det: Detection):
        if det.patch is None or not self._ensure_grass(det.patch):
            return None
        try:
            mask = segment_person(det.patch, self.grass_model)
            return extract_color_feature(det.patch, mask)
        except InsufficientForeground:
            return None

    def _run_clustering(self, frame_index: int) -> None:
        feats = [f for _, f, _ in self._feature_buffer]
        if len(feats) < self.cfg.team_count:
            return
        assign, centroids = cluster_teams(
            feats, self.cfg.team_count, self.cfg.cluster_seed
        )
        positions = [p for _, _, p in self._feature_buffer]
        self._centroids = centroids
        self._cluster_labels = label_clusters(assign, positions, self.field.length_m)
        # backfill group votes for the buffered observations
        for (tid, _, _), c in zip(self._feature_buffer, assign):
            aux = self._aux.get(tid)
            if aux is not None:
                aux.group_vote.add(self._cluster_labels.get(int(c), GroupLabel.UNKNOWN))
        self._last_cluster_frame = frame_index
        self._replay_pending()

    def _replay_pending(self) -> None:
        """Feed summary frames held back while group labels were unknown."""
        for ball_pos, positions in self._pending_summary:
            players = []
            for tid, pos in positions:
                aux = self._aux.get(tid)
                if aux is None:
                    continue
                group, _ = aux.group_vote.result()
                if group is not GroupLabel.UNKNOWN:
                    players.append((tid, pos, group))
            self.summary.observe(ball_pos, players)
        self._pending_summary.clear()

    # -- per-frame processing ------------------------------------------------

    def process(self, record: FrameRecord) -> list[dict]:
        """Process one frame; returns the track records emitted for it."""
        frame = validate_frame(record, self.cfg.confidence_floor)
        hom, refreshed = self.homography.update(
            frame.keypoints, self.field.keypoints, frame.frame_index
        )

        # attach group hints to detections when centroids are available
        detections = list(frame.detections)
        det_features = {}
        for i, det in enumerate(detections):
            if det.obj_class is ObjectClass.BALL or det.patch is None:
                continue
            feat = self._color_feature(det)
            if feat is None:
                continue
            det_features[i] = feat
            if self._centroids is not None:
                c, conf = nearest_cluster(feat, self._centroids)
                label = self._cluster_labels.get(c, GroupLabel.UNKNOWN)
                if label is not GroupLabel.UNKNOWN:
                    detections[i] = det.with_group(label, conf)
        if det_features:
            frame = ValidatedFrame(
                frame.frame_index, frame.ts_ms, tuple(detections), frame.keypoints
            )

        self.tracker.step(frame)

        def field_pos(bbox) -> Optional[tuple[float, float]]:
            if hom is None:
                return None
            try:
                return project_point(hom, bbox.bottom_center)
            except DegenerateProjection:
                return None

        # per-track bookkeeping for matched detections
        det_index = {id(d): i for i, d in enumerate(detections)}
        for trk, det in self.tracker.last_matches:
            aux = self._aux.setdefault(trk.track_id, _TrackAux())
            i = det_index.get(id(det))
            if i is not None and i in det_features:
                pos = field_pos(det.bbox)
                self._feature_buffer.append((trk.track_id, det_features[i], pos))
                if self._centroids is not None and detections[i].group is not GroupLabel.UNKNOWN:
                    aux.group_vote.add(detections[i].group)
            if det.number_obs is not None:
                aux.number_vote.add(det.number_obs.value, det.number_obs.confidence)
            group, conf = aux.group_vote.result()
            if group is not aux.last_group and aux.last_group is not GroupLabel.UNKNOWN:
                aux.number_vote.reset()
            aux.last_group = group
            trk.group = group
            trk.group_confidence = conf
            est = aux.number_vote.infer(
                self.cfg.number_min_obs, self.cfg.number_confidence_floor
            )
            trk.number = est.value
            trk.number_confidence = est.confidence

        # (re)cluster when the window fills or on the refresh cadence
        if self._centroids is None:
            if len(self._feature_buffer) >= self.cfg.cluster_window:
                self._run_clustering(frame.frame_index)
        elif (
            frame.frame_index - self._last_cluster_frame >= self.cfg.cluster_refresh_frames
            and len(self._feature_buffer) >= self.cfg.cluster_window
        ):
            self._feature_buffer = self._feature_buffer[-self.cfg.cluster_window :]
            self._run_clustering(frame.frame_index)
        if len(self._feature_buffer) > 2 * self.cfg.cluster_window:
            self._feature_buffer = self._feature_buffer[-self.cfg.cluster_window :]

        # summary accumulation in field coordinates
        ball = self.tracker.ball_track
        ball_pos = None
        if ball is not None and ball.time_since_update <= 1:
            ball_pos = field_pos(ball.bbox)
        players = []
        positions = []
        out_records = []
        confirmed = [t for t in self.tracker.tracks if t.status is TrackStatus.CONFIRMED]
        boxes = [t.bbox for t in confirmed]
        field_positions: list = [None] * len(confirmed)
        if hom is not None and confirmed:
            pts = np.array([bb.bottom_center for bb in boxes])
            proj = np.column_stack([pts, np.ones(len(pts))]) @ hom.matrix.T
            w = proj[:, 2]
            ok = np.abs(w) >= 1e-9 * np.linalg.norm(proj[:, :2], axis=1)
            for i in np.flatnonzero(ok):
                field_positions[i] = (proj[i, 0] / w[i], proj[i, 1] / w[i])
        round_boxes = (
            np.round([(bb.x, bb.y, bb.w, bb.h) for bb in boxes], 2).tolist()
            if boxes
            else []
        )
        for trk, rbb, pos in zip(confirmed, round_boxes, field_positions):
            if pos is not None:
                positions.append((trk.track_id, pos))
                if trk.group is not GroupLabel.UNKNOWN:
                    players.append((trk.track_id, pos, trk.group))
            rec = {
                "frame": frame.frame_index,
                "track_id": trk.track_id,
                "class": trk.obj_class.value,
                "bbox": rbb,
                "group": None if trk.group is GroupLabel.UNKNOWN else trk.group.value,
                "group_conf": round(trk.group_confidence, 4),
                "number": trk.number,
                "field_pos": [round(pos[0], 3), round(pos[1], 3)] if pos else None,
            }
            out_records.append(rec)
            if trk.number is not None and trk.group.team is not None:
                self._roster[trk.group.team.value][str(trk.track_id)] = trk.number
        if ball is not None and ball.status is TrackStatus.CONFIRMED:
            bb = ball.bbox
            pos = field_pos(bb)
            out_records.append(
                {
                    "frame": frame.frame_index,
                    "track_id": ball.track_id,
                    "class": "ball",
                    "bbox": [round(v, 2) for v in (bb.x, bb.y, bb.w, bb.h)],
                    "group": None,
                    "group_conf": 0.0,
                    "number": None,
                    "field_pos": [round(pos[0], 3), round(pos[1], 3)] if pos else None,
                }
            )
        if self._centroids is None:
            self._pending_summary.append((ball_pos, positions))
        else:
            self.summary.observe(ball_pos, players)

        # prune bookkeeping for tracks that no longer exist
        if self.frames_processed % 500 == 499:
            live = {t.track_id for t in self.tracker.tracks}
            if ball is not None:
                live.add(ball.track_id)
            self._aux = {tid: aux for tid, aux in self._aux.items() if tid in live}

        if self.tracks_out is not None:
            if refreshed and hom is not None:
                self.tracks_out.write(
                    json.dumps(
                        {
                            "frame": frame.frame_index,
                            "homography": [round(v, 12) for v in hom.matrix.ravel()],
                        }
                    )
                    + "\n"
                )
            for rec in out_records:
                self.tracks_out.write(json.dumps(rec) + "\n")

        self.frames_processed += 1
        return out_records

    def finalize(self, highlights=()) -> str:
        """Run any deferred clustering and build the summary JSON."""
        if self._centroids is None and self._feature_buffer:
            self._run_clustering(self.frames_processed)
        self._replay_pending()
        return build_summary(self.summary, highlights, self._roster)


def classify_clip_stream(
    model: SoftmaxModel, lines: Iterable[str], fps: int = 25
) -> list[tuple[HighlightClass, int, int]]:
    """Classify a JSONL clip stream and merge highlight intervals."""
    classified = []
    clip_frames = CLIP_ROWS * fps
    for line in lines:
        line = line.strip()
        if not line:
            continue
        obj = json.loads(line)
        clip = ClipSample(int(obj["start_frame"]), np.asarray(obj["features"], dtype=np.float64))
        cls, _ = classify_clip(model, clip)
        classified.append((cls, clip.start_frame, clip.start_frame + clip_frames - 1))
    classified.sort(key=lambda t: t[1])
    return extract_highlight_intervals(classified)
