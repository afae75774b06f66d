"""Tracking-by-detection: constant-velocity Kalman filter, gated cascaded
association on appearance, team-aware hard gate, and track lifecycle."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.stats import chi2

from .match_model import BoundingBox, Detection, GroupLabel, ObjectClass, ValidatedFrame

# 0.95 quantile of the chi-square distribution with 4 dof (cx, cy, a, h).
CHI2_GATE_4DOF = float(chi2.ppf(0.95, df=4))

# Noise scales relative to box height.
STD_WEIGHT_POSITION = 1.0 / 20.0
STD_WEIGHT_VELOCITY = 1.0 / 160.0
STD_ASPECT = 1e-2
STD_ASPECT_VELOCITY = 1e-5
STD_ASPECT_MEAS = 1e-1  # aspect is far noisier as a measurement than as a state


class SingularInnovation(np.linalg.LinAlgError):
    pass


class EmptyGallery(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


@dataclass
class KalmanState:
    mean: np.ndarray  # (cx, cy, a, h, vcx, vcy, va, vh)
    covariance: np.ndarray  # 8x8 SPD


_F = np.eye(8)
_F[:4, 4:] = np.eye(4)
_H = np.eye(4, 8)


def _symmetrize(P: np.ndarray) -> np.ndarray:
    return (P + P.T) / 2.0


def kf_initiate(detection: Detection, noise_scale: float = 1.0) -> KalmanState:
    cx, cy, a, h = detection.bbox.to_xyah()
    mean = np.array([cx, cy, a, h, 0.0, 0.0, 0.0, 0.0])
    s = noise_scale
    std = np.array(
        [
            2 * STD_WEIGHT_POSITION * h * s,
            2 * STD_WEIGHT_POSITION * h * s,
            STD_ASPECT,
            2 * STD_WEIGHT_POSITION * h * s,
            10 * STD_WEIGHT_VELOCITY * h * s,
            10 * STD_WEIGHT_VELOCITY * h * s,
            STD_ASPECT_VELOCITY,
            10 * STD_WEIGHT_VELOCITY * h * s,
        ]
    )
    return KalmanState(mean, np.diag(std**2))


def _process_noise(h: float, noise_scale: float) -> np.ndarray:
    s = noise_scale
    std = np.array(
        [
            STD_WEIGHT_POSITION * h * s,
            STD_WEIGHT_POSITION * h * s,
            STD_ASPECT,
            STD_WEIGHT_POSITION * h * s,
            STD_WEIGHT_VELOCITY * h * s,
            STD_WEIGHT_VELOCITY * h * s,
            STD_ASPECT_VELOCITY,
            STD_WEIGHT_VELOCITY * h * s,
        ]
    )
    return np.diag(std**2)


def _measurement_noise(h: float) -> np.ndarray:
    std = np.array(
        [
            STD_WEIGHT_POSITION * h,
            STD_WEIGHT_POSITION * h,
            STD_ASPECT_MEAS,
            STD_WEIGHT_POSITION * h,
        ]
    )
    return np.diag(std**2)


def kf_predict(state: KalmanState, noise_scale: float = 1.0) -> KalmanState:
    mean = _F @ state.mean
    Q = _process_noise(state.mean[3], noise_scale)
    cov = _symmetrize(_F @ state.covariance @ _F.T + Q)
    return KalmanState(mean, cov)


def _project(state: KalmanState) -> tuple[np.ndarray, np.ndarray]:
    """Predicted measurement mean and innovation covariance."""
    R = _measurement_noise(state.mean[3])
    S = _H @ state.covariance @ _H.T + R
    return _H @ state.mean, _symmetrize(S)


def kf_update(state: KalmanState, measurement: BoundingBox) -> KalmanState:
    z = measurement.to_xyah()
    z_pred, S = _project(state)
    try:
        chol = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise SingularInnovation("innovation covariance is not positive-definite") from None
    PHt = state.covariance @ _H.T
    # K = P Hᵀ S⁻¹ via two triangular solves
    K = np.linalg.solve(chol.T, np.linalg.solve(chol, PHt.T)).T
    mean = state.mean + K @ (z - z_pred)
    cov = _symmetrize(state.covariance - K @ S @ K.T)
    return KalmanState(mean, cov)


def mahalanobis_gate(state: KalmanState, detection: Detection) -> float:
    """Squared Mahalanobis distance of the detection under the predicted
    observation distribution; admissible iff <= CHI2_GATE_4DOF."""
    z_pred, S = _project(state)
    d = detection.bbox.to_xyah() - z_pred
    try:
        chol = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise SingularInnovation("innovation covariance is not positive-definite") from None
    y = np.linalg.solve(chol, d)
    return float(y @ y)


def appearance_distance(embedding: np.ndarray, gallery: Sequence[np.ndarray]) -> float:
    """Min cosine distance (1 - dot) between a query embedding and a gallery."""
    if len(gallery) == 0:
        raise EmptyGallery("gallery has no embeddings")
    G = np.asarray(gallery)
    if G.shape[1] != embedding.shape[0]:
        raise DimensionMismatch(f"{G.shape[1]} vs {embedding.shape[0]}")
    return float(np.min(1.0 - G @ embedding))


@dataclass
class AssociationResult:
    matches: list[tuple[int, int]]  # (track index, detection index)
    unmatched_tracks: list[int]
    unmatched_detections: list[int]


def solve_assignment(cost: np.ndarray, max_cost: float) -> AssociationResult:
    """Optimal min-cost assignment; pairs with cost > max_cost stay unmatched.

    Infeasible entries may be +inf. Rectangular matrices allowed.
    """
    cost = np.atleast_2d(np.asarray(cost, dtype=np.float64))
    n, m = cost.shape
    if n == 0 or m == 0:
        return AssociationResult([], list(range(n)), list(range(m)))
    clamped = np.minimum(cost, max_cost + 1e-5)
    rows, cols = linear_sum_assignment(clamped)
    matches = []
    matched_r, matched_c = set(), set()
    for r, c in zip(rows, cols):
        if cost[r, c] <= max_cost:
            matches.append((int(r), int(c)))
            matched_r.add(int(r))
            matched_c.add(int(c))
    return AssociationResult(
        matches,
        [i for i in range(n) if i not in matched_r],
        [j for j in range(m) if j not in matched_c],
    )


class TrackStatus(str, Enum):
    TENTATIVE = "tentative"
    CONFIRMED = "confirmed"
    DELETED = "deleted"


GALLERY_CAP = 100
TAIL_LEN = 10


@dataclass
class Track:
    track_id: int
    state: KalmanState
    obj_class: ObjectClass
    status: TrackStatus = TrackStatus.TENTATIVE
    hits: int = 0
    hit_streak: int = 0
    misses: int = 0
    time_since_update: int = 0
    gallery: deque = field(default_factory=lambda: deque(maxlen=GALLERY_CAP))
    tail: deque = field(default_factory=lambda: deque(maxlen=TAIL_LEN))
    group: GroupLabel = GroupLabel.UNKNOWN
    group_confidence: float = 0.0
    number: Optional[int] = None
    number_confidence: float = 0.0
    last_bbox: Optional[BoundingBox] = None
    _gal_buf: Optional[np.ndarray] = None
    _gal_count: int = 0
    _gal_pos: int = 0

    @property
    def bbox(self) -> BoundingBox:
        cx, cy, a, h = self.state.mean[:4]
        return BoundingBox.from_xyah(cx, cy, max(a, 1e-6), max(h, 1e-6))

    def add_embedding(self, embedding: np.ndarray) -> None:
        self.gallery.append(embedding)
        # mirror into a ring buffer so gallery_array() is O(1); min-cosine
        # distance is order-independent, so the rotation does not matter
        if self._gal_buf is None:
            self._gal_buf = np.empty((GALLERY_CAP, embedding.shape[0]))
        self._gal_buf[self._gal_pos] = embedding
        self._gal_pos = (self._gal_pos + 1) % GALLERY_CAP
        self._gal_count = min(self._gal_count + 1, GALLERY_CAP)

    def gallery_array(self) -> np.ndarray:
        if self._gal_buf is not None and self._gal_count == len(self.gallery):
            return self._gal_buf[: self._gal_count]
        return np.asarray(self.gallery)


@dataclass
class TrackerConfig:
    n_init: int = 3
    max_age: int = 30
    appearance_gate: float = 0.25
    iou_gate: float = 0.7  # max (1 - IoU) cost
    hard_gate_confidence: float = 0.7
    hard_gate_enabled: bool = True
    ball_noise_scale: float = 4.0


def _hard_gate_blocked(track: Track, det: Detection, cfg: TrackerConfig) -> bool:
    if not cfg.hard_gate_enabled:
        return False
    if track.group is GroupLabel.UNKNOWN or det.group is GroupLabel.UNKNOWN:
        return False
    return (
        track.group is not det.group
        and track.group_confidence >= cfg.hard_gate_confidence
        and det.group_confidence >= cfg.hard_gate_confidence
    )


# -- batched Kalman paths (numerically identical, one LAPACK call per batch) --


def _batch_stack(states: Sequence[KalmanState]) -> tuple[np.ndarray, np.ndarray]:
    return np.stack([s.mean for s in states]), np.stack([s.covariance for s in states])


def _batch_q_std(h: np.ndarray, noise_scale: float = 1.0) -> np.ndarray:
    n = len(h)
    std = np.empty((n, 8))
    std[:, 0] = std[:, 1] = std[:, 3] = STD_WEIGHT_POSITION * h * noise_scale
    std[:, 4] = std[:, 5] = std[:, 7] = STD_WEIGHT_VELOCITY * h * noise_scale
    std[:, 2] = STD_ASPECT
    std[:, 6] = STD_ASPECT_VELOCITY
    return std


def batch_predict(states: Sequence[KalmanState], noise_scale: float = 1.0) -> list[KalmanState]:
    if not states:
        return []
    means, covs = _batch_stack(states)
    q = _batch_q_std(means[:, 3], noise_scale) ** 2
    means = means @ _F.T
    covs = _F @ covs @ _F.T
    covs[:, np.arange(8), np.arange(8)] += q
    covs = (covs + covs.transpose(0, 2, 1)) / 2.0
    return [KalmanState(m, c) for m, c in zip(means, covs)]


def _batch_project(means: np.ndarray, covs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    S = covs[:, :4, :4].copy()
    h = means[:, 3]
    r = np.empty((len(h), 4))
    r[:, 0] = r[:, 1] = r[:, 3] = STD_WEIGHT_POSITION * h
    r[:, 2] = STD_ASPECT_MEAS
    S[:, np.arange(4), np.arange(4)] += r**2
    return means[:, :4], (S + S.transpose(0, 2, 1)) / 2.0


def batch_gating_distances(states: Sequence[KalmanState], Z: np.ndarray) -> np.ndarray:
    """(n_tracks, n_detections) squared Mahalanobis distances."""
    means, covs = _batch_stack(states)
    z_pred, S = _batch_project(means, covs)
    D = Z[None, :, :] - z_pred[:, None, :]
    Sinv = np.linalg.inv(S)
    return np.einsum("tmi,tij,tmj->tm", D, Sinv, D)


def batch_update(states: Sequence[KalmanState], Z: np.ndarray) -> list[KalmanState]:
    if not states:
        return []
    means, covs = _batch_stack(states)
    z_pred, S = _batch_project(means, covs)
    try:
        Kt = np.linalg.solve(S, covs[:, :4, :])  # (n, 4, 8) = S^-1 H P
    except np.linalg.LinAlgError:
        raise SingularInnovation("innovation covariance is singular") from None
    K = Kt.transpose(0, 2, 1)
    means = means + np.einsum("nij,nj->ni", K, Z - z_pred)
    covs = covs - K @ S @ Kt
    covs = (covs + covs.transpose(0, 2, 1)) / 2.0
    return [KalmanState(m, c) for m, c in zip(means, covs)]


def gating_distances(state: KalmanState, measurements: np.ndarray) -> np.ndarray:
    """Squared Mahalanobis distances for an (n, 4) block of measurements."""
    z_pred, S = _project(state)
    try:
        chol = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise SingularInnovation("innovation covariance is not positive-definite") from None
    y = np.linalg.solve(chol, (measurements - z_pred).T)
    return np.einsum("ij,ij->j", y, y)


# numeric codes for vectorized hard-gate comparisons; UNKNOWN never blocks
_GROUP_CODE = {g: (-1 if g is GroupLabel.UNKNOWN else i) for i, g in enumerate(GroupLabel)}


def _hard_gate_mask(
    tracks: list[Track], detections: list[Detection], cfg: TrackerConfig
) -> Optional[np.ndarray]:
    """(n_tracks, n_detections) boolean mask of blocked pairs, or None."""
    if not cfg.hard_gate_enabled:
        return None
    tg = np.array([_GROUP_CODE[t.group] for t in tracks])
    dg = np.array([_GROUP_CODE[d.group] for d in detections])
    if np.all(tg < 0) or np.all(dg < 0):
        return None
    tc = np.array([t.group_confidence for t in tracks])
    dc = np.array([d.group_confidence for d in detections])
    return (
        (tg[:, None] >= 0)
        & (dg[None, :] >= 0)
        & (tg[:, None] != dg[None, :])
        & (tc[:, None] >= cfg.hard_gate_confidence)
        & (dc[None, :] >= cfg.hard_gate_confidence)
    )


def _appearance_cost_matrix(
    tracks: list[Track], detections: list[Detection], cfg: TrackerConfig
) -> np.ndarray:
    cost = np.full((len(tracks), len(detections)), np.inf)
    Z = np.array([d.bbox.to_xyah() for d in detections])
    gates = batch_gating_distances([t.state for t in tracks], Z)
    admissible = gates <= CHI2_GATE_4DOF
    blocked = _hard_gate_mask(tracks, detections, cfg)
    if blocked is not None:
        admissible &= ~blocked
    embeddings = [d.embedding for d in detections]
    if all(e is not None for e in embeddings) and all(len(t.gallery) for t in tracks):
        E = np.array(embeddings)
        galleries = [t.gallery_array() for t in tracks]
        counts = np.array([g.shape[0] for g in galleries])
        sims = np.concatenate(galleries) @ E.T
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        rows = 1.0 - np.maximum.reduceat(sims, starts, axis=0)
        cost[admissible] = rows[admissible]
        return cost
    for i, trk in enumerate(tracks):
        for j, det in enumerate(detections):
            if not admissible[i, j]:
                continue
            if det.embedding is not None and len(trk.gallery) > 0:
                cost[i, j] = appearance_distance(det.embedding, trk.gallery)
            else:
                # no appearance on either side: fall back to the motion gate
                cost[i, j] = gates[i, j] / CHI2_GATE_4DOF * cfg.appearance_gate
    return cost


def cascade_match(
    tracks: list[Track], detections: list[Detection], cfg: TrackerConfig
) -> AssociationResult:
    """DeepSORT-style matching cascade.

    Confirmed tracks are matched in rounds of increasing time-since-update on
    gated appearance cost; leftover detections are then matched by IoU to
    unconfirmed tracks and confirmed tracks that just missed.
    """
    confirmed = [i for i, t in enumerate(tracks) if t.status is TrackStatus.CONFIRMED]
    unconfirmed = [i for i, t in enumerate(tracks) if t.status is not TrackStatus.CONFIRMED]

    matches: list[tuple[int, int]] = []
    unmatched_dets = list(range(len(detections)))
    unmatched_confirmed = []
    for age in range(1, cfg.max_age + 1):
        if not unmatched_dets:
            unmatched_confirmed.extend(
                i for i in confirmed if tracks[i].time_since_update >= age
            )
            break
        level = [i for i in confirmed if tracks[i].time_since_update == age]
        if not level:
            continue
        cost = _appearance_cost_matrix(
            [tracks[i] for i in level], [detections[j] for j in unmatched_dets], cfg
        )
        res = solve_assignment(cost, cfg.appearance_gate)
        for r, c in res.matches:
            matches.append((level[r], unmatched_dets[c]))
        unmatched_confirmed.extend(level[r] for r in res.unmatched_tracks)
        unmatched_dets = [unmatched_dets[c] for c in res.unmatched_detections]

    # IoU round: unconfirmed tracks plus confirmed tracks unmatched at age 1.
    iou_candidates = unconfirmed + [
        i for i in unmatched_confirmed if tracks[i].time_since_update == 1
    ]
    unmatched_rest = [i for i in unmatched_confirmed if tracks[i].time_since_update != 1]
    if iou_candidates and unmatched_dets:
        cost = np.full((len(iou_candidates), len(unmatched_dets)), np.inf)
        for r, i in enumerate(iou_candidates):
            tb = tracks[i].bbox
            for c, j in enumerate(unmatched_dets):
                if _hard_gate_blocked(tracks[i], detections[j], cfg):
                    continue
                cost[r, c] = 1.0 - tb.iou(detections[j].bbox)
        res = solve_assignment(cost, cfg.iou_gate)
        for r, c in res.matches:
            matches.append((iou_candidates[r], unmatched_dets[c]))
        unmatched_tracks = unmatched_rest + [iou_candidates[r] for r in res.unmatched_tracks]
        unmatched_dets = [unmatched_dets[c] for c in res.unmatched_detections]
    else:
        unmatched_tracks = unmatched_rest + iou_candidates

    return AssociationResult(matches, unmatched_tracks, unmatched_dets)


class Tracker:
    """Stateful multi-object tracker for one match; strictly sequential.

    The ball is tracked by a dedicated single-object instance of the same
    Kalman machinery with a motion-only gate and higher process noise.
    """

    def __init__(self, config: Optional[TrackerConfig] = None):
        self.cfg = config or TrackerConfig()
        self.tracks: list[Track] = []
        self.ball_track: Optional[Track] = None
        self.last_matches: list[tuple[Track, Detection]] = []
        self._next_id = 1

    def _new_track(self, det: Detection, noise_scale: float = 1.0) -> Track:
        trk = Track(
            track_id=self._next_id,
            state=kf_initiate(det, noise_scale),
            obj_class=det.obj_class,
        )
        self._next_id += 1
        self._mark_hit(trk, det)
        return trk

    def _mark_hit(self, trk: Track, det: Detection) -> None:
        trk.hits += 1
        trk.hit_streak += 1
        trk.misses = 0
        trk.time_since_update = 0
        trk.last_bbox = det.bbox
        if det.embedding is not None:
            trk.add_embedding(det.embedding)
        trk.tail.append((trk.state.mean[0], trk.state.mean[1]))
        if trk.status is TrackStatus.TENTATIVE and trk.hit_streak >= self.cfg.n_init:
            trk.status = TrackStatus.CONFIRMED

    def _mark_missed(self, trk: Track) -> None:
        trk.misses += 1
        trk.hit_streak = 0
        if trk.misses > self.cfg.max_age:
            trk.status = TrackStatus.DELETED

    def step(self, frame: ValidatedFrame) -> list[Track]:
        """Advance one frame; returns the live (non-deleted) person tracks.

        After a step, `last_matches` holds (track, detection) pairs for every
        track updated this frame, including freshly spawned ones.
        """
        persons = [d for d in frame.detections if d.obj_class is not ObjectClass.BALL]
        balls = [d for d in frame.detections if d.obj_class is ObjectClass.BALL]
        self.last_matches: list[tuple[Track, Detection]] = []

        if self.tracks:
            predicted = batch_predict([t.state for t in self.tracks])
            for trk, state in zip(self.tracks, predicted):
                trk.state = state
                trk.time_since_update += 1

        res = cascade_match(self.tracks, persons, self.cfg)
        if res.matches:
            matched = [self.tracks[ti] for ti, _ in res.matches]
            Z = np.array([persons[di].bbox.to_xyah() for _, di in res.matches])
            updated = batch_update([t.state for t in matched], Z)
            for (ti, di), trk, state in zip(res.matches, matched, updated):
                trk.state = state
                self._mark_hit(trk, persons[di])
                self.last_matches.append((trk, persons[di]))
        for ti in res.unmatched_tracks:
            self._mark_missed(self.tracks[ti])
        for di in res.unmatched_detections:
            trk = self._new_track(persons[di])
            self.tracks.append(trk)
            self.last_matches.append((trk, persons[di]))

        self.tracks = [t for t in self.tracks if t.status is not TrackStatus.DELETED]
        self._step_ball(balls)
        return list(self.tracks)

    def _step_ball(self, balls: list[Detection]) -> None:
        cfg = self.cfg
        if self.ball_track is not None:
            trk = self.ball_track
            trk.state = kf_predict(trk.state, cfg.ball_noise_scale)
            trk.time_since_update += 1
            best = None
            for det in balls:
                d2 = mahalanobis_gate(trk.state, det)
                if d2 <= CHI2_GATE_4DOF and (best is None or d2 < best[0]):
                    best = (d2, det)
            if best is not None:
                trk.state = kf_update(trk.state, best[1].bbox)
                self._mark_hit(trk, best[1])
                return
            self._mark_missed(trk)
            if trk.status is TrackStatus.DELETED:
                self.ball_track = None
            elif balls and trk.misses > 3:
                # the ball moves far faster than anything else; re-lock onto
                # the strongest detection instead of coasting out the gate
                det = max(balls, key=lambda d: d.confidence)
                self.ball_track = self._new_track(det, cfg.ball_noise_scale)
            return
        if balls:
            det = max(balls, key=lambda d: d.confidence)
            self.ball_track = self._new_track(det, cfg.ball_noise_scale)
