"""Synthetic match generator and scoring oracle.

Generates ground-truth player/ball trajectories, kit colors, jersey numbers,
a panning broadcast camera, and a highlight event schedule, then corrupts
everything into the same observation stream the pipeline ingests.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from typing import Iterator, Optional, Sequence

import numpy as np

from .geometry import Homography, estimate_homography, project_to_image
from .highlights import CLIP_ROWS, ClipSample, HighlightClass
from .match_model import (
    BoundingBox,
    Detection,
    FrameRecord,
    GroupLabel,
    KeypointObservation,
    NumberObservation,
    ObjectClass,
    standard_field_model,
)
from .teams import hsv_to_rgb

IMAGE_W = 1280.0
IMAGE_H = 720.0
MAX_SPEED_MS = 9.0


class InvalidConfig(ValueError):
    pass


# (jersey hsv, shorts hsv); hues separated by >= 60 degrees between groups
DEFAULT_KITS = {
    GroupLabel.TEAM_A: ((0.0, 0.9, 0.9), (0.0, 0.85, 0.55)),
    GroupLabel.TEAM_B: ((240.0, 0.9, 0.9), (240.0, 0.85, 0.55)),
    GroupLabel.GOALKEEPER_A: ((60.0, 0.9, 0.95), (60.0, 0.8, 0.6)),
    GroupLabel.GOALKEEPER_B: ((300.0, 0.9, 0.9), (300.0, 0.8, 0.55)),
    GroupLabel.REFEREE: ((180.0, 0.9, 0.8), (180.0, 0.8, 0.5)),
}

GRASS_HSV = (120.0, 0.6, 0.5)


@dataclass
class SimConfig:
    n_players: int = 11  # per team, including the goalkeeper
    n_referees: int = 1
    duration_frames: int = 600
    fps: int = 25
    seed: int = 0
    embedding_dim: int = 16
    # camera
    camera_half_width_m: float = 40.0
    camera_smoothing: float = 0.01
    camera_max_pan_m: float = 0.25  # per frame
    # noise
    detection_sigma_px: float = 0.0
    miss_probability: float = 0.0
    false_positive_rate: float = 0.0
    embedding_noise: float = 0.0
    number_accuracy: float = 1.0
    number_obs_rate: float = 0.2
    keypoint_sigma_px: float = 0.0
    # patches for team clustering (emitted only during the warmup window)
    patch_warmup_frames: int = 150
    patch_w: int = 16
    patch_h: int = 24
    kits: dict = dc_field(default_factory=lambda: dict(DEFAULT_KITS))

    def validate(self) -> None:
        for name in ("miss_probability", "number_accuracy", "number_obs_rate"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise InvalidConfig(f"{name} must be in [0, 1]")
        for name in (
            "detection_sigma_px",
            "false_positive_rate",
            "embedding_noise",
            "keypoint_sigma_px",
        ):
            if getattr(self, name) < 0:
                raise InvalidConfig(f"{name} must be >= 0")
        if self.n_players < 1 or self.duration_frames < 1 or self.fps < 1:
            raise InvalidConfig("n_players, duration_frames, fps must be positive")


@dataclass(frozen=True)
class SimPlayer:
    pid: int
    group: GroupLabel
    number: int
    anchor: np.ndarray


@dataclass
class GTFrame:
    frame_index: int
    positions: dict  # pid -> (x_m, y_m)
    ball: tuple[float, float]
    boxes: dict  # pid -> BoundingBox (noise-free image boxes)
    ball_box: Optional[BoundingBox]
    homography: np.ndarray  # image -> field, 3x3
    possessing_team: GroupLabel


@dataclass
class GroundTruth:
    players: dict  # pid -> SimPlayer
    frames: list  # list[GTFrame]
    events: list  # (HighlightClass, start_frame, end_frame)

    def possession(self) -> dict[str, float]:
        a = sum(1 for f in self.frames if f.possessing_team is GroupLabel.TEAM_A)
        b = sum(1 for f in self.frames if f.possessing_team is GroupLabel.TEAM_B)
        total = a + b
        if not total:
            return {}
        return {"TeamA": a / total, "TeamB": b / total}


def _formation_anchors(n: int, team: GroupLabel) -> list[np.ndarray]:
    """Goalkeeper plus a rough grid formation on the team's half."""
    anchors = [np.array([6.0, 34.0])]
    rows = [(20.0, 4), (32.0, 4), (44.0, 2)]
    for x, cnt in rows:
        for i in range(cnt):
            if len(anchors) >= n:
                break
            y = 68.0 * (i + 1) / (cnt + 1)
            anchors.append(np.array([x, y]))
    while len(anchors) < n:
        anchors.append(np.array([30.0, 34.0]))
    if team is GroupLabel.TEAM_B:
        anchors = [np.array([105.0 - a[0], a[1]]) for a in anchors]
    return anchors[:n]


def _make_players(cfg: SimConfig) -> dict[int, SimPlayer]:
    players = {}
    pid = 1
    for team in (GroupLabel.TEAM_A, GroupLabel.TEAM_B):
        anchors = _formation_anchors(cfg.n_players, team)
        gk = GroupLabel.GOALKEEPER_A if team is GroupLabel.TEAM_A else GroupLabel.GOALKEEPER_B
        for i, anchor in enumerate(anchors):
            group = gk if i == 0 else team
            players[pid] = SimPlayer(pid, group, 1 + i, anchor)
            pid += 1
    for i in range(cfg.n_referees):
        players[pid] = SimPlayer(
            pid, GroupLabel.REFEREE, 0, np.array([52.5, 34.0 + 10.0 * i])
        )
        pid += 1
    return players


def _camera_homography(center_x: float, half_width: float) -> Homography:
    """Broadcast-pose projective map for a field window centered at center_x.

    The far touchline maps to a narrower image span than the near one, which
    yields genuine perspective.
    """
    x0, x1 = center_x - half_width, center_x + half_width
    pairs = [
        ((IMAGE_W * 0.17, 90.0), (x0, 0.0)),  # far-left
        ((IMAGE_W * 0.83, 90.0), (x1, 0.0)),  # far-right
        ((IMAGE_W, IMAGE_H - 20.0), (x1, 68.0)),  # near-right
        ((0.0, IMAGE_H - 20.0), (x0, 68.0)),  # near-left
    ]
    return estimate_homography(pairs)


def _render_box(h: Homography, pos, height_m: float = 1.8, width_frac: float = 0.35):
    """Image bbox for an upright object standing at a field position."""
    x, y = pos
    bx, by = project_to_image(h, (x, y))
    if not (-50 <= bx <= IMAGE_W + 50 and -50 <= by <= IMAGE_H + 50):
        return None
    x2, y2 = project_to_image(h, (x, max(y - 1.0, 0.0)))
    scale = float(np.hypot(x2 - bx, y2 - by))  # image px per meter at pos
    hb = max(2.2 * height_m * scale, 4.0)
    wb = max(width_frac * hb, 2.0)
    return BoundingBox(bx - wb / 2.0, by - hb, wb, hb)


def _render_patch(cfg: SimConfig, group: GroupLabel, rng) -> np.ndarray:
    jersey, shorts = cfg.kits[group]
    h, w = cfg.patch_h, cfg.patch_w
    img = np.empty((h, w, 3))
    img[:] = hsv_to_rgb(np.array(GRASS_HSV))
    r0, r1 = h // 12, h - h // 12
    c0, c1 = w // 4, w - w // 4
    mid = (r0 + r1) // 2
    img[r0:mid, c0:c1] = hsv_to_rgb(np.array(jersey))
    img[mid:r1, c0:c1] = hsv_to_rgb(np.array(shorts))
    img += rng.uniform(-0.02, 0.02, size=img.shape)
    return (np.clip(img, 0.0, 1.0) * 255).astype(np.uint8)


def generate_ground_truth(cfg: SimConfig) -> GroundTruth:
    """Smooth OU trajectories around formation anchors, a possession-driven
    ball, a ball-tracking camera, and a random highlight schedule."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    players = _make_players(cfg)
    pids = sorted(players)
    dt = 1.0 / cfg.fps
    pos = {p: players[p].anchor.astype(float).copy() for p in pids}
    vel = {p: np.zeros(2) for p in pids}

    # possession schedule: spells of 2-6 s on a random outfield player
    possessor = None
    possess_team = GroupLabel.TEAM_A
    spell_left = 0
    pass_frames_left = 0
    flight_team = possess_team

    cam_x = 52.5
    lo = cfg.camera_half_width_m
    hi = 105.0 - cfg.camera_half_width_m

    frames = []
    ball = np.array([52.5, 34.0])
    outfield = [p for p in pids if players[p].group in (GroupLabel.TEAM_A, GroupLabel.TEAM_B)]

    for f in range(cfg.duration_frames):
        # player dynamics
        for p in pids:
            anchor = players[p].anchor
            vel[p] += (-0.5 * vel[p] + 0.4 * (anchor - pos[p])) * dt
            vel[p] += rng.normal(scale=1.2 * np.sqrt(dt), size=2)
            speed = float(np.linalg.norm(vel[p]))
            if speed > MAX_SPEED_MS:
                vel[p] *= MAX_SPEED_MS / speed
            pos[p] += vel[p] * dt
            pos[p][0] = float(np.clip(pos[p][0], -2.0, 107.0))
            pos[p][1] = float(np.clip(pos[p][1], -2.0, 70.0))

        # possession spells; the ball flies smoothly to the next possessor
        if spell_left <= 0 and pass_frames_left <= 0:
            prev_team = possess_team
            if possessor is not None and rng.random() < 0.4:
                possess_team = (
                    GroupLabel.TEAM_B
                    if possess_team is GroupLabel.TEAM_A
                    else GroupLabel.TEAM_A
                )
            candidates = [p for p in outfield if players[p].group is possess_team]
            possessor = int(rng.choice(candidates))
            spell_left = int(rng.integers(2 * cfg.fps, 6 * cfg.fps))
            if frames:  # pass in flight: credit stays with the previous team
                pass_frames_left = cfg.fps // 2
                flight_team = prev_team
        if pass_frames_left > 0:
            target = pos[possessor] + np.array([0.3, 0.0])
            ball += (target - ball) / pass_frames_left
            pass_frames_left -= 1
            frame_team = flight_team
        else:
            spell_left -= 1
            ball = pos[possessor] + np.array([0.3, 0.0])
            frame_team = possess_team
        ball[0] = float(np.clip(ball[0], 0.0, 105.0))
        ball[1] = float(np.clip(ball[1], 0.0, 68.0))

        # panning camera follows the ball, rate-limited
        if f == 0:
            cam_x = float(np.clip(ball[0], lo, hi))
        step = cfg.camera_smoothing * (float(np.clip(ball[0], lo, hi)) - cam_x)
        cam_x += float(np.clip(step, -cfg.camera_max_pan_m, cfg.camera_max_pan_m))
        hom = _camera_homography(cam_x, cfg.camera_half_width_m)

        boxes = {}
        for p in pids:
            box = _render_box(hom, pos[p])
            if box is not None:
                boxes[p] = box
        ball_box = _render_box(hom, tuple(ball), height_m=0.22, width_frac=1.0)

        frames.append(
            GTFrame(
                frame_index=f,
                positions={p: (float(pos[p][0]), float(pos[p][1])) for p in pids},
                ball=(float(ball[0]), float(ball[1])),
                boxes=boxes,
                ball_box=ball_box,
                homography=hom.matrix.copy(),
                possessing_team=frame_team,
            )
        )

    events = _event_schedule(cfg, rng)
    return GroundTruth(players, frames, events)


def _event_schedule(cfg: SimConfig, rng) -> list:
    """Non-overlapping highlight events aligned to 8-second clip boundaries."""
    clip_frames = CLIP_ROWS * cfg.fps
    n_clips = cfg.duration_frames // clip_frames
    classes = [c for c in HighlightClass if c is not HighlightClass.NORMAL_PLAY]
    events = []
    clip = 0
    while clip < n_clips:
        if rng.random() < 0.25:
            cls = classes[int(rng.integers(len(classes)))]
            span = int(rng.integers(1, 3))
            span = min(span, n_clips - clip)
            events.append(
                (cls, clip * clip_frames, (clip + span) * clip_frames - 1)
            )
            clip += span
        else:
            clip += 1
    return events


def _embedding_prototypes(cfg: SimConfig, pids: Sequence[int]) -> dict[int, np.ndarray]:
    rng = np.random.default_rng(cfg.seed + 1)
    protos = {}
    for p in pids:
        v = rng.normal(size=cfg.embedding_dim)
        protos[p] = v / np.linalg.norm(v)
    return protos


def corrupt_ground_truth(
    gt: GroundTruth, cfg: SimConfig, seed: Optional[int] = None
) -> Iterator[FrameRecord]:
    """Render ground truth into FrameRecords through the configured noise:
    Gaussian pixel noise, Bernoulli misses, uniform false positives, noisy
    renormalized embeddings, and imperfect number observations."""
    rng = np.random.default_rng(cfg.seed + 2 if seed is None else seed)
    protos = _embedding_prototypes(cfg, sorted(gt.players))
    field = standard_field_model()
    fkps = field.keypoints

    for gtf in gt.frames:
        detections = []
        for pid, box in sorted(gtf.boxes.items()):
            if rng.random() < cfg.miss_probability:
                continue
            player = gt.players[pid]
            bbox = _noisy_box(box, cfg.detection_sigma_px, rng)
            emb = protos[pid]
            if cfg.embedding_noise > 0:
                emb = emb + rng.normal(scale=cfg.embedding_noise, size=emb.shape)
                emb = emb / np.linalg.norm(emb)
            number_obs = None
            if player.group is not GroupLabel.REFEREE and rng.random() < cfg.number_obs_rate:
                if rng.random() < cfg.number_accuracy:
                    value = player.number
                else:
                    value = int((player.number + 1 + rng.integers(98)) % 100)
                number_obs = NumberObservation(value, float(rng.uniform(0.5, 1.0)))
            patch = None
            if gtf.frame_index < cfg.patch_warmup_frames:
                patch = _render_patch(cfg, player.group, rng)
            cls = (
                ObjectClass.REFEREE
                if player.group is GroupLabel.REFEREE
                else ObjectClass.PLAYER
            )
            detections.append(
                Detection(bbox, cls, float(rng.uniform(0.6, 1.0)), emb, patch, number_obs)
            )
        if gtf.ball_box is not None and rng.random() >= cfg.miss_probability:
            bbox = _noisy_box(gtf.ball_box, cfg.detection_sigma_px, rng)
            detections.append(Detection(bbox, ObjectClass.BALL, float(rng.uniform(0.6, 1.0))))
        n_fp = rng.poisson(cfg.false_positive_rate) if cfg.false_positive_rate > 0 else 0
        for _ in range(n_fp):
            w = float(rng.uniform(10, 40))
            h = float(rng.uniform(30, 90))
            detections.append(
                Detection(
                    BoundingBox(
                        float(rng.uniform(0, IMAGE_W - w)),
                        float(rng.uniform(0, IMAGE_H - h)),
                        w,
                        h,
                    ),
                    ObjectClass.PLAYER,
                    float(rng.uniform(0.6, 1.0)),
                )
            )

        hom = Homography(gtf.homography, 0.0, 4)
        keypoints = []
        for kid, fxy in fkps.items():
            try:
                ix, iy = project_to_image(hom, fxy)
            except Exception:
                continue
            if not (0.0 <= ix <= IMAGE_W and 0.0 <= iy <= IMAGE_H):
                continue
            if cfg.keypoint_sigma_px > 0:
                ix += float(rng.normal(scale=cfg.keypoint_sigma_px))
                iy += float(rng.normal(scale=cfg.keypoint_sigma_px))
            keypoints.append(KeypointObservation(kid, ix, iy, 1.0))

        yield FrameRecord(
            gtf.frame_index,
            int(gtf.frame_index * 1000 / cfg.fps),
            tuple(detections),
            tuple(keypoints),
        )


def _noisy_box(box: BoundingBox, sigma: float, rng) -> BoundingBox:
    if sigma <= 0:
        return box
    return BoundingBox(
        box.x + float(rng.normal(scale=sigma)),
        box.y + float(rng.normal(scale=sigma)),
        max(box.w + float(rng.normal(scale=sigma / 4)), 1.0),
        max(box.h + float(rng.normal(scale=sigma / 4)), 1.0),
    )


def simulate_match(cfg: SimConfig) -> tuple[GroundTruth, list[FrameRecord]]:
    """Deterministic (config, seed) -> (ground truth, observation stream)."""
    gt = generate_ground_truth(cfg)
    return gt, list(corrupt_ground_truth(gt, cfg))


def generate_clip_stream(
    cfg: SimConfig, events: list, feature_dim: int = 512
) -> list[dict]:
    """Per-clip feature rows drawn around per-class Gaussian prototypes."""
    rng = np.random.default_rng(cfg.seed + 3)
    protos = {c: rng.normal(size=feature_dim) * 1.0 for c in HighlightClass}
    clip_frames = CLIP_ROWS * cfg.fps
    clips = []
    for start in range(0, cfg.duration_frames - clip_frames + 1, clip_frames):
        cls = HighlightClass.NORMAL_PLAY
        for ecls, es, ee in events:
            if start >= es and start + clip_frames - 1 <= ee:
                cls = ecls
                break
        rows = protos[cls][None, :] + rng.normal(scale=0.1, size=(CLIP_ROWS, feature_dim))
        clips.append(
            {
                "start_frame": start,
                "features": np.round(rows, 5).tolist(),
                "label": cls.value,
            }
        )
    return clips


def class_prototype_dataset(
    n_per_class: int, feature_dim: int = 512, noise: float = 1.0, seed: int = 0
):
    """Labeled synthetic clips: per-class Gaussian prototypes with 10x the
    per-coordinate noise scale of separation along each prototype."""
    rng = np.random.default_rng(seed)
    # iid Gaussian prototypes at scale 10*noise/sqrt(2) sit ~10*noise*sqrt(dim) apart
    protos = rng.normal(scale=10.0 * noise / np.sqrt(2.0), size=(len(HighlightClass), feature_dim))
    clips = []
    for ci, cls in enumerate(HighlightClass):
        for _ in range(n_per_class):
            rows = protos[ci][None, :] + rng.normal(scale=noise, size=(CLIP_ROWS, feature_dim))
            clips.append(ClipSample(0, rows, cls))
    return clips


# ---------------------------------------------------------------------------
# scoring


def score_tracks(gt: GroundTruth, tracker_frames: dict) -> dict:
    """MOT-style metrics against ground truth.

    tracker_frames: frame_index -> list of (track_id, BoundingBox).
    Per frame, GT identities are matched to tracks by best IoU (gate 0.5);
    an ID-switch is a change of matched track id between consecutive matched
    frames of one identity. mostly_tracked is the fraction of identities
    matched in at least 80% of their frames.
    """
    from scipy.optimize import linear_sum_assignment

    last_track: dict[int, int] = {}
    matched_count: dict[int, int] = {p: 0 for p in gt.players}
    present_count: dict[int, int] = {p: 0 for p in gt.players}
    id_switches = 0
    sq_err = 0.0
    n_matches = 0

    for gtf in gt.frames:
        tracks = tracker_frames.get(gtf.frame_index, [])
        gt_ids = sorted(gtf.boxes)
        for p in gt_ids:
            present_count[p] += 1
        if not tracks or not gt_ids:
            continue
        iou = np.zeros((len(gt_ids), len(tracks)))
        for i, p in enumerate(gt_ids):
            for j, (_, box) in enumerate(tracks):
                iou[i, j] = gtf.boxes[p].iou(box)
        rows, cols = linear_sum_assignment(-iou)
        for i, j in zip(rows, cols):
            if iou[i, j] < 0.5:
                continue
            p = gt_ids[i]
            tid, box = tracks[j]
            matched_count[p] += 1
            if p in last_track and last_track[p] != tid:
                id_switches += 1
            last_track[p] = tid
            gb = gtf.boxes[p]
            sq_err += (gb.cx - box.cx) ** 2 + (gb.cy - box.cy) ** 2
            n_matches += 1

    mt = [
        p
        for p in gt.players
        if present_count[p] > 0 and matched_count[p] / present_count[p] >= 0.8
    ]
    denom = sum(1 for p in gt.players if present_count[p] > 0)
    return {
        "id_switches": id_switches,
        "mostly_tracked": len(mt) / denom if denom else 0.0,
        "position_rmse_px": float(np.sqrt(sq_err / n_matches)) if n_matches else 0.0,
        "matches": n_matches,
    }


# ---------------------------------------------------------------------------
# ground-truth (de)serialization for the CLI


def ground_truth_to_jsonl(gt: GroundTruth) -> Iterator[str]:
    header = {
        "players": {
            str(p.pid): {"group": p.group.value, "number": p.number}
            for p in gt.players.values()
        },
        "events": [[c.value, s, e] for c, s, e in gt.events],
    }
    yield json.dumps(header)
    for f in gt.frames:
        yield json.dumps(
            {
                "frame": f.frame_index,
                "ball": [round(f.ball[0], 4), round(f.ball[1], 4)],
                "positions": {
                    str(p): [round(x, 4), round(y, 4)] for p, (x, y) in f.positions.items()
                },
                "boxes": {
                    str(p): [round(b.x, 3), round(b.y, 3), round(b.w, 3), round(b.h, 3)]
                    for p, b in f.boxes.items()
                },
                "possessing": f.possessing_team.value,
                "homography": np.round(f.homography, 12).ravel().tolist(),
            }
        )


def ground_truth_from_jsonl(lines) -> GroundTruth:
    it = iter(lines)
    header = json.loads(next(it))
    players = {
        int(pid): SimPlayer(int(pid), GroupLabel(info["group"]), info["number"], np.zeros(2))
        for pid, info in header["players"].items()
    }
    events = [(HighlightClass(c), s, e) for c, s, e in header["events"]]
    frames = []
    for line in it:
        if not line.strip():
            continue
        obj = json.loads(line)
        frames.append(
            GTFrame(
                frame_index=obj["frame"],
                positions={int(p): tuple(xy) for p, xy in obj["positions"].items()},
                ball=tuple(obj["ball"]),
                boxes={int(p): BoundingBox(*b) for p, b in obj["boxes"].items()},
                ball_box=None,
                homography=np.array(obj["homography"]).reshape(3, 3),
                possessing_team=GroupLabel(obj["possessing"]),
            )
        )
    return GroundTruth(players, frames, events)
