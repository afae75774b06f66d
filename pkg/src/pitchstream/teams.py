"""Grass-adaptive HSV segmentation, upper/lower color features, and K-means
team clustering into {TeamA, TeamB, Referee, GoalkeeperA, GoalkeeperB}."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .match_model import FIELD_LENGTH_M, GroupLabel

GRASS_HUE_LO = 60.0  # plausible green band searched for the pitch hue
GRASS_HUE_HI = 180.0
HUE_BINS = 36
MIN_GRASS_SUPPORT = 0.3
MIN_FOREGROUND_RATIO = 0.05
TEAM_COUNT = 5


class NoGrassFound(ValueError):
    pass


class InsufficientForeground(ValueError):
    pass


class TooFewSamples(ValueError):
    pass


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    """Vectorized RGB -> HSV. Input in [0,1] (or uint8), any leading shape.

    Returns hue in degrees [0, 360), saturation and value in [0, 1].
    """
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.dtype == np.float64 and rgb.max(initial=0.0) > 1.0:
        rgb = rgb / 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    v = np.max(rgb, axis=-1)
    c = v - np.min(rgb, axis=-1)
    s = np.where(v > 0, c / np.where(v > 0, v, 1.0), 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        hr = np.where(c > 0, ((g - b) / c) % 6.0, 0.0)
        hg = np.where(c > 0, (b - r) / c + 2.0, 0.0)
        hb = np.where(c > 0, (r - g) / c + 4.0, 0.0)
    h6 = np.where(v == r, hr, np.where(v == g, hg, hb))
    h = np.where(c > 0, h6 * 60.0, 0.0) % 360.0
    return np.stack([h, s, v], axis=-1)


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    hsv = np.asarray(hsv, dtype=np.float64)
    h, s, v = hsv[..., 0] / 60.0, hsv[..., 1], hsv[..., 2]
    c = v * s
    x = c * (1.0 - np.abs(h % 2.0 - 1.0))
    m = v - c
    i = np.floor(h).astype(int) % 6
    zeros = np.zeros_like(c)
    lut = np.stack(
        [
            np.stack([c, x, zeros], -1),
            np.stack([x, c, zeros], -1),
            np.stack([zeros, c, x], -1),
            np.stack([zeros, x, c], -1),
            np.stack([x, zeros, c], -1),
            np.stack([c, zeros, x], -1),
        ]
    )
    rgb = np.take_along_axis(lut, i[None, ..., None], axis=0)[0]
    return rgb + m[..., None]


@dataclass(frozen=True)
class GrassModel:
    hue_lo: float
    hue_hi: float
    sat_min: float
    val_min: float
    support: float

    def matches(self, hsv: np.ndarray) -> np.ndarray:
        """Boolean grass predicate over an (..., 3) HSV array."""
        h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
        if self.hue_lo <= self.hue_hi:
            in_hue = (h >= self.hue_lo) & (h <= self.hue_hi)
        else:  # window wraps past 360
            in_hue = (h >= self.hue_lo) | (h <= self.hue_hi)
        return in_hue & (s >= self.sat_min) & (v >= self.val_min)


def estimate_grass_model(pixels_rgb: np.ndarray) -> GrassModel:
    """Fit the pitch color model from a frame pixel sample (>= 1000 pixels).

    The hue histogram (36 bins) is searched within the plausible green band;
    the window grows from the modal bin while adjacent bins retain at least
    10% of the modal mass. Saturation/value floors are the 25th percentile
    of the hue-matched pixels.
    """
    pixels_rgb = np.asarray(pixels_rgb).reshape(-1, 3)
    if pixels_rgb.shape[0] < 1000:
        raise ValueError("need at least 1000 sampled pixels")
    hsv = rgb_to_hsv(pixels_rgb)
    h = hsv[:, 0]
    bin_w = 360.0 / HUE_BINS
    hist, _ = np.histogram(h, bins=HUE_BINS, range=(0.0, 360.0))
    lo_bin = int(GRASS_HUE_LO // bin_w)
    hi_bin = int(GRASS_HUE_HI // bin_w)  # exclusive
    green = hist[lo_bin:hi_bin]
    if green.sum() == 0:
        raise NoGrassFound("no pixels in the plausible green hue band")
    mode = lo_bin + int(np.argmax(green))
    floor = 0.1 * hist[mode]
    lo, hi = mode, mode
    while lo - 1 >= lo_bin and hist[lo - 1] >= floor:
        lo -= 1
    while hi + 1 < hi_bin and hist[hi + 1] >= floor:
        hi += 1
    hue_lo, hue_hi = lo * bin_w, (hi + 1) * bin_w
    in_hue = (h >= hue_lo) & (h < hue_hi)
    if not in_hue.any():
        raise NoGrassFound("empty hue window")
    sat_min = float(np.percentile(hsv[in_hue, 1], 25))
    val_min = float(np.percentile(hsv[in_hue, 2], 25))
    model = GrassModel(hue_lo, hue_hi, sat_min, val_min, 0.0)
    support = float(np.mean(model.matches(hsv)))
    if support < MIN_GRASS_SUPPORT:
        raise NoGrassFound(f"grass support {support:.3f} below {MIN_GRASS_SUPPORT}")
    return GrassModel(hue_lo, hue_hi, sat_min, val_min, support)


def segment_person(patch_rgb: np.ndarray, grass: GrassModel) -> np.ndarray:
    """Foreground mask: non-grass pixels, minus connected components smaller
    than 1% of the patch area."""
    patch_rgb = np.asarray(patch_rgb)
    if patch_rgb.size == 0:
        raise ValueError("empty patch")
    hsv = rgb_to_hsv(patch_rgb)
    mask = ~grass.matches(hsv)
    if not mask.any():
        return mask
    labels, _ = ndimage.label(mask)
    sizes = np.bincount(labels.ravel())
    small = np.flatnonzero(sizes < 0.01 * mask.size)
    small = small[small > 0]
    if small.size:
        mask &= ~np.isin(labels, small)
    return mask


@dataclass(frozen=True)
class ColorFeature:
    upper_hsv: np.ndarray  # (cos h, sin h, s, v)
    lower_hsv: np.ndarray
    upper_rgb: np.ndarray  # mean RGB in [0,1]
    lower_rgb: np.ndarray
    foreground_ratio: float

    def vector(self) -> np.ndarray:
        return np.concatenate(
            [self.upper_hsv, self.lower_hsv, self.upper_rgb, self.lower_rgb]
        )


def _half_means(rgb: np.ndarray, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    px = rgb[mask]
    hsv = rgb_to_hsv(px)
    hue_rad = np.deg2rad(hsv[:, 0])
    # circular hue mean via unit-circle embedding
    hsv_feat = np.array(
        [
            float(np.mean(np.cos(hue_rad))),
            float(np.mean(np.sin(hue_rad))),
            float(np.mean(hsv[:, 1])),
            float(np.mean(hsv[:, 2])),
        ]
    )
    return hsv_feat, px.mean(axis=0)


def extract_color_feature(patch_rgb: np.ndarray, mask: np.ndarray) -> ColorFeature:
    """Mean HSV/RGB of the foreground, split at the vertical midpoint of the
    mask's occupied rows."""
    patch_rgb = np.asarray(patch_rgb, dtype=np.float64)
    if patch_rgb.max(initial=0.0) > 1.0:
        patch_rgb = patch_rgb / 255.0
    ratio = float(mask.mean()) if mask.size else 0.0
    if ratio < MIN_FOREGROUND_RATIO:
        raise InsufficientForeground(f"foreground ratio {ratio:.3f}")
    rows = np.flatnonzero(mask.any(axis=1))
    mid = (rows[0] + rows[-1] + 1) // 2
    upper_mask = mask.copy()
    upper_mask[mid:] = False
    lower_mask = mask.copy()
    lower_mask[:mid] = False
    if not upper_mask.any() or not lower_mask.any():
        # degenerate split (single occupied row): use the whole mask twice
        upper_mask = lower_mask = mask
    u_hsv, u_rgb = _half_means(patch_rgb, upper_mask)
    l_hsv, l_rgb = _half_means(patch_rgb, lower_mask)
    return ColorFeature(u_hsv, l_hsv, u_rgb, l_rgb, ratio)


def cluster_teams(
    features: Sequence[ColorFeature], k: int = TEAM_COUNT, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd's K-means with k-means++ seeding on color-feature vectors.

    Returns (assignment, centroids). Empty clusters are re-seeded to the
    point farthest from its centroid.
    """
    if len(features) < k:
        raise TooFewSamples(f"{len(features)} features for k={k}")
    X = np.array([f.vector() for f in features])
    rng = np.random.default_rng(seed)
    centroids = _kmeanspp(X, k, rng)
    assign = np.zeros(len(X), dtype=int)
    for _ in range(300):
        d2 = ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        assign = d2.argmin(axis=1)
        new_centroids = centroids.copy()
        for c in range(k):
            members = X[assign == c]
            if len(members):
                new_centroids[c] = members.mean(axis=0)
            else:
                far = int(d2[np.arange(len(X)), assign].argmax())
                new_centroids[c] = X[far]
        shift = float(np.abs(new_centroids - centroids).max())
        centroids = new_centroids
        if shift < 1e-6:
            break
    d2 = ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return d2.argmin(axis=1), centroids


def _kmeanspp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centroids = [X[rng.integers(len(X))]]
    for _ in range(1, k):
        d2 = np.min(
            ((X[:, None, :] - np.array(centroids)[None, :, :]) ** 2).sum(axis=2), axis=1
        )
        total = d2.sum()
        if total <= 0:
            centroids.append(X[rng.integers(len(X))])
            continue
        centroids.append(X[rng.choice(len(X), p=d2 / total)])
    return np.array(centroids)


def kmeans_inertia(X: np.ndarray, assign: np.ndarray, centroids: np.ndarray) -> float:
    return float(((X - centroids[assign]) ** 2).sum())


def nearest_cluster(feature: ColorFeature, centroids: np.ndarray) -> tuple[int, float]:
    """Cluster index plus a [0.5, 1] confidence from relative centroid distance."""
    v = feature.vector()
    d = np.linalg.norm(centroids - v, axis=1)
    order = np.argsort(d)
    best, second = int(order[0]), int(order[1]) if len(d) > 1 else int(order[0])
    denom = d[best] + d[second]
    conf = 1.0 if denom <= 1e-12 else float(d[second] / denom)
    return best, conf


def label_clusters(
    assign: np.ndarray,
    member_positions: Sequence[Optional[tuple[float, float]]],
    field_length: float = FIELD_LENGTH_M,
) -> dict[int, GroupLabel]:
    """Map cluster indices to group labels.

    The two largest clusters are the teams (TeamA has the smaller mean x);
    among the rest, the cluster nearest each goal line is that side's
    goalkeeper; one leftover cluster is the referees.
    """
    counts = Counter(int(c) for c in assign)
    labels: dict[int, GroupLabel] = {}
    if not counts:
        return labels
    by_size = [c for c, _ in counts.most_common()]
    mean_x: dict[int, Optional[float]] = {}
    for c in counts:
        xs = [
            p[0]
            for cc, p in zip(assign, member_positions)
            if int(cc) == c and p is not None
        ]
        mean_x[c] = float(np.mean(xs)) if xs else None

    teams = by_size[:2]
    if len(teams) == 2:
        xa, xb = mean_x[teams[0]], mean_x[teams[1]]
        if xa is not None and xb is not None and xb < xa:
            teams = [teams[1], teams[0]]
        labels[teams[0]] = GroupLabel.TEAM_A
        labels[teams[1]] = GroupLabel.TEAM_B
    elif teams:
        labels[teams[0]] = GroupLabel.TEAM_A

    rest = [c for c in by_size[2:]]
    positioned = [c for c in rest if mean_x[c] is not None]
    if positioned:
        gk_a = min(positioned, key=lambda c: mean_x[c])
        if mean_x[gk_a] < field_length / 2:
            labels[gk_a] = GroupLabel.GOALKEEPER_A
            positioned.remove(gk_a)
    if positioned:
        gk_b = max(positioned, key=lambda c: mean_x[c])
        if mean_x[gk_b] > field_length / 2:
            labels[gk_b] = GroupLabel.GOALKEEPER_B
            positioned.remove(gk_b)
    for c in rest:
        if c not in labels:
            labels[c] = GroupLabel.REFEREE if mean_x[c] is not None else GroupLabel.UNKNOWN
    return labels


class GroupVote:
    """Per-track majority vote over per-frame group labels."""

    def __init__(self):
        self.counts: Counter = Counter()

    def add(self, label: GroupLabel) -> None:
        if label is not GroupLabel.UNKNOWN:
            self.counts[label] += 1

    def result(self) -> tuple[GroupLabel, float]:
        total = sum(self.counts.values())
        if total == 0:
            return GroupLabel.UNKNOWN, 0.0
        label, n = self.counts.most_common(1)[0]
        return label, n / total


def group_of_track(labels: Sequence[GroupLabel]) -> tuple[GroupLabel, float]:
    vote = GroupVote()
    for lb in labels:
        vote.add(lb)
    return vote.result()
