"""Keypoint subpixel refinement, normalized-DLT homography estimation
(image -> field), point projection, and the camera footprint polygon."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .match_model import FIELD_LENGTH_M, FIELD_WIDTH_M


class NoPeak(ValueError):
    pass


class InsufficientPoints(ValueError):
    pass


class DegenerateConfiguration(ValueError):
    pass


class DegenerateProjection(ValueError):
    pass


def refine_keypoint(
    score_patch: np.ndarray, coarse_xy: tuple[float, float]
) -> tuple[float, float]:
    """Refine a coarse keypoint via the patch argmax plus a quadratic
    subpixel fit on its 3x3 neighborhood (offset clamped to +-0.5 per axis).

    The patch is centered on the coarse location; a border argmax skips the
    subpixel step.
    """
    p = np.asarray(score_patch, dtype=np.float64)
    S = p.shape[0]
    if p.ndim != 2 or p.shape[1] != S or S % 2 == 0 or S < 3:
        raise ValueError("score patch must be square with odd side >= 3")
    if np.ptp(p) == 0.0:
        raise NoPeak("constant score patch")
    r, c = np.unravel_index(int(np.argmax(p)), p.shape)
    center = S // 2
    dx = dy = 0.0
    if 0 < r < S - 1 and 0 < c < S - 1:
        dy, dx = _quadratic_offset(p[r - 1 : r + 2, c - 1 : c + 2])
    x, y = coarse_xy
    return (x + (c - center) + dx, y + (r - center) + dy)


def _quadratic_offset(win: np.ndarray) -> tuple[float, float]:
    """Peak offset of the least-squares quadratic through a 3x3 window."""
    ys, xs = np.mgrid[-1:2, -1:2]
    xs, ys = xs.ravel(), ys.ravel()
    A = np.stack([np.ones(9), xs, ys, xs * xs, xs * ys, ys * ys], axis=1)
    coef, *_ = np.linalg.lstsq(A, win.ravel(), rcond=None)
    _, bx, by, cxx, cxy, cyy = coef
    H = np.array([[2 * cxx, cxy], [cxy, 2 * cyy]])
    if abs(np.linalg.det(H)) < 1e-12:
        return 0.0, 0.0
    dx, dy = np.linalg.solve(H, [-bx, -by])
    return float(np.clip(dy, -0.5, 0.5)), float(np.clip(dx, -0.5, 0.5))


@dataclass(frozen=True)
class Homography:
    """Image -> field projective map, Frobenius-normalized with h33 >= 0."""

    matrix: np.ndarray
    rms_error: float
    n_points: int
    frame_index: int = -1

    def __post_init__(self):
        if self.n_points < 4:
            raise InsufficientPoints(f"{self.n_points} < 4 correspondences")
        cond = np.linalg.cond(self.matrix)
        if not np.isfinite(cond) or cond > 1e12:
            raise DegenerateConfiguration(f"condition number {cond:.3e}")

    def inverse_matrix(self) -> np.ndarray:
        return np.linalg.inv(self.matrix)


def _normalization_transform(pts: np.ndarray) -> np.ndarray:
    """Hartley normalization: centroid to origin, mean distance sqrt(2)."""
    centroid = pts.mean(axis=0)
    dist = np.linalg.norm(pts - centroid, axis=1).mean()
    s = np.sqrt(2.0) / dist if dist > 0 else 1.0
    return np.array(
        [[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]]
    )


def _canonicalize(H: np.ndarray) -> np.ndarray:
    H = H / np.linalg.norm(H)
    if H[2, 2] < 0:
        H = -H
    return H


def estimate_homography(
    correspondences: Sequence[tuple[tuple[float, float], tuple[float, float]]],
    frame_index: int = -1,
) -> Homography:
    """Normalized DLT from (image px, field m) pairs; needs >= 4 points."""
    if len(correspondences) < 4:
        raise InsufficientPoints(f"{len(correspondences)} < 4 correspondences")
    img = np.array([c[0] for c in correspondences], dtype=np.float64)
    fld = np.array([c[1] for c in correspondences], dtype=np.float64)
    T_img = _normalization_transform(img)
    T_fld = _normalization_transform(fld)
    img_n = (T_img @ np.column_stack([img, np.ones(len(img))]).T).T[:, :2]
    fld_n = (T_fld @ np.column_stack([fld, np.ones(len(fld))]).T).T[:, :2]

    A = np.zeros((2 * len(img), 9))
    for i, ((x, y), (u, v)) in enumerate(zip(img_n, fld_n)):
        A[2 * i] = [-x, -y, -1, 0, 0, 0, u * x, u * y, u]
        A[2 * i + 1] = [0, 0, 0, -x, -y, -1, v * x, v * y, v]
    _, sv, Vt = np.linalg.svd(A)
    if len(sv) < 9:  # n = 4: the ninth singular value is exactly zero
        sv = np.concatenate([sv, np.zeros(9 - len(sv))])
    # ambiguous solution: the two smallest singular values coincide
    if sv[7] <= 1e-12 * sv[0] or (sv[7] - sv[8]) <= 1e-9 * sv[7]:
        raise DegenerateConfiguration("smallest two singular values coincide")
    Hn = Vt[-1].reshape(3, 3)
    H = _canonicalize(np.linalg.inv(T_fld) @ Hn @ T_img)
    back = (np.linalg.inv(H) @ np.column_stack([fld, np.ones(len(fld))]).T).T
    if np.any(np.abs(back[:, 2]) < 1e-12):
        raise DegenerateConfiguration("correspondence maps to infinity")
    px = back[:, :2] / back[:, 2:3]
    rms = float(np.sqrt(np.mean(np.sum((px - img) ** 2, axis=1))))
    return Homography(H, rms, len(correspondences), frame_index)


def project_point(h: Homography, point_xy: tuple[float, float]) -> tuple[float, float]:
    """Map an image point to field coordinates (meters)."""
    return _apply(h.matrix, point_xy)


def project_to_image(h: Homography, field_xy: tuple[float, float]) -> tuple[float, float]:
    return _apply(h.inverse_matrix(), field_xy)


def _apply(M: np.ndarray, xy) -> tuple[float, float]:
    v = M @ np.array([xy[0], xy[1], 1.0])
    if abs(v[2]) < 1e-9 * np.linalg.norm(v[:2]) or v[2] == 0.0:
        raise DegenerateProjection(f"point {xy} maps to infinity")
    return (float(v[0] / v[2]), float(v[1] / v[2]))


def reprojection_error(
    h: Homography,
    correspondences: Sequence[tuple[tuple[float, float], tuple[float, float]]],
) -> float:
    """RMS pixel distance between observed image points and field points
    projected back into the image."""
    if not correspondences:
        raise ValueError("no correspondences")
    Minv = h.inverse_matrix()
    sq = 0.0
    for (ix, iy), fld in correspondences:
        px, py = _apply(Minv, fld)
        sq += (px - ix) ** 2 + (py - iy) ** 2
    return float(np.sqrt(sq / len(correspondences)))


def camera_footprint(
    h: Homography,
    image_width: float,
    image_height: float,
    field_length: float = FIELD_LENGTH_M,
    field_width: float = FIELD_WIDTH_M,
) -> list[tuple[float, float]]:
    """Project the image corners to the field and clip to the pitch rectangle
    (Sutherland-Hodgman); vertices returned counterclockwise."""
    corners = [
        (0.0, 0.0),
        (image_width, 0.0),
        (image_width, image_height),
        (0.0, image_height),
    ]
    poly = [project_point(h, c) for c in corners]
    # half-plane clips: (predicate keeping inside, intersection param axis)
    for axis, bound, keep_le in (
        (0, 0.0, False),
        (0, field_length, True),
        (1, 0.0, False),
        (1, field_width, True),
    ):
        poly = _clip_halfplane(poly, axis, bound, keep_le)
        if not poly:
            return []
    if _signed_area(poly) < 0:
        poly = poly[::-1]
    return poly


def _clip_halfplane(poly, axis: int, bound: float, keep_le: bool):
    def inside(p):
        return p[axis] <= bound if keep_le else p[axis] >= bound

    out = []
    for i, cur in enumerate(poly):
        prev = poly[i - 1]
        if inside(cur):
            if not inside(prev):
                out.append(_intersect(prev, cur, axis, bound))
            out.append(cur)
        elif inside(prev):
            out.append(_intersect(prev, cur, axis, bound))
    return out


def _intersect(p, q, axis: int, bound: float):
    t = (bound - p[axis]) / (q[axis] - p[axis])
    return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))


def _signed_area(poly) -> float:
    a = 0.0
    for i, (x1, y1) in enumerate(poly):
        x2, y2 = poly[(i + 1) % len(poly)]
        a += x1 * y2 - x2 * y1
    return a / 2.0


def polygon_area(poly) -> float:
    return abs(_signed_area(poly))


class HomographyTracker:
    """Carries the last valid homography forward for short keypoint gaps."""

    def __init__(self, min_keypoints: int = 6, min_score: float = 0.5, max_hold: int = 125):
        self.min_keypoints = min_keypoints
        self.min_score = min_score
        self.max_hold = max_hold
        self.current: Optional[Homography] = None
        self._age = 0

    def update(self, keypoints, field_keypoints: dict, frame_index: int) -> tuple[Optional[Homography], bool]:
        """Returns (homography or None, refreshed flag)."""
        good = [k for k in keypoints if k.score >= self.min_score]
        if len(good) >= self.min_keypoints:
            pairs = []
            for k in good:
                xy = (k.x, k.y)
                if k.score_patch is not None:
                    try:
                        xy = refine_keypoint(k.score_patch, xy)
                    except NoPeak:
                        pass
                pairs.append((xy, field_keypoints[k.id]))
            try:
                self.current = estimate_homography(pairs, frame_index)
                self._age = 0
                return self.current, True
            except (DegenerateConfiguration, InsufficientPoints):
                pass
        if self.current is not None:
            self._age += 1
            if self._age > self.max_hold:
                self.current = None
        return self.current, False
