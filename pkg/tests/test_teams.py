import colorsys

import numpy as np
import pytest

from pitchstream.match_model import GroupLabel
from pitchstream.teams import (
    ColorFeature,
    GrassModel,
    GroupVote,
    InsufficientForeground,
    NoGrassFound,
    TooFewSamples,
    cluster_teams,
    estimate_grass_model,
    extract_color_feature,
    group_of_track,
    hsv_to_rgb,
    kmeans_inertia,
    label_clusters,
    nearest_cluster,
    rgb_to_hsv,
    segment_person,
)


def solid_patch(h, w, rgb):
    patch = np.empty((h, w, 3))
    patch[:] = rgb
    return patch


def feature_from_vec(vec):
    v = np.asarray(vec, dtype=float)
    return ColorFeature(v[0:4], v[4:8], v[8:11], v[11:14], 1.0)


# -- color conversion -----------------------------------------------------------


def test_rgb_hsv_matches_colorsys_on_grid():
    vals = np.linspace(0.0, 1.0, 10)
    colors = np.array([(r, g, b) for r in vals for g in vals for b in vals])
    hsv = rgb_to_hsv(colors)
    for (r, g, b), (h, s, v) in zip(colors, hsv):
        oh, os_, ov = colorsys.rgb_to_hsv(r, g, b)
        assert s == pytest.approx(os_, abs=1e-9)
        assert v == pytest.approx(ov, abs=1e-9)
        if s > 1e-9 and v > 1e-9:  # hue undefined on the gray axis
            assert h / 360.0 == pytest.approx(oh % 1.0, abs=1e-9)


def test_rgb_hsv_round_trip():
    rng = np.random.default_rng(0)
    colors = rng.random((1000, 3))
    back = hsv_to_rgb(rgb_to_hsv(colors))
    assert np.allclose(back, colors, atol=1e-6)


def test_rgb_to_hsv_accepts_uint8():
    px = np.array([[255, 0, 0]], dtype=np.uint8)
    h, s, v = rgb_to_hsv(px)[0]
    assert (h, s, v) == (0.0, 1.0, 1.0)


# -- grass model ------------------------------------------------------------------


def grass_pixels(n, hue, rng, sat=0.6, val=0.5, jitter=5.0, sv_jitter=0.05):
    hsv = np.stack(
        [
            (hue + rng.uniform(-jitter, jitter, n)) % 360.0,
            np.full(n, sat) + rng.uniform(-sv_jitter, sv_jitter, n),
            np.full(n, val) + rng.uniform(-sv_jitter, sv_jitter, n),
        ],
        axis=1,
    )
    return hsv_to_rgb(hsv)


def test_uniform_green_frame():
    rng = np.random.default_rng(1)
    px = np.concatenate(
        [grass_pixels(9000, 120.0, rng, jitter=2.0, sv_jitter=0.0), rng.random((1000, 3)) * 0.2]
    )
    model = estimate_grass_model(px)
    assert model.hue_lo <= 120.0 <= model.hue_hi
    assert model.support == pytest.approx(0.9, abs=0.05)


def test_two_tone_mowing_stripes():
    rng = np.random.default_rng(2)
    px = np.concatenate(
        [grass_pixels(5000, 100.0, rng, jitter=8.0), grass_pixels(5000, 120.0, rng, jitter=8.0)]
    )
    model = estimate_grass_model(px)
    assert model.hue_lo <= 100.0
    assert model.hue_hi >= 120.0
    # histogram oracle: the window mass matches a direct count
    hsv = rgb_to_hsv(px)
    in_window = (hsv[:, 0] >= model.hue_lo) & (hsv[:, 0] <= model.hue_hi)
    assert in_window.mean() > 0.95


def test_gray_frame_raises():
    rng = np.random.default_rng(3)
    px = np.repeat(rng.random((2000, 1)), 3, axis=1)  # pure grays
    with pytest.raises(NoGrassFound):
        estimate_grass_model(px)


def test_too_few_pixels_rejected():
    with pytest.raises(ValueError):
        estimate_grass_model(np.ones((10, 3)) * 0.5)


def test_grass_model_wrap_window():
    model = GrassModel(350.0, 10.0, 0.1, 0.1, 1.0)
    hsv = np.array([[355.0, 0.5, 0.5], [5.0, 0.5, 0.5], [180.0, 0.5, 0.5]])
    assert model.matches(hsv).tolist() == [True, True, False]


# -- segmentation -----------------------------------------------------------------


GRASS = GrassModel(100.0, 140.0, 0.3, 0.3, 1.0)
GREEN = hsv_to_rgb(np.array([120.0, 0.6, 0.5]))
RED = hsv_to_rgb(np.array([0.0, 0.9, 0.9]))


def test_all_grass_patch_empty_mask():
    mask = segment_person(solid_patch(20, 12, GREEN), GRASS)
    assert not mask.any()


def test_red_on_green_is_exact():
    patch = solid_patch(20, 12, GREEN)
    patch[5:15, 3:9] = RED
    mask = segment_person(patch, GRASS)
    want = np.zeros((20, 12), dtype=bool)
    want[5:15, 3:9] = True
    assert np.array_equal(mask, want)


def test_mask_equals_per_pixel_oracle():
    rng = np.random.default_rng(4)
    patch = solid_patch(24, 16, GREEN)
    patch[4:20, 4:12] = RED
    patch += rng.uniform(-0.02, 0.02, patch.shape)
    patch = np.clip(patch, 0, 1)
    mask = segment_person(patch, GRASS)
    # oracle: per-pixel predicate; the foreground blob here is one large
    # component, so small-component removal must not change anything inside it
    oracle = np.zeros(patch.shape[:2], dtype=bool)
    for i in range(patch.shape[0]):
        for j in range(patch.shape[1]):
            h, s, v = rgb_to_hsv(patch[i, j])
            oracle[i, j] = not (GRASS.hue_lo <= h <= GRASS.hue_hi and s >= GRASS.sat_min and v >= GRASS.val_min)
    assert mask.sum() <= oracle.sum()
    assert np.array_equal(mask, mask & oracle)  # mask never exceeds the predicate
    assert np.array_equal(mask, oracle)  # single 128-px component: nothing removed


def test_small_components_removed():
    patch = solid_patch(30, 30, GREEN)
    patch[10:20, 10:20] = RED  # 100 px, kept
    patch[0, 0] = RED  # 1 px < 1% of 900, dropped
    mask = segment_person(patch, GRASS)
    assert not mask[0, 0]
    assert mask[10:20, 10:20].all()


# -- color features ----------------------------------------------------------------


def test_uniform_patch_equal_halves():
    patch = solid_patch(20, 10, RED)
    mask = np.ones((20, 10), dtype=bool)
    feat = extract_color_feature(patch, mask)
    assert np.allclose(feat.upper_hsv, feat.lower_hsv)
    assert np.allclose(feat.upper_rgb, feat.lower_rgb)
    assert np.allclose(feat.upper_rgb, RED, atol=1e-9)


def test_two_tone_patch_distinct_halves():
    patch = solid_patch(20, 10, (1.0, 1.0, 1.0))
    patch[10:] = 0.0
    mask = np.ones((20, 10), dtype=bool)
    feat = extract_color_feature(patch, mask)
    assert np.allclose(feat.upper_rgb, 1.0)
    assert np.allclose(feat.lower_rgb, 0.0)


def test_empty_mask_raises():
    with pytest.raises(InsufficientForeground):
        extract_color_feature(solid_patch(10, 10, RED), np.zeros((10, 10), dtype=bool))


# -- clustering --------------------------------------------------------------------


def make_separated_features(rng, k=5, per=20, sep=10.0, noise=0.05):
    centers = rng.normal(scale=sep, size=(k, 14))
    feats, labels = [], []
    for c in range(k):
        for _ in range(per):
            feats.append(feature_from_vec(centers[c] + rng.normal(scale=noise, size=14)))
            labels.append(c)
    return feats, np.array(labels)


def purity(assign, truth):
    total = 0
    for c in np.unique(assign):
        members = truth[assign == c]
        total += np.bincount(members).max()
    return total / len(truth)


def test_separated_groups_recovered():
    rng = np.random.default_rng(5)
    feats, truth = make_separated_features(rng)
    assign, centroids = cluster_teams(feats, 5, seed=0)
    assert purity(assign, truth) == 1.0
    assert centroids.shape == (5, 14)


def test_identical_features_zero_inertia():
    feats = [feature_from_vec(np.ones(14))] * 10
    assign, centroids = cluster_teams(feats, 5, seed=0)
    X = np.array([f.vector() for f in feats])
    assert kmeans_inertia(X, assign, centroids) == 0.0


def test_four_colors_k5_still_partitions():
    rng = np.random.default_rng(6)
    feats, _ = make_separated_features(rng, k=4, per=15)
    assign, _ = cluster_teams(feats, 5, seed=0)
    assert len(assign) == len(feats)
    assert set(assign) <= set(range(5))


def test_too_few_samples():
    with pytest.raises(TooFewSamples):
        cluster_teams([feature_from_vec(np.zeros(14))] * 3, 5)


def test_clustering_permutation_invariant():
    rng = np.random.default_rng(7)
    feats, _ = make_separated_features(rng)
    assign_a, _ = cluster_teams(feats, 5, seed=1)
    perm = rng.permutation(len(feats))
    assign_b, _ = cluster_teams([feats[i] for i in perm], 5, seed=1)
    # same partition up to cluster relabeling
    inv = np.empty(len(feats), dtype=int)
    inv[perm] = np.arange(len(feats))
    assign_b_orig = assign_b[inv]
    same_a = assign_a[:, None] == assign_a[None, :]
    same_b = assign_b_orig[:, None] == assign_b_orig[None, :]
    assert np.array_equal(same_a, same_b)


def test_inertia_non_increasing_across_iterations():
    # re-run Lloyd's by hand from the same seeding and track inertia
    rng = np.random.default_rng(8)
    feats, _ = make_separated_features(rng, noise=2.0)
    X = np.array([f.vector() for f in feats])
    from pitchstream.teams import _kmeanspp

    centroids = _kmeanspp(X, 5, np.random.default_rng(0))
    last = np.inf
    for _ in range(50):
        d2 = ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        assign = d2.argmin(axis=1)
        inertia = kmeans_inertia(X, assign, centroids)
        assert inertia <= last + 1e-9
        last = inertia
        for c in range(5):
            if (assign == c).any():
                centroids[c] = X[assign == c].mean(axis=0)


def test_nearest_cluster_confidence_range():
    centroids = np.zeros((5, 14))
    centroids[1] = 1.0
    feat = feature_from_vec(np.zeros(14))
    c, conf = nearest_cluster(feat, centroids)
    assert c == 0
    assert 0.5 <= conf <= 1.0


# -- cluster labeling ---------------------------------------------------------------


def test_label_clusters_by_size_and_position():
    assign = np.array([0] * 10 + [1] * 9 + [2] + [3] + [4])
    positions = (
        [(30.0, 30.0)] * 10 + [(70.0, 30.0)] * 9 + [(5.0, 34.0)] + [(100.0, 34.0)] + [(52.0, 34.0)]
    )
    labels = label_clusters(assign, positions)
    assert labels[0] is GroupLabel.TEAM_A
    assert labels[1] is GroupLabel.TEAM_B
    assert labels[2] is GroupLabel.GOALKEEPER_A
    assert labels[3] is GroupLabel.GOALKEEPER_B
    assert labels[4] is GroupLabel.REFEREE


def test_label_clusters_team_order_by_mean_x():
    assign = np.array([0] * 5 + [1] * 5)
    positions = [(90.0, 10.0)] * 5 + [(10.0, 10.0)] * 5
    labels = label_clusters(assign, positions)
    assert labels[1] is GroupLabel.TEAM_A
    assert labels[0] is GroupLabel.TEAM_B


# -- group voting -------------------------------------------------------------------


def test_group_vote_unanimous():
    assert group_of_track([GroupLabel.TEAM_A] * 5) == (GroupLabel.TEAM_A, 1.0)


def test_group_vote_majority():
    labels = [GroupLabel.TEAM_A] * 6 + [GroupLabel.TEAM_B] * 4
    group, conf = group_of_track(labels)
    assert group is GroupLabel.TEAM_A
    assert conf == pytest.approx(0.6)


def test_group_vote_empty():
    assert group_of_track([]) == (GroupLabel.UNKNOWN, 0.0)


def test_group_vote_ignores_unknown():
    vote = GroupVote()
    vote.add(GroupLabel.UNKNOWN)
    vote.add(GroupLabel.REFEREE)
    assert vote.result() == (GroupLabel.REFEREE, 1.0)
