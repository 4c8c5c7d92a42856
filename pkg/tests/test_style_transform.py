import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stylefield.errors import DomainError, ShapeError
from stylefield.style_transform import (
    BANK_SIZE,
    DstParams,
    StyleFeatures,
    StyleStats,
    apply_dst,
    apply_pointwise_style,
    composite_styles,
    compute_style_stats,
    extract_style_features,
    interpolate_styles,
    min_style_image_size,
)
from stylefield.linalg import psd_sqrt
from stylefield.volume_renderer import FeatureMap


def random_map(rng, h=4, w=5, c=3):
    return FeatureMap(rng.normal(size=(h, w, c)), rng.uniform(0, 1, (h, w)))


def random_stats(rng, c):
    a = rng.normal(size=(c, c))
    cov = a @ a.T
    return StyleStats(float(rng.normal()), float(rng.uniform(0.2, 2)), cov, psd_sqrt(cov))


def test_whitened_style_gives_identity_transform(rng):
    x = rng.normal(size=(64, 4))
    x -= x.mean(axis=0)
    w, u = np.linalg.eigh(x.T @ x / 64)
    x = x @ (u / np.sqrt(w)) @ u.T
    stats = compute_style_stats(x.reshape(8, 8, 4))
    np.testing.assert_allclose(stats.cov, np.eye(4), atol=1e-10)
    np.testing.assert_allclose(stats.T, np.eye(4), atol=1e-5)


def test_constant_style():
    stats = compute_style_stats(np.full((3, 4, 2), 0.7))
    assert stats.mu == pytest.approx(0.7)
    assert stats.sigma == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(stats.cov, 0.0, atol=1e-15)
    np.testing.assert_allclose(stats.T, 0.0, atol=1e-7)


def test_transform_squares_to_cov(rng):
    stats = compute_style_stats(rng.normal(size=(8, 8, 4)) * [1, 2, 0.5, 3])
    assert stats.cov.shape == (4, 4)
    np.testing.assert_allclose(stats.T @ stats.T, stats.cov, atol=1e-5)


def test_scalar_statistics_are_global(rng):
    data = rng.normal(size=(5, 6, 3))
    stats = compute_style_stats(data)
    assert stats.mu == pytest.approx(float(np.mean(data)))
    assert stats.sigma == pytest.approx(float(np.std(data)))


def test_style_features_need_two_samples():
    with pytest.raises(DomainError):
        StyleFeatures(np.ones((1, 1, 3)))


def test_dst_identity_bitwise(rng):
    fmap = random_map(rng, c=4)
    out = apply_dst(fmap, StyleStats.identity(4), DstParams(np.eye(4)))
    np.testing.assert_array_equal(out.data, fmap.data)


def test_dst_zero_feature_bias_only():
    fmap = FeatureMap(np.zeros((1, 1, 2)), np.array([[0.75]]))
    stats = StyleStats(2.0, 1.3, np.eye(2), np.eye(2))
    out = apply_dst(fmap, stats, DstParams(np.ones((3, 2))))
    np.testing.assert_allclose(out.data, 1.5)


def test_dst_matches_pixel_loop(rng):
    fmap = random_map(rng, 3, 4, 3)
    stats = random_stats(rng, 3)
    params = DstParams(rng.normal(size=(5, 3)))
    out = apply_dst(fmap, stats, params)
    for i in range(3):
        for j in range(4):
            f = fmap.data[i, j]
            t = [sum(stats.T[a, b] * f[b] for b in range(3)) for a in range(3)]
            for c in range(5):
                ref = stats.sigma * sum(params.conv_matrix[c, a] * t[a] for a in range(3)) + fmap.ray_weight[i, j] * stats.mu
                assert out.data[i, j, c] == pytest.approx(ref, abs=1e-6)


def test_pointwise_single_point(rng):
    stats = random_stats(rng, 3)
    params = DstParams(rng.normal(size=(4, 3)))
    f = rng.normal(size=(1, 3))
    pw = apply_pointwise_style(f, np.ones(1), stats, params)
    d = apply_dst(FeatureMap(f.reshape(1, 1, 3), np.ones((1, 1))), stats, params)
    np.testing.assert_allclose(pw, d.data[0, 0], atol=1e-6)


def test_pointwise_zero_weights(rng):
    out = apply_pointwise_style(rng.normal(size=(6, 3)), np.zeros(6), random_stats(rng, 3), DstParams(np.eye(2, 3)))
    np.testing.assert_array_equal(out, 0.0)


def test_deferred_equals_pointwise_random_ray(rng):
    n, reduced, channels = 32, 8, 16
    s = rng.exponential(0.1, n)
    w = np.exp(-np.concatenate([[0], np.cumsum(s)[:-1]])) * (1 - np.exp(-s))
    feats = rng.normal(size=(n, reduced))
    stats = random_stats(rng, reduced)
    params = DstParams(rng.normal(size=(channels, reduced)))
    fmap = FeatureMap((w @ feats).reshape(1, 1, -1), np.array([[w.sum()]]))
    np.testing.assert_allclose(apply_dst(fmap, stats, params).data[0, 0], apply_pointwise_style(feats, w, stats, params), atol=1e-5)


def test_dst_shape_errors(rng):
    fmap = random_map(rng, c=3)
    with pytest.raises(ShapeError):
        apply_dst(fmap, StyleStats.identity(4), DstParams(np.eye(4)))
    with pytest.raises(ShapeError):
        apply_dst(fmap, StyleStats.identity(3), DstParams(np.eye(4)))


def test_interpolate_one_zero_bitwise(rng):
    a, b = random_map(rng), random_map(rng)
    out = interpolate_styles([a, b], [1.0, 0.0])
    np.testing.assert_array_equal(out.data, a.data)
    np.testing.assert_array_equal(out.ray_weight, a.ray_weight)


@settings(max_examples=25, deadline=None)
@given(st.floats(0, 1))
def test_interpolate_identical_maps(t):
    rng = np.random.default_rng(0)
    a = random_map(rng)
    out = interpolate_styles([a, FeatureMap(a.data.copy(), a.ray_weight.copy())], [t, 1 - t])
    np.testing.assert_allclose(out.data, a.data, atol=1e-14)


def test_interpolate_half_half_loop(rng):
    a, b = random_map(rng, 2, 3, 2), random_map(rng, 2, 3, 2)
    out = interpolate_styles([a, b], [0.5, 0.5])
    for i in range(2):
        for j in range(3):
            for c in range(2):
                assert out.data[i, j, c] == pytest.approx((a.data[i, j, c] + b.data[i, j, c]) / 2, abs=1e-15)


def test_interpolate_weight_errors(rng):
    a = random_map(rng)
    with pytest.raises(DomainError):
        interpolate_styles([a, a], [0.5, 0.6])
    with pytest.raises(DomainError):
        interpolate_styles([a, a], [1.0])


def test_composite_all_ones(rng):
    a = random_map(rng)
    out = composite_styles([a], [np.ones(a.ray_weight.shape)])
    np.testing.assert_array_equal(out.data, a.data)


def test_composite_half_half(rng):
    a, b = random_map(rng, 4, 6), random_map(rng, 4, 6)
    left = np.zeros((4, 6))
    left[:, :3] = 1
    out = composite_styles([a, b], [left, 1 - left])
    np.testing.assert_array_equal(out.data[:, :3], a.data[:, :3])
    np.testing.assert_array_equal(out.data[:, 3:], b.data[:, 3:])


def test_composite_soft_masks_loop(rng):
    maps = [random_map(rng, 3, 3, 2) for _ in range(3)]
    raw = rng.uniform(size=(3, 3, 3))
    masks = list(raw / raw.sum(axis=0))
    out = composite_styles(maps, masks)
    for i in range(3):
        for j in range(3):
            ref = sum(masks[k][i, j] * maps[k].data[i, j] for k in range(3))
            np.testing.assert_allclose(out.data[i, j], ref, atol=1e-6)


def test_composite_rejects_bad_masks(rng):
    a = random_map(rng)
    with pytest.raises(DomainError):
        composite_styles([a, a], [np.ones((4, 5)), np.ones((4, 5))])
    with pytest.raises(ShapeError):
        composite_styles([a], [np.ones((3, 5))])


def test_constant_gray_features():
    size = min_style_image_size()
    fs = extract_style_features(np.full((size, size + 3, 3), 0.4), BANK_SIZE)
    data = fs.data
    assert data.shape[2] == BANK_SIZE
    for s in range(2):
        np.testing.assert_allclose(data[..., 8 * s], 0.4, atol=1e-12)
        np.testing.assert_allclose(data[..., 8 * s + 1 : 8 * s + 8], 0.0, atol=1e-6)


def test_features_deterministic(rng):
    img = rng.uniform(size=(30, 26, 3))
    np.testing.assert_array_equal(extract_style_features(img, 8).data, extract_style_features(img, 8).data)


def test_step_edge_orientation():
    img = np.zeros((32, 32, 3))
    img[:, 16:] = 1.0
    data = extract_style_features(img, 8).data
    dx_energy = np.sum(data[..., 2] ** 2)
    dy_energy = np.sum(data[..., 3] ** 2)
    assert dx_energy > 10 * dy_energy
    # bright side is on the right, so the horizontal derivative is positive at the edge
    assert data[:, 8, 2].min() > 0


def test_extract_errors():
    with pytest.raises(DomainError):
        extract_style_features(np.zeros((8, 8, 3)), 4)
    with pytest.raises(DomainError):
        extract_style_features(np.zeros((32, 32, 3)), BANK_SIZE + 1)
    with pytest.raises(ShapeError):
        extract_style_features(np.zeros((32, 32)), 4)
