"""Deferred style transformation and its applications.

A style is summarized by global scalars ``mu`` and ``sigma`` and a
``C' x C'`` transform ``T``, the principal square root of the style's channel
covariance. Applied to a rendered feature map with per-pixel ray weight
``w_r`` it reads::

    out = conv @ (T @ f) * sigma + w_r * mu

Because every term is linear in the rendered feature except the bias, and the
bias is scaled by ``w_r = sum_i w_i``, this equals rendering
``conv @ (T @ F_i) * sigma + mu`` point by point. :func:`apply_pointwise_style`
computes that per-point form and exists to check the deferred one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DomainError, ShapeError
from .linalg import psd_sqrt
from .volume_renderer import FeatureMap

PARTITION_TOL = 1e-6


@dataclass
class StyleFeatures:
    data: np.ndarray  # (H_s, W_s, C')

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim == 2:
            self.data = self.data[None]
        if self.data.ndim != 3:
            raise ShapeError(f"style features must be (H, W, C'), got {self.data.shape}")
        if self.data.shape[0] * self.data.shape[1] < 2:
            raise DomainError("style statistics need at least two spatial samples")

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass
class StyleStats:
    mu: float
    sigma: float
    cov: np.ndarray
    T: np.ndarray

    @classmethod
    def identity(cls, channels: int) -> "StyleStats":
        return cls(0.0, 1.0, np.eye(channels), np.eye(channels))


@dataclass
class DstParams:
    conv_matrix: np.ndarray  # (C, C'), no bias

    @classmethod
    def default(cls, channels: int, reduced: int) -> "DstParams":
        return cls(np.eye(channels, reduced))


def compute_style_stats(fs) -> StyleStats:
    if not isinstance(fs, StyleFeatures):
        fs = StyleFeatures(fs)
    x = fs.data.reshape(-1, fs.channels)
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / x.shape[0]
    cov = 0.5 * (cov + cov.T)
    return StyleStats(float(x.mean()), float(x.std()), cov, psd_sqrt(cov))


def _mix(x, m):
    """Row-wise ``m @ x_p`` with a fixed summation order per row."""
    out = x[:, 0:1] * m[:, 0]
    for c in range(1, m.shape[1]):
        out += x[:, c : c + 1] * m[:, c]
    return out


def _check(reduced, stats, params):
    if stats.T.shape != (reduced, reduced):
        raise ShapeError(f"transform is {stats.T.shape}, features have {reduced} channels")
    if params.conv_matrix.ndim != 2 or params.conv_matrix.shape[1] != reduced:
        raise ShapeError(f"conv matrix {params.conv_matrix.shape} cannot take {reduced} channels")


def apply_dst(fmap: FeatureMap, stats: StyleStats, params: DstParams) -> FeatureMap:
    h, w, reduced = fmap.data.shape
    _check(reduced, stats, params)
    flat = fmap.data.reshape(-1, reduced)
    styled = _mix(_mix(flat, stats.T), params.conv_matrix) * stats.sigma
    styled += fmap.ray_weight.reshape(-1, 1) * stats.mu
    return FeatureMap(styled.reshape(h, w, -1), fmap.ray_weight.copy())


def apply_pointwise_style(features, weights, stats: StyleStats, params: DstParams) -> np.ndarray:
    """Style each point, then integrate: ``sum_i w_i (conv T F_i sigma + mu)``.

    ``features`` is ``(..., N, C')`` and ``weights`` ``(..., N)``.
    """
    features = np.asarray(features, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if features.shape[:-1] != weights.shape:
        raise ShapeError(f"features {features.shape} and weights {weights.shape} disagree")
    reduced = features.shape[-1]
    _check(reduced, stats, params)
    flat = features.reshape(-1, reduced)
    per_point = _mix(_mix(flat, stats.T), params.conv_matrix) * stats.sigma + stats.mu
    per_point = per_point.reshape(*weights.shape, -1)
    return np.sum(weights[..., None] * per_point, axis=-2)


def interpolate_styles(stylized_maps, weights) -> FeatureMap:
    """Convex combination of stylized feature maps (before decoding)."""
    weights = [float(w) for w in weights]
    if len(weights) != len(stylized_maps) or not stylized_maps:
        raise DomainError("need one weight per map")
    if abs(sum(weights) - 1.0) > PARTITION_TOL:
        raise DomainError(f"interpolation weights sum to {sum(weights)}, not 1")
    _same_shape(stylized_maps)
    data = weights[0] * stylized_maps[0].data
    ray_weight = weights[0] * stylized_maps[0].ray_weight
    for w, m in zip(weights[1:], stylized_maps[1:]):
        data = data + w * m.data
        ray_weight = ray_weight + w * m.ray_weight
    return FeatureMap(data, ray_weight)


def composite_styles(maps, masks) -> FeatureMap:
    """Spatial composition ``sum_k mask_k * map_k`` with masks partitioning unity."""
    if len(maps) != len(masks) or not maps:
        raise DomainError("need one mask per map")
    _same_shape(maps)
    masks = [np.asarray(m, dtype=np.float64) for m in masks]
    shape = maps[0].data.shape[:2]
    for m in masks:
        if m.shape != shape:
            raise ShapeError(f"mask shape {m.shape} does not match map {shape}")
        if np.any(m < 0) or np.any(m > 1):
            raise DomainError("mask values must lie in [0, 1]")
    if np.max(np.abs(sum(masks) - 1.0)) > PARTITION_TOL:
        raise DomainError("masks do not partition unity")
    data = masks[0][..., None] * maps[0].data
    ray_weight = masks[0] * maps[0].ray_weight
    for m, fm in zip(masks[1:], maps[1:]):
        data = data + m[..., None] * fm.data
        ray_weight = ray_weight + m * fm.ray_weight
    return FeatureMap(data, ray_weight)


def _same_shape(maps):
    shape = maps[0].data.shape
    for m in maps[1:]:
        if m.data.shape != shape:
            raise ShapeError(f"feature maps differ in shape: {m.data.shape} vs {shape}")


# Fixed filter bank, 8 channels per scale, scales (1, 2), in this order:
#   0 Gaussian-smoothed luminance        4 diagonal derivative (dx + dy) / sqrt 2
#   1 difference of Gaussians (s, 1.6s)  5 anti-diagonal derivative (dx - dy) / sqrt 2
#   2 horizontal derivative d/dx         6 red-green opponent, smoothed
#   3 vertical derivative d/dy           7 blue-yellow opponent, smoothed
# Derivatives are Gaussian derivatives scaled by s. Output is subsampled 2x.
BANK_SCALES = (1.0, 2.0)
BANK_SIZE = 8 * len(BANK_SCALES)
DOG_RATIO = 1.6
TRUNCATE = 3.0
LUMA = np.array([0.299, 0.587, 0.114])


def min_style_image_size() -> int:
    sigma = max(BANK_SCALES) * DOG_RATIO
    return 2 * int(TRUNCATE * sigma + 0.5) + 1


def extract_style_features(image, target_channels: int) -> StyleFeatures:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ShapeError(f"style image must be (H, W, 3), got {image.shape}")
    if not 1 <= target_channels <= BANK_SIZE:
        raise DomainError(f"filter bank has {BANK_SIZE} channels, {target_channels} requested")
    if min(image.shape[:2]) < min_style_image_size():
        raise DomainError(f"style image must be at least {min_style_image_size()} pixels per side")
    lum = image @ LUMA
    rg = image[..., 0] - image[..., 1]
    by = image[..., 2] - 0.5 * (image[..., 0] + image[..., 1])

    def g(x, s, order=(0, 0)):
        return ndimage.gaussian_filter(x, s, order=order, mode="nearest", truncate=TRUNCATE)

    channels = []
    for s in BANK_SCALES:
        dx = s * g(lum, s, (0, 1))
        dy = s * g(lum, s, (1, 0))
        channels += [
            g(lum, s),
            g(lum, s) - g(lum, DOG_RATIO * s),
            dx,
            dy,
            (dx + dy) / np.sqrt(2.0),
            (dx - dy) / np.sqrt(2.0),
            g(rg, s),
            g(by, s),
        ]
    bank = np.stack(channels[:target_channels], axis=-1)
    return StyleFeatures(bank[::2, ::2])
