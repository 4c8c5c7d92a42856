"""Sampling-invariant content transformation.

Point features are normalized with running (volume-wide) statistics and then
passed through a per-point channel self-attention::

    q, k, v = W_q x, W_k x, W_v x                  (each C')
    A       = softmax_rows(q k^T / sqrt(C'))       (C' x C')
    out     = A v

Nothing in eval mode looks at other points of the batch, so a point's output
is bitwise independent of what it was sampled with. All per-point arithmetic
is written as explicit channel loops because BLAS kernels change their
summation order with batch size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DomainError, ShapeError

# softmax normalizes each row of the C' x C' attention matrix
SOFTMAX_AXIS = -1


@dataclass
class VolumeAdaptiveIN:
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    epsilon: float = 1e-5
    mode: str = "eval"

    def __post_init__(self):
        self.running_mean = np.asarray(self.running_mean, dtype=np.float64)
        self.running_var = np.asarray(self.running_var, dtype=np.float64)
        if self.running_mean.shape != self.running_var.shape or self.running_mean.ndim != 1:
            raise ShapeError("running mean and var must be matching vectors")
        if np.any(self.running_var < 0):
            raise DomainError("running variance must be nonnegative")
        if not 0.0 < self.momentum < 1.0:
            raise DomainError("momentum must lie in (0, 1)")
        if self.epsilon <= 0:
            raise DomainError("epsilon must be positive")
        if self.mode not in ("train", "eval", "vanilla"):
            raise DomainError(f"unknown normalization mode {self.mode!r}")

    @classmethod
    def fresh(cls, channels: int, **kwargs) -> "VolumeAdaptiveIN":
        return cls(np.zeros(channels), np.ones(channels), **kwargs)

    @property
    def channels(self) -> int:
        return self.running_mean.size


@dataclass
class AttentionParams:
    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray

    def __post_init__(self):
        self.w_q, self.w_k, self.w_v = (np.asarray(w, dtype=np.float64) for w in (self.w_q, self.w_k, self.w_v))
        if not (self.w_q.shape == self.w_k.shape == self.w_v.shape) or self.w_q.ndim != 2:
            raise ShapeError("attention matrices must share one (C', C) shape")
        if self.w_q.shape[0] > self.w_q.shape[1]:
            raise ShapeError("reduced channel count C' must not exceed C")

    @classmethod
    def identity(cls, reduced: int, channels: int) -> "AttentionParams":
        eye = np.eye(reduced, channels)
        return cls(eye.copy(), eye.copy(), eye.copy())

    @property
    def reduced(self) -> int:
        return self.w_q.shape[0]

    @property
    def channels(self) -> int:
        return self.w_q.shape[1]


def _batch_stats(points):
    mean = points.mean(axis=0)
    var = ((points - mean) ** 2).mean(axis=0)
    return mean, var


def normalize(points, state: VolumeAdaptiveIN) -> np.ndarray:
    """Instance-normalize ``(M, C)`` point features.

    ``train`` normalizes with batch statistics and folds them into the running
    estimates; ``eval`` uses the running estimates only; ``vanilla`` uses batch
    statistics without updating anything (diagnostic mode that shows the
    batch dependence volume-adaptive normalization removes).
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != state.channels:
        raise ShapeError(f"expected (M, {state.channels}) features, got {points.shape}")
    if state.mode == "eval":
        mean, var = state.running_mean, state.running_var
    else:
        if points.shape[0] == 0:
            raise DomainError("batch statistics need at least one point")
        mean, var = _batch_stats(points)
        if state.mode == "train":
            m = state.momentum
            state.running_mean = (1.0 - m) * state.running_mean + m * mean
            state.running_var = (1.0 - m) * state.running_var + m * var
    return (points - mean) / np.sqrt(var + state.epsilon)


def channel_attention(normed, params: AttentionParams) -> np.ndarray:
    """Per-point channel self-attention, ``(M, C) -> (M, C')``."""
    x = np.asarray(normed, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.channels:
        raise ShapeError(f"expected (M, {params.channels}) features, got {x.shape}")
    q = _linear(x, params.w_q)
    k = _linear(x, params.w_k)
    v = _linear(x, params.w_v)
    reduced = params.reduced
    logits = q[:, :, None] * k[:, None, :] / np.sqrt(reduced)
    logits -= logits.max(axis=SOFTMAX_AXIS, keepdims=True)
    attn = np.exp(logits)
    total = attn[:, :, 0].copy()
    for j in range(1, reduced):
        total += attn[:, :, j]
    attn /= total[:, :, None]
    out = attn[:, :, 0] * v[:, 0:1]
    for j in range(1, reduced):
        out += attn[:, :, j] * v[:, j : j + 1]
    return out


def _linear(x, w):
    out = x[:, 0:1] * w[:, 0]
    for c in range(1, w.shape[1]):
        out += x[:, c : c + 1] * w[:, c]
    return out


def apply_sict(batch, state: VolumeAdaptiveIN, params: AttentionParams, allow_train=False) -> np.ndarray:
    """Transformed features for a :class:`PointBatch` (or a raw ``(M, C)`` array).

    Points flagged invalid in the batch map to zero.
    """
    if state.mode == "train" and not allow_train:
        raise ContractError("rendering paths need the normalization state in eval mode")
    if hasattr(batch, "features"):
        feats, valid = batch.features, np.asarray(batch.valid, dtype=bool)
    else:
        feats = np.asarray(batch, dtype=np.float64)
        valid = np.ones(feats.shape[0], dtype=bool)
    out = np.zeros((feats.shape[0], params.reduced))
    out[valid] = channel_attention(normalize(feats[valid], state), params)
    return out


@dataclass
class SICT:
    """Callable bundle used as the renderer's per-point transform."""

    state: VolumeAdaptiveIN
    params: AttentionParams

    def __call__(self, features):
        return apply_sict(features, self.state, self.params)


def calibrate(state: VolumeAdaptiveIN, scene, bbox_min, bbox_max, num_points=1 << 16, seed=0, chunk=8192):
    """Estimate volume-wide running statistics from uniform samples in the box.

    The running estimates are replaced by the mean and (population) variance
    of ``num_points`` seeded uniform samples. Accumulation happens chunk by
    chunk in a fixed order, so the result is reproducible bitwise.
    """
    rng = np.random.default_rng(seed)
    pts = rng.uniform(bbox_min, bbox_max, size=(num_points, 3))
    total = np.zeros(state.channels)
    total_sq = np.zeros(state.channels)
    for s in range(0, num_points, chunk):
        f = scene.feature(pts[s : s + chunk])
        total += f.sum(axis=0)
    mean = total / num_points
    for s in range(0, num_points, chunk):
        f = scene.feature(pts[s : s + chunk])
        total_sq += ((f - mean) ** 2).sum(axis=0)
    state.running_mean = mean
    state.running_var = total_sq / num_points
    state.mode = "eval"
    return state
