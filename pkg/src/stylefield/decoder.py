"""Linear feature-to-RGB decoder with background compositing."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ShapeError
from .volume_renderer import FeatureMap

FOREGROUND_THRESHOLD = 0.5
RIDGE = 1e-8


@dataclass
class DecoderParams:
    weight: np.ndarray  # (3, C)
    bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    background: np.ndarray = field(default_factory=lambda: np.ones(3))
    residual: float = float("nan")

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(3)
        self.background = np.asarray(self.background, dtype=np.float64).reshape(3)
        if self.weight.ndim != 2 or self.weight.shape[0] != 3:
            raise ShapeError(f"decoder weight must be (3, C), got {self.weight.shape}")
        if not all(np.all(np.isfinite(a)) for a in (self.weight, self.bias, self.background)):
            raise DomainError("decoder parameters must be finite")

    @property
    def channels(self) -> int:
        return self.weight.shape[1]


def decode(fmap: FeatureMap, params: DecoderParams) -> np.ndarray:
    """RGB image ``(H, W, 3)`` in ``[0, 1]``.

    ``clip(clip(W f + b, 0, 1) + (1 - w_r) * background, 0, 1)``
    """
    if fmap.channels != params.channels:
        raise ShapeError(f"decoder expects {params.channels} channels, map has {fmap.channels}")
    h, w, c = fmap.data.shape
    flat = fmap.data.reshape(-1, c)
    rgb = flat[:, 0:1] * params.weight[:, 0]
    for k in range(1, c):
        rgb += flat[:, k : k + 1] * params.weight[:, k]
    rgb = np.clip(rgb + params.bias, 0.0, 1.0)
    rgb += (1.0 - fmap.ray_weight.reshape(-1, 1)) * params.background
    return np.clip(rgb, 0.0, 1.0).reshape(h, w, 3)


def fit_decoder(feature_maps, target_rgb, background=(1.0, 1.0, 1.0), ridge=RIDGE) -> DecoderParams:
    """Least-squares fit of weight and bias over foreground pixels.

    Pixels with ``w_r > 0.5`` are used; the background share
    ``(1 - w_r) * background`` is removed from each target first so the fitted
    map matches :func:`decode`. A ridge term on the weight block (not the bias)
    keeps rank-deficient problems solvable.
    """
    background = np.asarray(background, dtype=np.float64)
    xs, ys = [], []
    for fmap, rgb in zip(feature_maps, target_rgb, strict=True):
        rgb = np.asarray(rgb, dtype=np.float64)
        if rgb.shape != fmap.data.shape[:2] + (3,):
            raise ShapeError(f"target {rgb.shape} does not match map {fmap.data.shape}")
        fg = fmap.ray_weight > FOREGROUND_THRESHOLD
        xs.append(fmap.data[fg])
        ys.append(rgb[fg] - (1.0 - fmap.ray_weight[fg])[:, None] * background)
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    n, c = x.shape
    if n < c + 1:
        raise DomainError(f"need at least {c + 1} foreground pixels, got {n}")
    design = np.hstack([x, np.ones((n, 1))])
    gram = design.T @ design
    gram[:c, :c] += ridge * np.eye(c)
    try:
        beta = np.linalg.solve(gram, design.T @ y)
    except np.linalg.LinAlgError:
        beta = np.linalg.lstsq(gram, design.T @ y, rcond=None)[0]
    resid = float(np.mean((design @ beta - y) ** 2))
    return DecoderParams(beta[:c].T, beta[c], background, residual=resid)
