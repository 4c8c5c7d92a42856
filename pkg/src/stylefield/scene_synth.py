"""Procedural scenes with closed-form density, feature and colour fields.

Density is a sum over primitives of ``amplitude * occ(x)`` with the soft
occupancy ``occ(x) = smoothstep(-sdf(x) / softness)`` and
``smoothstep(t) = 3t^2 - 2t^3`` on ``[0, 1]`` (clamped outside).

Features use twelve axis-aligned sinusoids, ordered ``j = 4a + 2f + t`` for
axis ``a`` in (x, y, z), frequency ``f`` in (pi/2, pi) and ``t`` in (sin, cos)::

    phi_j(x)  = trig_t(freq_f * x_a)
    F_c(x)    = 0.5 + 0.25 * phi_{c mod 12}(x) + 0.15 * phi_{(5c + 3) mod 12}(x)
                + sum_k occ_k(x) * 0.1 * cos(1.3 c + 2.1 k)

Colour is the fixed linear map ``rgb_k = mean of F_c over channels c = k mod 3``,
which keeps colours in ``[0, 1]`` and lets a linear decoder reproduce them
exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .decoder import DecoderParams, decode
from .errors import DomainError
from .volume_renderer import SamplingSpec, render_feature_map

DEFAULT_SOFTNESS = 0.05
MIN_REFERENCE_SAMPLES = 256
_FREQS = (0.5 * np.pi, np.pi)


def smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


@dataclass
class Primitive:
    shape: str
    center: tuple = (0.0, 0.0, 0.0)
    size: tuple = (0.5,)
    amplitude: float = 20.0
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        if self.shape not in ("sphere", "box", "torus"):
            raise DomainError(f"unknown primitive shape {self.shape!r}")
        if self.amplitude < 0:
            raise DomainError("primitive amplitude must be nonnegative")
        need = {"sphere": 1, "box": 3, "torus": 2}[self.shape]
        self.size = tuple(float(s) for s in np.atleast_1d(self.size))
        if len(self.size) != need or min(self.size) <= 0:
            raise DomainError(f"{self.shape} needs {need} positive size values, got {self.size}")
        self.rotation = np.asarray(self.rotation, dtype=np.float64)

    def sdf(self, x):
        p = (np.asarray(x, dtype=np.float64) - np.asarray(self.center)) @ self.rotation
        if self.shape == "sphere":
            return np.linalg.norm(p, axis=-1) - self.size[0]
        if self.shape == "box":
            q = np.abs(p) - np.asarray(self.size)
            outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
            return outside + np.minimum(q.max(axis=-1), 0.0)
        major, minor = self.size
        ring = np.hypot(p[..., 0], p[..., 1]) - major
        return np.hypot(ring, p[..., 2]) - minor


@dataclass
class SceneOracle:
    primitives: list
    channels: int = 16
    softness: float = DEFAULT_SOFTNESS

    def __post_init__(self):
        if self.softness <= 0:
            raise DomainError("softness must be positive")
        if self.channels < 1:
            raise DomainError("channels must be positive")

    def occupancy(self, x) -> np.ndarray:
        """``(..., K)`` soft occupancy of each primitive."""
        x = np.asarray(x, dtype=np.float64)
        if not self.primitives:
            return np.zeros(x.shape[:-1] + (0,))
        return np.stack([smoothstep(-p.sdf(x) / self.softness) for p in self.primitives], axis=-1)

    def contains(self, points):
        return np.ones(np.asarray(points).shape[:-1], dtype=bool)

    def density(self, x):
        amps = np.array([p.amplitude for p in self.primitives])
        return self.occupancy(x) @ amps if self.primitives else np.zeros(np.asarray(x).shape[:-1])

    def basis(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        cols = []
        for a in range(3):
            for freq in _FREQS:
                cols.append(np.sin(freq * x[..., a]))
                cols.append(np.cos(freq * x[..., a]))
        return np.stack(cols, axis=-1)

    def offsets(self) -> np.ndarray:
        c = np.arange(self.channels)
        return np.array([0.1 * np.cos(1.3 * c + 2.1 * k) for k in range(len(self.primitives))]).reshape(
            -1, self.channels
        )

    def feature(self, x):
        phi = self.basis(x)
        c = np.arange(self.channels)
        out = 0.5 + 0.25 * phi[..., c % 12] + 0.15 * phi[..., (5 * c + 3) % 12]
        if self.primitives:
            out = out + self.occupancy(x) @ self.offsets()
        return out

    def color_matrix(self) -> np.ndarray:
        a = np.zeros((3, self.channels))
        for k in range(3):
            idx = np.arange(k, self.channels, 3)
            if idx.size:
                a[k, idx] = 1.0 / idx.size
        return a

    def color(self, x):
        return self.feature(x) @ self.color_matrix().T


def oracle_density(scene: SceneOracle, x):
    return scene.density(x)


def oracle_feature(scene: SceneOracle, x):
    return scene.feature(x)


def sphere_scene(channels=16, radius=0.5, amplitude=20.0, softness=DEFAULT_SOFTNESS) -> SceneOracle:
    return SceneOracle([Primitive("sphere", size=(radius,), amplitude=amplitude)], channels, softness)


def reference_render(scene: SceneOracle, camera, dense_n=1024, near=1.0, far=4.0, background=(1.0, 1.0, 1.0)):
    """Ground-truth feature map and RGB image by dense quadrature of the analytic fields."""
    if dense_n < MIN_REFERENCE_SAMPLES:
        raise DomainError(f"reference render needs at least {MIN_REFERENCE_SAMPLES} samples per ray")
    fmap = render_feature_map(scene, camera, SamplingSpec(dense_n, near, far))
    rgb = decode(fmap, DecoderParams(scene.color_matrix(), np.zeros(3), background))
    return fmap, rgb

