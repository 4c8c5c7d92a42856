"""Ray generation, point sampling and feature-map volume rendering.

Cameras follow the OpenCV convention: the rotation block of the 3x4
world-from-camera pose has the camera's right (+x), down (+y) and viewing
(+z) axes as columns; pixel ``(u, v)`` is column ``u``, row ``v`` and its ray
passes through the pixel centre ``(u + 0.5, v + 0.5)``. Ray directions are unit
length, so sample depths and ``deltas`` are in world units.

Sampling along a ray splits ``[near, far]`` into ``N`` equal bins. Unstratified
samples sit at bin centres; stratified samples are drawn uniformly inside each
bin using a per-pixel random stream (see :func:`pixel_uniforms`). Each sample
owns the interval between the midpoints to its neighbours, the first interval
starting at ``near`` and the last ending at ``far``; ``deltas`` are the lengths
of those intervals and always sum to ``far - near``.

Random numbers come from SplitMix64 used as a counter-based generator::

    mix(z):  z += 0x9E3779B97F4A7C15
             z  = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
             z  = (z ^ (z >> 27)) * 0x94D049BB133111EB
             return z ^ (z >> 31)

    key(seed, u, v) = mix(seed ^ mix((v << 32) | u))
    draw k          = (mix(key + k * 0x9E3779B97F4A7C15) >> 11) * 2**-53

All arithmetic is modulo 2**64. Every pixel's stream depends only on the seed
and its coordinates, so stratified renders do not depend on chunking or thread
scheduling.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, ShapeError
from .tensor_grid import VMDensityField, VMFeatureField

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MUL1 = np.uint64(0xBF58476D1CE4E5B9)
_MUL2 = np.uint64(0x94D049BB133111EB)

# samples evaluated per chunk; rays per chunk = CHUNK_SAMPLES // N
CHUNK_SAMPLES = 1 << 17


def splitmix64(z) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = np.asarray(z, dtype=np.uint64) + GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MUL1
        z = (z ^ (z >> np.uint64(27))) * _MUL2
        return z ^ (z >> np.uint64(31))


def pixel_key(seed: int, u, v) -> np.ndarray:
    u = np.asarray(u, dtype=np.uint64)
    v = np.asarray(v, dtype=np.uint64)
    return splitmix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) ^ splitmix64((v << np.uint64(32)) | u))


def pixel_uniforms(seed: int, u, v, count: int) -> np.ndarray:
    """``(P, count)`` uniforms in ``[0, 1)`` for pixels ``(u, v)``."""
    key = pixel_key(seed, u, v).reshape(-1, 1)
    k = np.arange(count, dtype=np.uint64)[None, :]
    with np.errstate(over="ignore"):
        bits = splitmix64(key + k * GOLDEN) >> np.uint64(11)
    return bits.astype(np.float64) * 2.0**-53


def thread_count() -> int:
    try:
        n = int(os.environ.get("STYLERF_THREADS", "0"))
    except ValueError:
        n = 0
    return n if n > 0 else (os.cpu_count() or 1)


@dataclass(frozen=True)
class Camera:
    pose: np.ndarray
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        pose = np.asarray(self.pose, dtype=np.float64)
        if pose.shape != (3, 4):
            raise ShapeError(f"pose must be 3x4, got {pose.shape}")
        rot = pose[:, :3]
        if not np.allclose(rot.T @ rot, np.eye(3), atol=1e-5):
            raise DomainError("pose rotation block is not orthonormal")
        if self.fx <= 0 or self.fy <= 0:
            raise DomainError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise DomainError("image size must be positive")
        object.__setattr__(self, "pose", pose)

    @classmethod
    def look_at(cls, eye, target, width, height, focal, up=(0.0, 0.0, 1.0)):
        eye = np.asarray(eye, dtype=np.float64)
        forward = np.asarray(target, dtype=np.float64) - eye
        forward /= np.linalg.norm(forward)
        right = np.cross(forward, np.asarray(up, dtype=np.float64))
        if np.linalg.norm(right) < 1e-9:
            right = np.cross(forward, np.array([0.0, 1.0, 0.0]))
        right /= np.linalg.norm(right)
        down = np.cross(forward, right)
        pose = np.column_stack([right, down, forward, eye])
        return cls(pose, float(focal), float(focal), width / 2.0, height / 2.0, int(width), int(height))

    def rays(self, u, v):
        """Origins and unit directions for pixel columns ``u`` and rows ``v``."""
        u = np.asarray(u, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        d_cam = np.stack(
            [(u + 0.5 - self.cx) / self.fx, (v + 0.5 - self.cy) / self.fy, np.ones_like(u)], axis=-1
        )
        dirs = d_cam @ self.pose[:, :3].T
        dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
        origins = np.broadcast_to(self.pose[:, 3], dirs.shape)
        return origins, dirs


def orbit_cameras(count, radius, width, height, focal, elevation_deg=20.0, target=(0.0, 0.0, 0.0)):
    """Cameras evenly spaced in azimuth on a circle, all looking at ``target``."""
    elev = np.deg2rad(elevation_deg)
    cams = []
    for k in range(count):
        az = 2.0 * np.pi * k / count
        eye = np.asarray(target) + radius * np.array(
            [np.cos(elev) * np.cos(az), np.cos(elev) * np.sin(az), np.sin(elev)]
        )
        cams.append(Camera.look_at(eye, target, width, height, focal))
    return cams


@dataclass(frozen=True)
class SamplingSpec:
    samples_per_ray: int = 64
    near: float = 0.0
    far: float = 1.0
    stratified: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.samples_per_ray < 1:
            raise DomainError("samples_per_ray must be >= 1")
        if self.near < 0:
            raise DomainError("near must be >= 0")
        if not self.near < self.far:
            raise DomainError(f"near ({self.near}) must be < far ({self.far})")


@dataclass
class PointBatch:
    positions: np.ndarray
    depths: np.ndarray
    deltas: np.ndarray
    densities: np.ndarray
    features: np.ndarray
    valid: np.ndarray


@dataclass
class FeatureMap:
    data: np.ndarray
    ray_weight: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 3 or self.ray_weight.shape != self.data.shape[:2]:
            raise ShapeError(
                f"feature map data {self.data.shape} and ray weight {self.ray_weight.shape} disagree"
            )

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(eq=False)
class GridScene:
    """Factored density + feature volumes; samples outside the box are culled."""

    density_field: VMDensityField
    feature_field: VMFeatureField

    @property
    def channels(self) -> int:
        return self.feature_field.channels

    def contains(self, points):
        return self.feature_field.geometry.contains(points)

    def density(self, points):
        return self.density_field.query(points)

    def feature(self, points):
        return self.feature_field.query(points)


def compute_weights(densities, deltas):
    """Per-sample weights and their sum along the last axis.

    ``w_i = exp(-sum_{j<i} s_j) * (1 - exp(-s_i))`` with ``s = densities * deltas``.
    Works on a single ray ``(N,)`` or a batch ``(..., N)``.
    """
    densities = np.asarray(densities, dtype=np.float64)
    deltas = np.asarray(deltas, dtype=np.float64)
    if np.any(densities < 0) or np.any(deltas < 0):
        raise DomainError("densities and deltas must be nonnegative")
    s = densities * deltas
    cum = np.cumsum(s, axis=-1)
    transmittance = np.exp(-(cum - s))
    weights = transmittance * -np.expm1(-s)
    ray_weight = weights[..., 0].copy()
    for i in range(1, weights.shape[-1]):
        ray_weight += weights[..., i]
    return weights, ray_weight


def sample_depths(spec: SamplingSpec, u, v):
    """Depths and interval lengths, each ``(P, N)``."""
    u = np.atleast_1d(np.asarray(u))
    n = spec.samples_per_ray
    width = (spec.far - spec.near) / n
    if spec.stratified:
        jitter = pixel_uniforms(spec.seed, u, np.atleast_1d(np.asarray(v)), n)
    else:
        jitter = np.full((u.size, n), 0.5)
    depths = spec.near + (np.arange(n)[None, :] + jitter) * width
    edges = np.empty((u.size, n + 1))
    edges[:, 0] = spec.near
    edges[:, -1] = spec.far
    edges[:, 1:-1] = 0.5 * (depths[:, 1:] + depths[:, :-1])
    return depths, np.diff(edges, axis=1)


def _query(scene, points, transform):
    """Densities ``(M,)`` and (optionally transformed) features for valid points."""
    valid = scene.contains(points)
    m = points.shape[0]
    densities = np.zeros(m)
    pts = points[valid]
    densities[valid] = scene.density(pts)
    feats = scene.feature(pts)
    if transform is not None:
        feats = np.asarray(transform(feats), dtype=np.float64)
    features = np.zeros((m, feats.shape[1]))
    features[valid] = feats
    return densities, features, valid


def sample_ray(camera: Camera, pixel, spec: SamplingSpec, scene) -> PointBatch:
    u, v = pixel
    if not (0 <= u < camera.width and 0 <= v < camera.height):
        raise DomainError(f"pixel {pixel} outside {camera.width}x{camera.height} image")
    origin, direction = camera.rays(np.array([u]), np.array([v]))
    depths, deltas = sample_depths(spec, np.array([u]), np.array([v]))
    positions = origin[:, None, :] + depths[..., None] * direction[:, None, :]
    dens, feats, valid = _query(scene, positions.reshape(-1, 3), None)
    return PointBatch(positions[0], depths[0], deltas[0], dens, feats, valid)


def integrate(weights: np.ndarray, features: np.ndarray) -> np.ndarray:
    """``sum_i w_i F_i`` for ``weights (P, N)`` and ``features (P, N, C)``."""
    out = weights[:, 0:1] * features[:, 0, :]
    for i in range(1, weights.shape[1]):
        out += weights[:, i : i + 1] * features[:, i, :]
    return out


def _render_rays(scene, camera, spec, u, v, transform):
    origins, dirs = camera.rays(u, v)
    depths, deltas = sample_depths(spec, u, v)
    p, n = depths.shape
    positions = origins[:, None, :] + depths[..., None] * dirs[:, None, :]
    dens, feats, _ = _query(scene, positions.reshape(-1, 3), transform)
    weights, ray_weight = compute_weights(dens.reshape(p, n), deltas)
    return integrate(weights, feats.reshape(p, n, -1)), ray_weight


def render_pixels(scene, camera, spec, u, v, per_point_transform: Optional[Callable] = None):
    """Render an arbitrary pixel list; returns ``(features (P, C), ray_weight (P,))``."""
    u = np.asarray(u).ravel()
    v = np.asarray(v).ravel()
    step = max(1, CHUNK_SAMPLES // spec.samples_per_ray)
    starts = list(range(0, u.size, step))

    def job(s):
        return _render_rays(scene, camera, spec, u[s : s + step], v[s : s + step], per_point_transform)

    workers = min(thread_count(), len(starts))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(job, starts))
    else:
        parts = [job(s) for s in starts]
    return np.concatenate([f for f, _ in parts]), np.concatenate([w for _, w in parts])


def render_feature_map(scene, camera: Camera, spec: SamplingSpec, per_point_transform=None) -> FeatureMap:
    """Full-resolution feature map plus per-pixel ray-weight sums."""
    vv, uu = np.mgrid[0 : camera.height, 0 : camera.width]
    feats, ray_weight = render_pixels(scene, camera, spec, uu.ravel(), vv.ravel(), per_point_transform)
    h, w = camera.height, camera.width
    return FeatureMap(feats.reshape(h, w, -1), ray_weight.reshape(h, w))
