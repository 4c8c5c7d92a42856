"""Stage-1 fitting of the factored grids with hand-written gradients.

The forward pass mirrors the renderer but keeps everything the adjoint needs
on a :class:`RenderTape`. With ``s_i = sigma_i * delta_i``, ``T_i`` the
transmittance before sample ``i`` and ``g_i = dL/dw_i``::

    dL/ds_j = g_j * T_j * exp(-s_j) - sum_{i > j} g_i * w_i
    dL/draw = dL/ds * delta * sigmoid(raw)

and feature gradients reach the factors through ``dL/dF_i = w_i * dL/dF_bar``.
Both are scattered into the line and plane factors with the same
interpolation weights used in the forward pass.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .decoder import DecoderParams, fit_decoder
from .errors import ContractError, DivergenceError, DomainError, ShapeError
from .scene_synth import reference_render
from .tensor_grid import (
    PLANE_AXES,
    GridGeometry,
    Stencil,
    VMDensityField,
    VMFeatureField,
    fog_density_field,
    random_feature_field,
    sigmoid,
    softplus,
)
from .volume_renderer import GridScene, SamplingSpec, render_feature_map, sample_depths

log = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e6


@dataclass
class Stage1Config:
    learning_rate: float = 0.04
    iterations: int = 2000
    rays_per_batch: int = 256
    seed: int = 0
    rgb_loss_weight: float = 1.0
    samples_per_ray: int = 32
    near: float = 1.5
    far: float = 3.5
    reference_samples: int = 256
    background: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise DomainError("learning_rate must be positive")
        if self.iterations < 0:
            raise DomainError("iterations must be nonnegative")
        if self.rays_per_batch < 1:
            raise DomainError("rays_per_batch must be positive")


@dataclass
class LossReport:
    feature_mse: float
    rgb_mse: float
    total: float
    iteration: int = 0


def _mse(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shapes differ: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2)) if a.size else 0.0


def grid_loss(pred_features, gt_features, pred_rgb, gt_rgb, weight=1.0, iteration=0) -> LossReport:
    f = _mse(pred_features, gt_features)
    c = _mse(pred_rgb, gt_rgb)
    return LossReport(f, c, f + weight * c, iteration)


# --- forward / backward -------------------------------------------------------


@dataclass
class RenderTape:
    """Forward state retained for :func:`render_backward`."""

    valid: np.ndarray
    line_ops: list
    plane_ops: list
    line_vals: list
    plane_vals: list
    deltas: np.ndarray
    raw: np.ndarray
    s: np.ndarray
    transmittance: np.ndarray
    weights: np.ndarray
    features: np.ndarray
    coef: np.ndarray
    feature_map: np.ndarray
    ray_weight: np.ndarray
    versions: tuple
    fields: tuple

    @property
    def n_rays(self) -> int:
        return self.weights.shape[0]


def _stacked(density_field, feature_field):
    """Per-axis line and flattened plane factors, density ranks first."""
    lines = [np.vstack([density_field.lines[a], feature_field.lines[a]]) for a in range(3)]
    planes = [
        np.vstack([density_field.planes[a].reshape(density_field.rank, -1), feature_field.planes[a].reshape(feature_field.rank, -1)])
        for a in range(3)
    ]
    return lines, planes


def render_forward(density_field: VMDensityField, feature_field: VMFeatureField, origins, dirs, depths, deltas):
    """Render ``P`` rays sampled at ``depths (P, N)``; returns a :class:`RenderTape`."""
    p, n = depths.shape
    positions = (origins[:, None, :] + depths[..., None] * dirs[:, None, :]).reshape(-1, 3)
    geometry = feature_field.geometry
    valid = geometry.contains(positions)
    stencil = Stencil(geometry, positions[valid])
    line_ops = [stencil.line_matrix(a) for a in range(3)]
    plane_ops = [stencil.plane_matrix(a) for a in range(3)]
    lines, planes = _stacked(density_field, feature_field)
    line_vals = [line_ops[a] @ lines[a].T for a in range(3)]
    plane_vals = [plane_ops[a] @ planes[a].T for a in range(3)]

    rd = density_field.rank
    prods = [line_vals[a] * plane_vals[a] for a in range(3)]
    raw_valid = sum(pr[:, :rd].sum(axis=1) for pr in prods)
    coef = np.concatenate([pr[:, rd:] for pr in prods], axis=1)

    raw = np.zeros(p * n)
    raw[valid] = raw_valid
    sigma = np.zeros(p * n)
    sigma[valid] = softplus(raw_valid)
    features = np.zeros((p * n, feature_field.channels))
    features[valid] = coef @ feature_field.basis.T

    s = sigma.reshape(p, n) * deltas
    cum = np.cumsum(s, axis=1)
    transmittance = np.exp(-(cum - s))
    weights = transmittance * -np.expm1(-s)
    feats = features.reshape(p, n, -1)
    fmap = np.einsum("pn,pnc->pc", weights, feats)
    return RenderTape(
        valid,
        line_ops,
        plane_ops,
        line_vals,
        plane_vals,
        deltas,
        raw,
        s,
        transmittance,
        weights,
        feats,
        coef,
        fmap,
        weights.sum(axis=1),
        (density_field.version, feature_field.version),
        (density_field, feature_field),
    )


@dataclass
class Gradients:
    density_lines: list
    density_planes: list
    feature_lines: list
    feature_planes: list
    basis: np.ndarray

    def groups(self):
        return {
            "feature_lines": self.feature_lines,
            "feature_planes": self.feature_planes,
            "basis": [self.basis],
            "density_lines": self.density_lines,
            "density_planes": self.density_planes,
        }


def render_backward(tape: RenderTape, grad_features, grad_ray_weight=None) -> Gradients:
    """Exact gradients of a loss on the rendered features and ray weights."""
    density_field, feature_field = tape.fields
    if tape.versions != (density_field.version, feature_field.version):
        raise ContractError("fields changed since the forward pass; rerun render_forward")
    grad_features = np.asarray(grad_features, dtype=np.float64)
    if grad_features.shape != tape.feature_map.shape:
        raise ShapeError(f"feature gradient {grad_features.shape}, expected {tape.feature_map.shape}")
    if grad_ray_weight is None:
        grad_ray_weight = np.zeros(tape.n_rays)

    g_w = np.einsum("pc,pnc->pn", grad_features, tape.features) + grad_ray_weight[:, None]
    g_wm = g_w * tape.weights
    later = g_wm.sum(axis=1, keepdims=True) - np.cumsum(g_wm, axis=1)
    g_s = g_w * tape.transmittance * np.exp(-tape.s) - later
    valid = tape.valid
    g_raw = (g_s * tape.deltas).ravel()[valid] * sigmoid(tape.raw[valid])

    g_feat = (tape.weights[..., None] * grad_features[:, None, :]).reshape(-1, feature_field.channels)[valid]
    g_basis = g_feat.T @ tape.coef
    g_coef = g_feat @ feature_field.basis

    rd, rf = density_field.rank, feature_field.rank
    res = feature_field.geometry.resolution
    d_lines, d_planes, f_lines, f_planes = [], [], [], []
    for a in range(3):
        # gradient w.r.t. each component product, density ranks first
        g_prod = np.hstack([np.repeat(g_raw[:, None], rd, axis=1), g_coef[:, a * rf : (a + 1) * rf]])
        g_line = (tape.line_ops[a].T @ (g_prod * tape.plane_vals[a])).T
        g_plane = (tape.plane_ops[a].T @ (g_prod * tape.line_vals[a])).T
        b, c = PLANE_AXES[a]
        d_lines.append(g_line[:rd])
        f_lines.append(g_line[rd:])
        d_planes.append(g_plane[:rd].reshape(rd, res[b], res[c]))
        f_planes.append(g_plane[rd:].reshape(rf, res[b], res[c]))
    return Gradients(d_lines, d_planes, f_lines, f_planes, g_basis)


def decode_forward(fmap, ray_weight, decoder: DecoderParams):
    inner = fmap @ decoder.weight.T + decoder.bias
    c1 = np.clip(inner, 0.0, 1.0)
    outer = c1 + (1.0 - ray_weight)[:, None] * decoder.background
    return np.clip(outer, 0.0, 1.0), (inner, outer)


def decode_backward(g_rgb, cache, decoder: DecoderParams):
    inner, outer = cache
    g_outer = g_rgb * ((outer > 0.0) & (outer < 1.0))
    g_inner = g_outer * ((inner > 0.0) & (inner < 1.0))
    return g_inner @ decoder.weight, -(g_outer @ decoder.background)


def batch_loss(density_field, feature_field, rays, gt_features, gt_rgb, decoder, rgb_weight):
    """Loss on a ray batch plus everything needed to differentiate it."""
    origins, dirs, depths, deltas = rays
    tape = render_forward(density_field, feature_field, origins, dirs, depths, deltas)
    rgb, cache = decode_forward(tape.feature_map, tape.ray_weight, decoder)
    report = grid_loss(tape.feature_map, gt_features, rgb, gt_rgb, rgb_weight)
    # descend on the summed squared error over the batch; the report stays an MSE
    g_fmap = 2.0 * (tape.feature_map - gt_features)
    g_rgb = rgb_weight * 2.0 * (rgb - gt_rgb)
    g_f2, g_wr = decode_backward(g_rgb, cache, decoder)
    return report, tape, g_fmap + g_f2, g_wr


def summed_loss(density_field, feature_field, rays, gt_features, gt_rgb, decoder, rgb_weight=1.0) -> float:
    """Objective that :func:`loss_and_grad` differentiates.

    ``sum (F - F_gt)^2 + rgb_weight * sum (rgb - rgb_gt)^2`` over the batch.
    """
    origins, dirs, depths, deltas = rays
    tape = render_forward(density_field, feature_field, origins, dirs, depths, deltas)
    rgb, _ = decode_forward(tape.feature_map, tape.ray_weight, decoder)
    return float(np.sum((tape.feature_map - gt_features) ** 2) + rgb_weight * np.sum((rgb - gt_rgb) ** 2))


def loss_and_grad(density_field, feature_field, rays, gt_features, gt_rgb, decoder, rgb_weight=1.0):
    report, tape, g_fmap, g_wr = batch_loss(density_field, feature_field, rays, gt_features, gt_rgb, decoder, rgb_weight)
    return report, render_backward(tape, g_fmap, g_wr)


def apply_gradients(density_field, feature_field, grads: Gradients, lr):
    for a in range(3):
        density_field.lines[a] -= lr * grads.density_lines[a]
        density_field.planes[a] -= lr * grads.density_planes[a]
        feature_field.lines[a] -= lr * grads.feature_lines[a]
        feature_field.planes[a] -= lr * grads.feature_planes[a]
    feature_field.basis -= lr * grads.basis
    density_field.touch()
    feature_field.touch()


# --- stage 1 ------------------------------------------------------------------


@dataclass
class FitResult:
    scene: GridScene
    decoder: DecoderParams
    curve: list
    initial_feature_mse: float
    final_feature_mse: float
    gt_maps: list = field(repr=False, default_factory=list)
    gt_rgb: list = field(repr=False, default_factory=list)
    seconds: float = 0.0


def camera_rays(cameras):
    origins, dirs, pix = [], [], []
    for k, cam in enumerate(cameras):
        vv, uu = np.mgrid[0 : cam.height, 0 : cam.width]
        o, d = cam.rays(uu.ravel(), vv.ravel())
        origins.append(np.array(o))
        dirs.append(d)
        pix.append(np.stack([np.full(uu.size, k), uu.ravel(), vv.ravel()], axis=1))
    return np.concatenate(origins), np.concatenate(dirs), np.concatenate(pix)


def full_feature_mse(density_field, feature_field, origins, dirs, depths, deltas, gt, chunk=4096):
    total = 0.0
    for s in range(0, origins.shape[0], chunk):
        sl = slice(s, s + chunk)
        tape = render_forward(density_field, feature_field, origins[sl], dirs[sl], depths[sl], deltas[sl])
        total += float(np.sum((tape.feature_map - gt[sl]) ** 2))
    return total / gt.size


def init_fields(geometry: GridGeometry, rank: int, channels: int, seed: int):
    feature = random_feature_field(geometry, rank, channels, seed=seed, scale=0.1)
    density = fog_density_field(geometry, rank, seed=seed + 1, raw_value=-1.0)
    return density, feature


def fit_stage1(scene, cameras, config: Stage1Config, geometry: GridGeometry, rank=8, channels=None, fields=None):
    """Fit density and feature grids to reference renders of ``scene``.

    Plain gradient descent on random ray batches drawn with a seeded generator;
    the decoder used for the RGB term during descent is the least-squares fit
    to the reference maps, and it is refitted to the trained maps at the end.
    """
    if len(cameras) < 2:
        raise DomainError("stage-1 fitting needs at least two cameras")
    start = time.perf_counter()
    channels = channels or scene.channels
    background = np.asarray(config.background, dtype=np.float64)
    gt = [reference_render(scene, cam, config.reference_samples, config.near, config.far, background) for cam in cameras]
    gt_maps = [m for m, _ in gt]
    gt_rgb = [r for _, r in gt]
    decoder = fit_decoder(gt_maps, gt_rgb, background)

    origins, dirs, _ = camera_rays(cameras)
    gt_feat = np.concatenate([m.data.reshape(-1, channels) for m in gt_maps])
    gt_col = np.concatenate([r.reshape(-1, 3) for r in gt_rgb])
    spec = SamplingSpec(config.samples_per_ray, config.near, config.far)
    depths, deltas = sample_depths(spec, np.zeros(origins.shape[0]), np.zeros(origins.shape[0]))

    density, feature = fields if fields is not None else init_fields(geometry, rank, channels, config.seed)
    initial = full_feature_mse(density, feature, origins, dirs, depths, deltas, gt_feat)

    rng = np.random.default_rng(config.seed)
    curve = []
    for it in range(config.iterations):
        idx = rng.integers(0, origins.shape[0], size=config.rays_per_batch)
        rays = (origins[idx], dirs[idx], depths[idx], deltas[idx])
        report, grads = loss_and_grad(density, feature, rays, gt_feat[idx], gt_col[idx], decoder, config.rgb_loss_weight)
        report.iteration = it
        if not np.isfinite(report.total) or report.total > DIVERGENCE_LIMIT:
            raise DivergenceError(f"loss {report.total} at iteration {it}; lower the learning rate")
        curve.append(report)
        apply_gradients(density, feature, grads, config.learning_rate)

    final = full_feature_mse(density, feature, origins, dirs, depths, deltas, gt_feat)
    grid = GridScene(density, feature)
    pred_maps = [render_feature_map(grid, cam, spec) for cam in cameras]
    try:
        decoder = fit_decoder(pred_maps, gt_rgb, background)
    except DomainError:
        log.warning("too few foreground pixels to refit the decoder; keeping the reference fit")
    seconds = time.perf_counter() - start
    log.info("stage 1: feature MSE %.3g -> %.3g in %.1fs", initial, final, seconds)
    return FitResult(grid, decoder, curve, initial, final, gt_maps, gt_rgb, seconds)


def write_loss_csv(path, curve):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration", "feature_mse", "rgb_mse", "total"])
        for r in curve:
            writer.writerow([r.iteration, repr(r.feature_mse), repr(r.rgb_mse), repr(r.total)])


# --- stage-2 metrics ------------------------------------------------------------


def stylization_metrics(stylized, content, style_stats, lam):
    """Content loss, style loss and their weighted sum (reported, never optimized).

    The style term compares the stylized features' global mean and standard
    deviation with the style's scalar statistics.
    """
    stylized = np.asarray(getattr(stylized, "data", stylized), dtype=np.float64)
    content = np.asarray(getattr(content, "data", content), dtype=np.float64)
    l_c = _mse(stylized, content)
    l_s = (float(stylized.mean()) - style_stats.mu) ** 2 + (float(stylized.std()) - style_stats.sigma) ** 2
    return l_c, l_s, l_c + lam * l_s
