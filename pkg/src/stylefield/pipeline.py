"""Builds scenes, cameras, models and stylized views from a validated config dict."""

from __future__ import annotations

import logging

import numpy as np

from .decoder import decode
from .errors import ConfigError, DomainError
from .io_formats import Checkpoint, load_tensor, read_ppm
from .scene_synth import Primitive, SceneOracle
from .sict import SICT, AttentionParams, VolumeAdaptiveIN, calibrate
from .style_transform import (
    DstParams,
    StyleStats,
    apply_dst,
    composite_styles,
    compute_style_stats,
    extract_style_features,
    interpolate_styles,
)
from .tensor_grid import GridGeometry
from .trainer import Stage1Config, fit_stage1
from .volume_renderer import Camera, GridScene, SamplingSpec, orbit_cameras, render_feature_map

log = logging.getLogger(__name__)


def build_scene(cfg) -> SceneOracle:
    s = cfg["scene"]
    prims = [
        Primitive(p["shape"], tuple(p.get("center", (0.0, 0.0, 0.0))), tuple(p.get("size", (0.5,))), p.get("amplitude", 20.0))
        for p in s["primitives"]
    ]
    return SceneOracle(prims, cfg["grid"]["channels"], s["softness"])


def build_geometry(cfg) -> GridGeometry:
    g = cfg["grid"]
    return GridGeometry(tuple(g["resolution"]), tuple(g["bbox_min"]), tuple(g["bbox_max"]))


def build_cameras(cfg) -> list:
    c = cfg["cameras"]
    if "list" in c:
        return [
            Camera(np.asarray(k["pose"], dtype=np.float64), k["fx"], k["fy"], k["cx"], k["cy"], k["width"], k["height"])
            for k in c["list"]
        ]
    o = c["orbit"]
    return orbit_cameras(o["count"], o["radius"], o["width"], o["height"], o["focal"], o["elevation_deg"])


def sampling_spec(cfg) -> SamplingSpec:
    s = cfg["sampling"]
    return SamplingSpec(s["samples_per_ray"], s["near"], s["far"], s["stratified"], s["seed"])


def stage1_config(cfg) -> Stage1Config:
    t = cfg["training"]
    s = cfg["sampling"]
    return Stage1Config(
        learning_rate=t["learning_rate"],
        iterations=t["iterations"],
        rays_per_batch=t["rays_per_batch"],
        seed=t["seed"],
        rgb_loss_weight=t["rgb_loss_weight"],
        samples_per_ray=t["samples_per_ray"],
        near=s["near"],
        far=s["far"],
        reference_samples=t["reference_samples"],
        background=tuple(cfg["background"]),
    )


def fit_model(cfg):
    """Stage-1 fit; returns ``(Checkpoint, FitResult)``."""
    result = fit_stage1(
        build_scene(cfg), build_cameras(cfg), stage1_config(cfg), build_geometry(cfg), rank=cfg["grid"]["rank"],
        channels=cfg["grid"]["channels"],
    )
    grid = result.scene
    reduced = cfg["sict"]["reduced_channels"]
    channels = cfg["grid"]["channels"]
    ckpt = Checkpoint(
        geometry=grid.feature_field.geometry,
        feature_field=grid.feature_field,
        density_field=grid.density_field,
        attention=AttentionParams.identity(reduced, channels),
        dst=DstParams.default(channels, reduced),
        decoder=result.decoder,
    )
    return ckpt, result


def require_model(ckpt: Checkpoint):
    if ckpt.feature_field is None or ckpt.density_field is None or ckpt.decoder is None:
        raise DomainError("checkpoint lacks fitted fields or decoder; run fit first")
    return GridScene(ckpt.density_field, ckpt.feature_field)


def calibrate_model(cfg, ckpt: Checkpoint) -> Checkpoint:
    scene = require_model(ckpt)
    s = cfg["sict"]
    state = VolumeAdaptiveIN.fresh(scene.channels, momentum=s["momentum"], epsilon=s["epsilon"])
    geo = scene.feature_field.geometry
    ckpt.norm = calibrate(state, scene, geo.lo, geo.hi, s["calibration_points"], s["seed"])
    if ckpt.attention is None:
        ckpt.attention = AttentionParams.identity(s["reduced_channels"], scene.channels)
    if ckpt.dst is None:
        ckpt.dst = DstParams.default(scene.channels, ckpt.attention.reduced)
    return ckpt


def render_views(cfg, ckpt: Checkpoint) -> list:
    """Decoded RGB images, one per camera."""
    scene = require_model(ckpt)
    spec = sampling_spec(cfg)
    return [decode(render_feature_map(scene, cam, spec), ckpt.decoder) for cam in build_cameras(cfg)]


def load_style(style_cfg, reduced: int):
    """:class:`StyleStats` for a style entry, or ``None`` for the identity style."""
    mode = style_cfg["mode"]
    if mode == "identity":
        return None
    if mode == "image":
        return compute_style_stats(extract_style_features(read_ppm(style_cfg["path"]), reduced))
    data = load_tensor(style_cfg["path"])
    if data.ndim != 3 or data.shape[2] != reduced:
        raise DomainError(f"style tensor must be (H, W, {reduced}), got {data.shape}")
    return compute_style_stats(data)


def stylized_maps(cfg, ckpt: Checkpoint, style_cfg) -> list:
    """Stylized ``C``-channel feature maps for every camera.

    The identity style runs no content transform and styles with ``T = I``,
    ``sigma = 1``, ``mu = 0`` and an identity ``C x C`` conv, so its maps equal
    the plain render bit for bit.
    """
    scene = require_model(ckpt)
    spec = sampling_spec(cfg)
    cams = build_cameras(cfg)
    channels = scene.channels
    if ckpt.attention is not None:
        reduced = ckpt.attention.reduced
    else:
        reduced = cfg["sict"]["reduced_channels"]
    stats = load_style(style_cfg, reduced)
    if stats is None:
        ident = StyleStats.identity(channels)
        conv = DstParams(np.eye(channels))
        return [apply_dst(render_feature_map(scene, cam, spec), ident, conv) for cam in cams]
    if ckpt.norm is None:
        log.info("checkpoint has no normalization statistics; calibrating now")
        calibrate_model(cfg, ckpt)
    transform = SICT(ckpt.norm, ckpt.attention)
    dst = ckpt.dst or DstParams.default(channels, reduced)
    return [apply_dst(render_feature_map(scene, cam, spec, transform), stats, dst) for cam in cams]


def style_list(cfg) -> list:
    styles = cfg.get("styles")
    if not styles:
        raise ConfigError("this command needs a 'styles' list", path="styles")
    return styles


def interpolated_views(cfg, ckpt, weights) -> list:
    styles = style_list(cfg)
    if len(weights) != len(styles):
        raise DomainError(f"{len(weights)} weights given for {len(styles)} styles")
    per_style = [stylized_maps(cfg, ckpt, s) for s in styles]
    out = []
    for k in range(len(per_style[0])):
        fmap = interpolate_styles([maps[k] for maps in per_style], weights)
        out.append(decode(fmap, ckpt.decoder))
    return out


def build_masks(cfg, height, width, count) -> list:
    m = cfg.get("masks", {"mode": "halves"})
    if m["mode"] == "halves":
        # vertical strips of (nearly) equal width, left to right
        edges = np.linspace(0, width, count + 1).round().astype(int)
        masks = []
        for k in range(count):
            mask = np.zeros((height, width))
            mask[:, edges[k] : edges[k + 1]] = 1.0
            masks.append(mask)
        return masks
    paths = m.get("paths", [])
    if len(paths) != count:
        raise ConfigError(f"{len(paths)} mask files for {count} styles", path="masks.paths")
    return [load_tensor(p) for p in paths]


def composited_views(cfg, ckpt) -> list:
    styles = style_list(cfg)
    per_style = [stylized_maps(cfg, ckpt, s) for s in styles]
    out = []
    for k in range(len(per_style[0])):
        maps = [m[k] for m in per_style]
        masks = build_masks(cfg, maps[0].height, maps[0].width, len(styles))
        out.append(decode(composite_styles(maps, masks), ckpt.decoder))
    return out
