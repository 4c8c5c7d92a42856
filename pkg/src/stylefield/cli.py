"""Command-line entry point.

Exit codes: 0 success, 1 a verify property failed, 2 usage or config error,
3 domain error, 4 I/O or file-format error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline
from .decoder import decode
from .errors import ConfigError, FormatError, StyleFieldError
from .io_formats import Checkpoint, load_checkpoint, read_config, save_checkpoint, save_tensor, write_ppm
from .scene_synth import reference_render
from .trainer import write_loss_csv
from .verify_harness import format_reports, run_suite, write_reports_csv

EXIT_OK = 0
EXIT_VERIFY_FAIL = 1
EXIT_USAGE = 2
EXIT_DOMAIN = 3
EXIT_IO = 4

COMMANDS = ("fit", "calibrate", "render", "stylize", "interpolate", "composite", "verify", "synth", "info")

log = logging.getLogger("stylefield")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stylefield", description="Zero-shot style transfer on factored feature-grid radiance fields.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON configuration file")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("--seed", type=int, help="seed for sampling, training and calibration")
        p.add_argument("--samples", type=int, help="samples per ray for rendering")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="dotted-path config override")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "interpolate":
            p.add_argument("--weights", required=True, help="comma-separated weights, one per style")
    return parser


def _overrides(args) -> list:
    items = list(args.set)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be nonnegative")
        items += [f"sampling.seed={args.seed}", f"training.seed={args.seed}", f"sict.seed={args.seed}"]
    if args.samples is not None:
        items.append(f"sampling.samples_per_ray={args.samples}")
    return items


def _checkpoint_path(cfg, out: Path) -> Path:
    return Path(cfg["checkpoint"]) if "checkpoint" in cfg else out / "model.srfg"


def _write_images(out: Path, prefix: str, images) -> list:
    paths = []
    for k, img in enumerate(images):
        path = out / f"{prefix}_{k:03d}.ppm"
        write_ppm(path, img)
        paths.append(path)
    return paths


def _cmd_fit(cfg, out, args):
    ckpt, result = pipeline.fit_model(cfg)
    path = _checkpoint_path(cfg, out)
    save_checkpoint(path, ckpt)
    write_loss_csv(out / "loss.csv", result.curve)
    print(f"feature MSE {result.initial_feature_mse:.6g} -> {result.final_feature_mse:.6g} in {result.seconds:.1f}s")
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_calibrate(cfg, out, args):
    path = _checkpoint_path(cfg, out)
    ckpt = pipeline.calibrate_model(cfg, load_checkpoint(path))
    save_checkpoint(path, ckpt)
    print(f"calibrated {ckpt.norm.channels} channels; wrote {path}")
    return EXIT_OK


def _cmd_render(cfg, out, args):
    images = pipeline.render_views(cfg, load_checkpoint(_checkpoint_path(cfg, out)))
    for p in _write_images(out, "render", images):
        print(f"wrote {p}")
    return EXIT_OK


def _cmd_stylize(cfg, out, args):
    ckpt = load_checkpoint(_checkpoint_path(cfg, out))
    maps = pipeline.stylized_maps(cfg, ckpt, cfg["style"])
    images = [decode(m, ckpt.decoder) for m in maps]
    for p in _write_images(out, "stylize", images):
        print(f"wrote {p}")
    return EXIT_OK


def _cmd_interpolate(cfg, out, args):
    try:
        weights = [float(w) for w in args.weights.split(",")]
    except ValueError as exc:
        raise ConfigError(f"bad --weights {args.weights!r}") from exc
    ckpt = load_checkpoint(_checkpoint_path(cfg, out))
    for p in _write_images(out, "interpolate", pipeline.interpolated_views(cfg, ckpt, weights)):
        print(f"wrote {p}")
    return EXIT_OK


def _cmd_composite(cfg, out, args):
    ckpt = load_checkpoint(_checkpoint_path(cfg, out))
    for p in _write_images(out, "composite", pipeline.composited_views(cfg, ckpt)):
        print(f"wrote {p}")
    return EXIT_OK


def _cmd_verify(cfg, out, args):
    reports, diagnostic = run_suite(seed=cfg["sampling"]["seed"])
    text = format_reports(reports, diagnostic)
    (out / "verify_report.txt").write_text(text)
    write_reports_csv(out / "verify_report.csv", reports)
    sys.stdout.write(text)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_VERIFY_FAIL


def _cmd_synth(cfg, out, args):
    scene = pipeline.build_scene(cfg)
    t = cfg["training"]
    s = cfg["sampling"]
    cams = pipeline.build_cameras(cfg)
    for k, cam in enumerate(cams):
        fmap, rgb = reference_render(scene, cam, t["reference_samples"], s["near"], s["far"], cfg["background"])
        write_ppm(out / f"synth_{k:03d}.ppm", rgb)
        save_tensor(out / f"synth_{k:03d}_features.srft", fmap.data)
        save_tensor(out / f"synth_{k:03d}_weight.srft", fmap.ray_weight)
    print(f"wrote {len(cams)} views to {out}")
    return EXIT_OK


def describe_checkpoint(ckpt: Checkpoint) -> str:
    lines = []
    if ckpt.geometry is not None:
        g = ckpt.geometry
        lines.append(f"geometry: resolution={g.resolution} bbox_min={g.bbox_min} bbox_max={g.bbox_max}")
    if ckpt.density_field is not None:
        lines.append(f"density: rank={ckpt.density_field.rank} params={ckpt.density_field.param_count()}")
    if ckpt.feature_field is not None:
        f = ckpt.feature_field
        lines.append(f"features: rank={f.rank} channels={f.channels} params={f.param_count()}")
    if ckpt.norm is not None:
        lines.append(f"normalization: channels={ckpt.norm.channels} momentum={ckpt.norm.momentum:g} epsilon={ckpt.norm.epsilon:g}")
    if ckpt.attention is not None:
        lines.append(f"attention: C'={ckpt.attention.reduced} C={ckpt.attention.channels}")
    if ckpt.dst is not None:
        lines.append(f"dst conv: {ckpt.dst.conv_matrix.shape[0]}x{ckpt.dst.conv_matrix.shape[1]}")
    if ckpt.decoder is not None:
        lines.append(f"decoder: channels={ckpt.decoder.channels} background={ckpt.decoder.background.tolist()}")
    if ckpt.reserved is not None:
        lines.append(f"reserved: {len(ckpt.reserved)} bytes")
    lines.extend(f"warning: {w}" for w in ckpt.warnings)
    return "\n".join(lines) + "\n"


def _cmd_info(cfg, out, args):
    sys.stdout.write(describe_checkpoint(load_checkpoint(_checkpoint_path(cfg, out))))
    return EXIT_OK


HANDLERS = {name: globals()[f"_cmd_{name}"] for name in COMMANDS}


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
        cfg = read_config(args.config, _overrides(args))
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return HANDLERS[args.command](cfg, out, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (StyleFieldError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
