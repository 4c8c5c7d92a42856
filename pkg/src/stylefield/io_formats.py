"""Binary checkpoint / tensor formats, PPM images and the JSON config reader.

SRFG checkpoint (little-endian)::

    b"SRFG" | u32 version=1 | section*
    section = u32 tag | u64 length | payload[length]

    1 geometry        u32 x3 resolution, f32 x3 bbox_min, f32 x3 bbox_max
    2 feature factors u32 R, u32 C, then per axis (x, y, z): line R*n_a f32,
                      plane R*n_b*n_c f32
    3 density factors same layout as 2 with C = 1
    4 basis matrix    u32 rows, u32 cols, rows*cols f32
    5 norm state      f32 x C running mean, f32 x C running var, f32 momentum,
                      f32 epsilon
    6 attention       u32 C', u32 C, then W_q, W_k, W_v (C'*C f32 each)
    7 DST conv        u32 rows, u32 cols, rows*cols f32
    8 decoder         u32 C, weight 3*C f32, bias 3 f32, background 3 f32
    9 reserved        opaque bytes, preserved verbatim

Sections are written in tag order; unknown tags are skipped on load and noted
in ``Checkpoint.warnings``. Arrays are stored as f32 and loaded back as f64,
so save -> load -> save reproduces the file byte for byte.

SRFT tensor: ``b"SRFT" | u32 version=1 | u32 ndim | u32 dims[ndim] | f32 data``
(row-major, last axis fastest).
"""

from __future__ import annotations

import copy
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from .decoder import DecoderParams
from .errors import (
    BadMagicError,
    BadVersionError,
    ConfigError,
    CorruptValueError,
    DimensionMismatchError,
    FormatError,
    StyleFieldError,
    TruncatedError,
)
from .sict import AttentionParams, VolumeAdaptiveIN
from .style_transform import DstParams
from .tensor_grid import PLANE_AXES, GridGeometry, VMDensityField, VMFeatureField

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"SRFG"
TENSOR_MAGIC = b"SRFT"
VERSION = 1

TAG_GEOMETRY = 1
TAG_FEATURE = 2
TAG_DENSITY = 3
TAG_BASIS = 4
TAG_NORM = 5
TAG_ATTENTION = 6
TAG_DST = 7
TAG_DECODER = 8
TAG_RESERVED = 9

_F32 = np.dtype("<f4")


@dataclass
class Checkpoint:
    geometry: Optional[GridGeometry] = None
    feature_field: Optional[VMFeatureField] = None
    density_field: Optional[VMDensityField] = None
    norm: Optional[VolumeAdaptiveIN] = None
    attention: Optional[AttentionParams] = None
    dst: Optional[DstParams] = None
    decoder: Optional[DecoderParams] = None
    reserved: Optional[bytes] = None
    warnings: list = field(default_factory=list)


# --- encoding -------------------------------------------------------------------


def _f32(*arrays) -> bytes:
    return b"".join(np.ascontiguousarray(a, dtype=_F32).tobytes() for a in arrays)


def _u32(*values) -> bytes:
    return struct.pack(f"<{len(values)}I", *values)


def _factor_payload(f) -> bytes:
    channels = f.channels if isinstance(f, VMFeatureField) else 1
    parts = [_u32(f.rank, channels)]
    for a in range(3):
        parts.append(_f32(f.lines[a], f.planes[a]))
    return b"".join(parts)


def _matrix_payload(m) -> bytes:
    m = np.asarray(m)
    return _u32(*m.shape) + _f32(m)


def checkpoint_bytes(ckpt: Checkpoint) -> bytes:
    sections = []
    geometry = ckpt.geometry
    if geometry is None:
        for f in (ckpt.feature_field, ckpt.density_field):
            if f is not None:
                geometry = f.geometry
                break
    if geometry is not None:
        sections.append((TAG_GEOMETRY, _u32(*geometry.resolution) + _f32(geometry.bbox_min, geometry.bbox_max)))
    if ckpt.feature_field is not None:
        sections.append((TAG_FEATURE, _factor_payload(ckpt.feature_field)))
    if ckpt.density_field is not None:
        sections.append((TAG_DENSITY, _factor_payload(ckpt.density_field)))
    if ckpt.feature_field is not None:
        sections.append((TAG_BASIS, _matrix_payload(ckpt.feature_field.basis)))
    if ckpt.norm is not None:
        n = ckpt.norm
        sections.append((TAG_NORM, _f32(n.running_mean, n.running_var, [n.momentum, n.epsilon])))
    if ckpt.attention is not None:
        at = ckpt.attention
        sections.append((TAG_ATTENTION, _u32(*at.w_q.shape) + _f32(at.w_q, at.w_k, at.w_v)))
    if ckpt.dst is not None:
        sections.append((TAG_DST, _matrix_payload(ckpt.dst.conv_matrix)))
    if ckpt.decoder is not None:
        d = ckpt.decoder
        sections.append((TAG_DECODER, _u32(d.channels) + _f32(d.weight, d.bias, d.background)))
    if ckpt.reserved is not None:
        sections.append((TAG_RESERVED, bytes(ckpt.reserved)))
    out = [CHECKPOINT_MAGIC, _u32(VERSION)]
    for tag, payload in sections:
        out.append(struct.pack("<IQ", tag, len(payload)))
        out.append(payload)
    return b"".join(out)


def save_checkpoint(path, ckpt: Checkpoint):
    Path(path).write_bytes(checkpoint_bytes(ckpt))


# --- decoding -------------------------------------------------------------------


class _Reader:
    def __init__(self, data: bytes, tag):
        self.data = data
        self.pos = 0
        self.tag = tag

    @property
    def remaining(self) -> int:
        return len(self.data) - self.pos

    def take(self, n: int) -> bytes:
        if n < 0 or n > self.remaining:
            raise TruncatedError(f"section {self.tag}: payload ends early", tag=self.tag)
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self, count=1):
        vals = struct.unpack(f"<{count}I", self.take(4 * count))
        return vals[0] if count == 1 else vals

    def f32(self, shape):
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        if 4 * count > self.remaining:
            raise DimensionMismatchError(
                f"section {self.tag}: declared dimensions need {4 * count} bytes, {self.remaining} left"
            )
        arr = np.frombuffer(self.take(4 * count), dtype=_F32).astype(np.float64).reshape(shape)
        if not np.all(np.isfinite(arr)):
            raise CorruptValueError(f"section {self.tag}: non-finite value")
        return arr

    def done(self):
        if self.remaining:
            raise DimensionMismatchError(f"section {self.tag}: {self.remaining} unexpected trailing bytes")


def _read_factors(r: _Reader, geometry: GridGeometry, expect_c1: bool):
    rank, channels = r.u32(2)
    if rank < 1:
        raise CorruptValueError(f"section {r.tag}: rank must be positive")
    if expect_c1 and channels != 1:
        raise DimensionMismatchError(f"section {r.tag}: density factors must have C = 1, got {channels}")
    res = geometry.resolution
    per_rank = sum(res) + sum(res[b] * res[c] for b, c in PLANE_AXES)
    if 4 * rank * per_rank != r.remaining:
        raise DimensionMismatchError(
            f"section {r.tag}: rank {rank} at resolution {res} needs {4 * rank * per_rank} bytes, got {r.remaining}"
        )
    lines, planes = [], []
    for a in range(3):
        b, c = PLANE_AXES[a]
        lines.append(r.f32((rank, res[a])))
        planes.append(r.f32((rank, res[b], res[c])))
    r.done()
    return lines, planes, channels


def _read_matrix(r: _Reader):
    rows, cols = r.u32(2)
    m = r.f32((rows, cols))
    r.done()
    return m


def _split_sections(data: bytes, warnings: list):
    if len(data) < 8:
        raise TruncatedError("file shorter than the header")
    if data[:4] != CHECKPOINT_MAGIC:
        raise BadMagicError(f"bad magic {data[:4]!r}, expected {CHECKPOINT_MAGIC!r}")
    version = struct.unpack("<I", data[4:8])[0]
    if version != VERSION:
        raise BadVersionError(f"unsupported checkpoint version {version}")
    pos = 8
    sections = {}
    while pos < len(data):
        if len(data) - pos < 12:
            raise TruncatedError(f"truncated section header at byte {pos}")
        tag, length = struct.unpack("<IQ", data[pos : pos + 12])
        pos += 12
        if length > len(data) - pos:
            raise TruncatedError(f"section {tag} declares {length} bytes, only {len(data) - pos} remain", tag=tag)
        payload = data[pos : pos + length]
        pos += length
        if not 1 <= tag <= TAG_RESERVED:
            warnings.append(f"skipped unknown section tag {tag} ({length} bytes)")
            log.warning("checkpoint: skipped unknown section tag %d", tag)
            continue
        if tag in sections:
            raise CorruptValueError(f"duplicate section {tag}")
        sections[tag] = payload
    return sections


def _parse_checkpoint(data: bytes) -> Checkpoint:
    ckpt = Checkpoint()
    sections = _split_sections(data, ckpt.warnings)

    if TAG_GEOMETRY in sections:
        r = _Reader(sections[TAG_GEOMETRY], TAG_GEOMETRY)
        res = r.u32(3)
        lo = r.f32((3,))
        hi = r.f32((3,))
        r.done()
        try:
            ckpt.geometry = GridGeometry(res, tuple(lo), tuple(hi))
        except StyleFieldError as exc:
            raise CorruptValueError(f"section {TAG_GEOMETRY}: {exc}") from exc

    needs_geometry = [t for t in (TAG_FEATURE, TAG_DENSITY) if t in sections]
    if needs_geometry and ckpt.geometry is None:
        raise DimensionMismatchError(f"section {needs_geometry[0]} present without geometry section")

    if TAG_DENSITY in sections:
        lines, planes, _ = _read_factors(_Reader(sections[TAG_DENSITY], TAG_DENSITY), ckpt.geometry, True)
        ckpt.density_field = VMDensityField(ckpt.geometry, lines, planes)

    if TAG_FEATURE in sections:
        lines, planes, channels = _read_factors(_Reader(sections[TAG_FEATURE], TAG_FEATURE), ckpt.geometry, False)
        if TAG_BASIS not in sections:
            raise DimensionMismatchError("feature factors present without basis section")
        basis = _read_matrix(_Reader(sections[TAG_BASIS], TAG_BASIS))
        if basis.shape != (channels, 3 * lines[0].shape[0]):
            raise DimensionMismatchError(
                f"section {TAG_BASIS}: basis {basis.shape} does not fit C={channels}, R={lines[0].shape[0]}"
            )
        ckpt.feature_field = VMFeatureField(ckpt.geometry, lines, planes, basis=basis)
    elif TAG_BASIS in sections:
        raise DimensionMismatchError("basis section present without feature factors")

    if TAG_NORM in sections:
        payload = sections[TAG_NORM]
        if len(payload) < 16 or (len(payload) - 8) % 8:
            raise DimensionMismatchError(f"section {TAG_NORM}: length {len(payload)} is not 8*C + 8")
        r = _Reader(payload, TAG_NORM)
        c = (len(payload) - 8) // 8
        mean, var, scalars = r.f32((c,)), r.f32((c,)), r.f32((2,))
        r.done()
        try:
            ckpt.norm = VolumeAdaptiveIN(mean, var, float(scalars[0]), float(scalars[1]), "eval")
        except StyleFieldError as exc:
            raise CorruptValueError(f"section {TAG_NORM}: {exc}") from exc

    if TAG_ATTENTION in sections:
        r = _Reader(sections[TAG_ATTENTION], TAG_ATTENTION)
        rows, cols = r.u32(2)
        if 12 * rows * cols != r.remaining:
            raise DimensionMismatchError(f"section {TAG_ATTENTION}: {rows}x{cols} needs {12 * rows * cols} bytes")
        mats = [r.f32((rows, cols)) for _ in range(3)]
        r.done()
        try:
            ckpt.attention = AttentionParams(*mats)
        except StyleFieldError as exc:
            raise CorruptValueError(f"section {TAG_ATTENTION}: {exc}") from exc

    if TAG_DST in sections:
        ckpt.dst = DstParams(_read_matrix(_Reader(sections[TAG_DST], TAG_DST)))

    if TAG_DECODER in sections:
        r = _Reader(sections[TAG_DECODER], TAG_DECODER)
        c = r.u32()
        if 4 * (3 * c + 6) != r.remaining:
            raise DimensionMismatchError(f"section {TAG_DECODER}: C={c} needs {4 * (3 * c + 6)} bytes")
        weight, bias, bg = r.f32((3, c)), r.f32((3,)), r.f32((3,))
        r.done()
        ckpt.decoder = DecoderParams(weight, bias, bg)

    if TAG_RESERVED in sections:
        ckpt.reserved = sections[TAG_RESERVED]
    return ckpt


def checkpoint_from_bytes(data: bytes) -> Checkpoint:
    """Parse checkpoint bytes; every malformed input raises a :class:`FormatError`."""
    try:
        return _parse_checkpoint(bytes(data))
    except FormatError:
        raise
    except (StyleFieldError, struct.error, ValueError, MemoryError) as exc:
        raise CorruptValueError(f"malformed checkpoint: {exc}") from exc


def load_checkpoint(path) -> Checkpoint:
    return checkpoint_from_bytes(Path(path).read_bytes())


# --- tensors --------------------------------------------------------------------


def tensor_bytes(arr) -> bytes:
    arr = np.asarray(arr)
    return TENSOR_MAGIC + _u32(VERSION, arr.ndim, *arr.shape) + _f32(arr)


def tensor_from_bytes(data: bytes) -> np.ndarray:
    data = bytes(data)
    if len(data) < 12:
        raise TruncatedError("tensor file shorter than the header")
    if data[:4] != TENSOR_MAGIC:
        raise BadMagicError(f"bad magic {data[:4]!r}, expected {TENSOR_MAGIC!r}")
    version, ndim = struct.unpack("<2I", data[4:12])
    if version != VERSION:
        raise BadVersionError(f"unsupported tensor version {version}")
    if 12 + 4 * ndim > len(data):
        raise TruncatedError(f"tensor header declares {ndim} dims but the file ends early")
    dims = struct.unpack(f"<{ndim}I", data[12 : 12 + 4 * ndim])
    payload = len(data) - 12 - 4 * ndim
    need = 4 * int(np.prod(dims, dtype=object)) if dims else 4
    if payload < need:
        raise TruncatedError(f"tensor payload has {payload} bytes, dims {dims} need {need}")
    if payload > need:
        raise DimensionMismatchError(f"tensor payload has {payload - need} trailing bytes")
    arr = np.frombuffer(data, dtype=_F32, offset=12 + 4 * ndim).astype(np.float64)
    return arr.reshape(dims)


def save_tensor(path, arr):
    Path(path).write_bytes(tensor_bytes(arr))


def load_tensor(path) -> np.ndarray:
    return tensor_from_bytes(Path(path).read_bytes())


# --- PPM ------------------------------------------------------------------------


def to_bytes8(img) -> np.ndarray:
    """Quantize ``[0, 1]`` floats as ``floor(clamp(x) * 255 + 0.5)``."""
    img = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    return np.floor(img * 255.0 + 0.5).astype(np.uint8)


def ppm_bytes(img) -> bytes:
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise FormatError(f"PPM needs an (H, W, 3) image, got {img.shape}")
    h, w, _ = img.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + to_bytes8(img).tobytes()


def write_ppm(path, img):
    Path(path).write_bytes(ppm_bytes(img))


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise TruncatedError("PPM header ends early")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace byte before the raster
    if tokens[0] != b"P6":
        raise BadMagicError(f"not a binary PPM (magic {tokens[0]!r})")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise CorruptValueError(f"bad PPM header: {exc}") from exc
    if maxval != 255:
        raise CorruptValueError(f"only maxval 255 is supported, got {maxval}")
    raster = data[pos : pos + 3 * w * h]
    if len(raster) != 3 * w * h:
        raise TruncatedError("PPM raster ends early")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w, 3).astype(np.float64) / 255.0


# --- configuration ----------------------------------------------------------------

_VEC3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_RGB = {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}, "minItems": 3, "maxItems": 3}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


_STYLE = _obj(
    {
        "mode": {"enum": ["identity", "image", "features"]},
        "path": {"type": "string"},
    },
    ["mode"],
)

CONFIG_SCHEMA = _obj(
    {
        "scene": _obj(
            {
                "primitives": {
                    "type": "array",
                    "items": _obj(
                        {
                            "shape": {"enum": ["sphere", "box", "torus"]},
                            "center": _VEC3,
                            "size": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
                            "amplitude": {"type": "number", "minimum": 0},
                        },
                        ["shape"],
                    ),
                },
                "softness": {"type": "number", "exclusiveMinimum": 0},
            }
        ),
        "grid": _obj(
            {
                "resolution": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 3, "maxItems": 3},
                "rank": {"type": "integer", "minimum": 1},
                "channels": {"type": "integer", "minimum": 1},
                "bbox_min": _VEC3,
                "bbox_max": _VEC3,
            }
        ),
        "cameras": _obj(
            {
                "orbit": _obj(
                    {
                        "count": {"type": "integer", "minimum": 1},
                        "radius": {"type": "number", "exclusiveMinimum": 0},
                        "elevation_deg": {"type": "number"},
                        "width": {"type": "integer", "minimum": 1},
                        "height": {"type": "integer", "minimum": 1},
                        "focal": {"type": "number", "exclusiveMinimum": 0},
                    }
                ),
                "list": {
                    "type": "array",
                    "items": _obj(
                        {
                            "pose": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
                            "fx": {"type": "number"},
                            "fy": {"type": "number"},
                            "cx": {"type": "number"},
                            "cy": {"type": "number"},
                            "width": {"type": "integer", "minimum": 1},
                            "height": {"type": "integer", "minimum": 1},
                        },
                        ["pose", "fx", "fy", "cx", "cy", "width", "height"],
                    ),
                },
            }
        ),
        "sampling": _obj(
            {
                "samples_per_ray": {"type": "integer", "minimum": 1},
                "near": {"type": "number", "minimum": 0},
                "far": {"type": "number"},
                "stratified": {"type": "boolean"},
                "seed": {"type": "integer", "minimum": 0},
            }
        ),
        "training": _obj(
            {
                "learning_rate": {"type": "number", "exclusiveMinimum": 0},
                "iterations": {"type": "integer", "minimum": 0},
                "rays_per_batch": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "rgb_loss_weight": {"type": "number", "minimum": 0},
                "samples_per_ray": {"type": "integer", "minimum": 1},
                "reference_samples": {"type": "integer", "minimum": 256},
            }
        ),
        "sict": _obj(
            {
                "reduced_channels": {"type": "integer", "minimum": 1},
                "momentum": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "epsilon": {"type": "number", "exclusiveMinimum": 0},
                "calibration_points": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
            }
        ),
        "style": _STYLE,
        "styles": {"type": "array", "items": _STYLE, "minItems": 1},
        "masks": _obj(
            {
                "mode": {"enum": ["halves", "files"]},
                "paths": {"type": "array", "items": {"type": "string"}},
            },
            ["mode"],
        ),
        "checkpoint": {"type": "string"},
        "background": _RGB,
    }
)

DEFAULTS = {
    "scene": {
        "primitives": [{"shape": "sphere", "center": [0.0, 0.0, 0.0], "size": [0.5], "amplitude": 20.0}],
        "softness": 0.05,
    },
    "grid": {"resolution": [32, 32, 32], "rank": 8, "channels": 16, "bbox_min": [-1.0, -1.0, -1.0], "bbox_max": [1.0, 1.0, 1.0]},
    "cameras": {"orbit": {"count": 4, "radius": 2.5, "elevation_deg": 20.0, "width": 64, "height": 64, "focal": 80.0}},
    "sampling": {"samples_per_ray": 64, "near": 1.5, "far": 3.5, "stratified": False, "seed": 0},
    "training": {
        "learning_rate": 0.04,
        "iterations": 2000,
        "rays_per_batch": 256,
        "seed": 0,
        "rgb_loss_weight": 1.0,
        "samples_per_ray": 32,
        "reference_samples": 256,
    },
    "sict": {"reduced_channels": 8, "momentum": 0.1, "epsilon": 1e-5, "calibration_points": 1 << 16, "seed": 0},
    "style": {"mode": "identity"},
    "background": [1.0, 1.0, 1.0],
}


def _merge_defaults(cfg, defaults):
    out = copy.deepcopy(defaults)
    for key, value in cfg.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict) and key != "cameras":
            out[key] = _merge_defaults(value, out[key])
        else:
            out[key] = copy.deepcopy(value)
    if "cameras" in cfg and "orbit" in cfg["cameras"]:
        out["cameras"] = {"orbit": {**defaults["cameras"]["orbit"], **cfg["cameras"]["orbit"]}}
    return out


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(cfg: dict, overrides) -> dict:
    """Apply ``key.sub=value`` overrides; values are parsed as JSON when possible."""
    cfg = copy.deepcopy(cfg)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        parts = key.strip().split(".")
        node = cfg
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot set {key}: {p} is not an object", path=key)
        node[parts[-1]] = _parse_value(value)
    return cfg


def validate_config(raw: dict, base_dir=None) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        if exc.validator == "additionalProperties":
            extra = sorted(set(exc.instance) - set(exc.schema.get("properties", {})))
            bad = ".".join(filter(None, [path if path != "<root>" else "", extra[0] if extra else ""]))
            raise ConfigError(f"unknown key {extra[0] if extra else '?'}", path=bad) from None
        raise ConfigError(exc.message, path=path) from None
    cfg = _merge_defaults(raw, DEFAULTS)
    s = cfg["sampling"]
    if not s["near"] < s["far"]:
        raise ConfigError(f"near ({s['near']}) must be < far ({s['far']})", path="sampling.far")
    g = cfg["grid"]
    if not all(a < b for a, b in zip(g["bbox_min"], g["bbox_max"])):
        raise ConfigError("bbox_min must be < bbox_max componentwise", path="grid.bbox_max")
    if cfg["sict"]["reduced_channels"] > g["channels"]:
        raise ConfigError("reduced_channels must not exceed grid.channels", path="sict.reduced_channels")
    for i, style in enumerate([cfg["style"], *cfg.get("styles", [])]):
        if style["mode"] != "identity" and "path" not in style:
            raise ConfigError(f"style mode {style['mode']!r} needs a path", path=f"styles.{i}" if i else "style")
    if base_dir is not None:
        base = Path(base_dir)
        for style in [cfg["style"], *cfg.get("styles", [])]:
            if "path" in style:
                style["path"] = str(base / style["path"])
        if "masks" in cfg and "paths" in cfg["masks"]:
            cfg["masks"]["paths"] = [str(base / p) for p in cfg["masks"]["paths"]]
        if "checkpoint" in cfg:
            cfg["checkpoint"] = str(base / cfg["checkpoint"])
    return cfg


def read_config(path, overrides=None) -> dict:
    """Read, override and validate a JSON configuration file.

    Returns a plain dict with every default filled in; relative paths inside
    it are resolved against the config file's directory.
    """
    path = Path(path)
    text = path.read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    raw = apply_overrides(raw, overrides)
    return validate_config(raw, base_dir=path.parent)
