"""Vector-matrix (VM) factored density and feature volumes.

Each field stores, for every axis ``a``, a line factor ``v_a`` of shape
``(R, n_a)`` and a plane factor ``M_a`` of shape ``(R, n_b, n_c)`` over the two
complementary axes. A point query evaluates ``3R`` component products
``v_a[r](x_a) * M_a[r](x_b, x_c)`` with linear / bilinear interpolation of the
factors. The feature field projects the ``3R`` coefficients through a basis
matrix ``B`` of shape ``(C, 3R)``; the density field sums them and applies a
softplus.

Grid nodes sit on the bounding box corners (``align_corners`` convention): node
``i`` along axis ``a`` lives at ``bbox_min[a] + i * (bbox_max[a] - bbox_min[a]) / (n_a - 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import NonFiniteInputError, OutOfDomainError, ResourceError, ShapeError

# complementary axes spanned by the plane factor paired with each line axis
PLANE_AXES = ((1, 2), (0, 2), (0, 1))

DEFAULT_DENSE_CAP = 1 << 26


@dataclass(frozen=True)
class GridGeometry:
    resolution: tuple[int, int, int]
    bbox_min: tuple[float, float, float] = (-1.0, -1.0, -1.0)
    bbox_max: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        res = tuple(int(n) for n in self.resolution)
        lo = tuple(float(v) for v in self.bbox_min)
        hi = tuple(float(v) for v in self.bbox_max)
        if len(res) != 3 or len(lo) != 3 or len(hi) != 3:
            raise ShapeError("geometry needs three axes")
        if min(res) < 2:
            raise ShapeError(f"resolution must be >= 2 per axis, got {res}")
        if not all(a < b for a, b in zip(lo, hi)):
            raise ShapeError(f"bbox_min must be < bbox_max componentwise, got {lo} / {hi}")
        object.__setattr__(self, "resolution", res)
        object.__setattr__(self, "bbox_min", lo)
        object.__setattr__(self, "bbox_max", hi)

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.bbox_min)

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.bbox_max)

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return np.all((points >= self.lo) & (points <= self.hi), axis=-1)

    def node_positions(self, axis: int) -> np.ndarray:
        return np.linspace(self.bbox_min[axis], self.bbox_max[axis], self.resolution[axis])

    def to_index(self, points: np.ndarray) -> np.ndarray:
        """Continuous grid coordinates in ``[0, n - 1]`` per axis."""
        scale = (np.asarray(self.resolution) - 1) / (self.hi - self.lo)
        return (points - self.lo) * scale


class Stencil:
    """Interpolation weights of a point set, shared by every factor lookup.

    Keeping the stencil around lets the trainer reuse the same indices for the
    forward pass and for scattering gradients back into the factors.
    """

    def __init__(self, geometry: GridGeometry, points: np.ndarray):
        t = geometry.to_index(points)
        self.geometry = geometry
        self.n_points = t.shape[0]
        self.i0 = []
        self.frac = []
        for a in range(3):
            n = geometry.resolution[a]
            i0 = np.clip(np.floor(t[:, a]).astype(np.intp), 0, n - 2)
            self.i0.append(i0)
            self.frac.append(t[:, a] - i0)

    def line_matrix(self, a: int) -> sparse.csr_matrix:
        """``(P, n_a)`` sparse interpolation operator along axis ``a``."""
        i0, f = self.i0[a], self.frac[a]
        cols = np.stack([i0, i0 + 1], axis=1).ravel()
        vals = np.stack([1.0 - f, f], axis=1).ravel()
        indptr = np.arange(0, 2 * self.n_points + 1, 2)
        return sparse.csr_matrix((vals, cols, indptr), shape=(self.n_points, self.geometry.resolution[a]))

    def plane_matrix(self, a: int) -> sparse.csr_matrix:
        """``(P, n_b * n_c)`` sparse bilinear operator on the plane paired with axis ``a``."""
        b, c = PLANE_AXES[a]
        nc = self.geometry.resolution[c]
        ib, fb = self.i0[b], self.frac[b]
        ic, fc = self.i0[c], self.frac[c]
        base = ib * nc + ic
        cols = np.stack([base, base + nc, base + 1, base + nc + 1], axis=1).ravel()
        vals = np.stack(
            [(1.0 - fb) * (1.0 - fc), fb * (1.0 - fc), (1.0 - fb) * fc, fb * fc], axis=1
        ).ravel()
        indptr = np.arange(0, 4 * self.n_points + 1, 4)
        shape = (self.n_points, self.geometry.resolution[b] * nc)
        return sparse.csr_matrix((vals, cols, indptr), shape=shape)

    def line(self, v: np.ndarray, a: int) -> np.ndarray:
        i0, f = self.i0[a], self.frac[a]
        return v[:, i0] * (1.0 - f) + v[:, i0 + 1] * f

    def plane(self, m: np.ndarray, a: int) -> np.ndarray:
        b, c = PLANE_AXES[a]
        ib, fb = self.i0[b], self.frac[b]
        ic, fc = self.i0[c], self.frac[c]
        return (
            m[:, ib, ic] * ((1.0 - fb) * (1.0 - fc))
            + m[:, ib + 1, ic] * (fb * (1.0 - fc))
            + m[:, ib, ic + 1] * ((1.0 - fb) * fc)
            + m[:, ib + 1, ic + 1] * (fb * fc)
        )


@dataclass(eq=False)
class VMField:
    """Shared factor storage for density and feature volumes."""

    geometry: GridGeometry
    lines: list[np.ndarray]
    planes: list[np.ndarray]
    version: int = field(default=0, compare=False)

    def __post_init__(self):
        self.lines = [np.asarray(v, dtype=np.float64) for v in self.lines]
        self.planes = [np.asarray(m, dtype=np.float64) for m in self.planes]
        if len(self.lines) != 3 or len(self.planes) != 3:
            raise ShapeError("expected three line and three plane factors")
        rank = self.lines[0].shape[0]
        if rank < 1:
            raise ShapeError("rank must be positive")
        res = self.geometry.resolution
        for a in range(3):
            b, c = PLANE_AXES[a]
            if self.lines[a].shape != (rank, res[a]):
                raise ShapeError(f"line factor {a} has shape {self.lines[a].shape}, want {(rank, res[a])}")
            if self.planes[a].shape != (rank, res[b], res[c]):
                raise ShapeError(
                    f"plane factor {a} has shape {self.planes[a].shape}, want {(rank, res[b], res[c])}"
                )

    @property
    def rank(self) -> int:
        return self.lines[0].shape[0]

    def factor_arrays(self) -> list[np.ndarray]:
        return [*self.lines, *self.planes]

    def param_count(self) -> int:
        return int(sum(arr.size for arr in self.factor_arrays()))

    def components(self, stencil: Stencil) -> np.ndarray:
        """``(P, 3R)`` component products, axis-major."""
        parts = [
            (stencil.line(self.lines[a], a) * stencil.plane(self.planes[a], a)).T
            for a in range(3)
        ]
        return np.concatenate(parts, axis=1)

    def dense_components(self) -> np.ndarray:
        """``(3R, n_x, n_y, n_z)`` outer-product expansion of every component."""
        x, y, z = self.lines
        mx, my, mz = self.planes
        return np.concatenate(
            [
                np.einsum("ri,rjk->rijk", x, mx),
                np.einsum("rj,rik->rijk", y, my),
                np.einsum("rk,rij->rijk", z, mz),
            ],
            axis=0,
        )

    def touch(self):
        """Mark the factors as modified so stale forward state is detectable."""
        self.version += 1


@dataclass(eq=False)
class VMFeatureField(VMField):
    basis: np.ndarray = None

    def __post_init__(self):
        super().__post_init__()
        if self.basis is None:
            raise ShapeError("feature field needs a basis matrix")
        self.basis = np.asarray(self.basis, dtype=np.float64)
        if self.basis.ndim != 2 or self.basis.shape[1] != 3 * self.rank:
            raise ShapeError(f"basis must be (C, {3 * self.rank}), got {self.basis.shape}")

    @property
    def channels(self) -> int:
        return self.basis.shape[0]

    def param_count(self) -> int:
        return super().param_count() + self.basis.size

    def project(self, coef: np.ndarray) -> np.ndarray:
        # Column-by-column accumulation keeps each output row independent of
        # how many rows are in the batch (BLAS kernels are not).
        out = coef[:, 0:1] * self.basis[:, 0]
        for k in range(1, coef.shape[1]):
            out += coef[:, k : k + 1] * self.basis[:, k]
        return out

    def query(self, points: np.ndarray) -> np.ndarray:
        return self.project(self.components(Stencil(self.geometry, points)))


@dataclass(eq=False)
class VMDensityField(VMField):
    def raw(self, stencil: Stencil) -> np.ndarray:
        comp = self.components(stencil)
        out = comp[:, 0].copy()
        for k in range(1, comp.shape[1]):
            out += comp[:, k]
        return out

    def query(self, points: np.ndarray) -> np.ndarray:
        return softplus(self.raw(Stencil(self.geometry, points)))


def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x)))


def _check_points(geometry: GridGeometry, x) -> np.ndarray:
    pts = np.asarray(x, dtype=np.float64)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[-1] != 3:
        raise ShapeError(f"points must have 3 coordinates, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise NonFiniteInputError("query point contains NaN or inf")
    if not np.all(geometry.contains(pts)):
        bad = pts[~geometry.contains(pts)][0]
        raise OutOfDomainError(f"point {bad.tolist()} lies outside the bounding box")
    return pts, single


def sample_feature(field: VMFeatureField, x) -> np.ndarray:
    """Feature vector(s) at ``x``: shape ``(C,)`` for one point, ``(P, C)`` for many."""
    pts, single = _check_points(field.geometry, x)
    out = field.query(pts)
    return out[0] if single else out


def sample_density(field: VMDensityField, x):
    """Softplus-activated density at ``x``."""
    pts, single = _check_points(field.geometry, x)
    out = field.query(pts)
    return float(out[0]) if single else out


def reconstruct_dense(field: VMField, cap: int = DEFAULT_DENSE_CAP) -> np.ndarray:
    """Expand the factors into an ``(n_x, n_y, n_z, C)`` array.

    Density fields return the raw (pre-softplus) value in a single channel.
    """
    nx, ny, nz = field.geometry.resolution
    channels = field.channels if isinstance(field, VMFeatureField) else 1
    if nx * ny * nz * max(channels, 3 * field.rank) > cap:
        raise ResourceError(f"dense reconstruction of {nx}x{ny}x{nz}x{channels} exceeds cap {cap}")
    comps = field.dense_components()
    if isinstance(field, VMFeatureField):
        return np.einsum("kijl,ck->ijlc", comps, field.basis)
    return comps.sum(axis=0)[..., None]


def dense_param_count(geometry: GridGeometry, channels: int) -> int:
    nx, ny, nz = geometry.resolution
    return nx * ny * nz * channels


def _random_factors(geometry, rank, rng, low, high):
    res = geometry.resolution
    lines = [rng.uniform(low, high, size=(rank, res[a])) for a in range(3)]
    planes = [
        rng.uniform(low, high, size=(rank, res[PLANE_AXES[a][0]], res[PLANE_AXES[a][1]]))
        for a in range(3)
    ]
    return lines, planes


def random_feature_field(geometry, rank, channels, seed=0, scale=0.1) -> VMFeatureField:
    rng = np.random.default_rng(seed)
    lines, planes = _random_factors(geometry, rank, rng, -scale, scale)
    basis = rng.uniform(-scale, scale, size=(channels, 3 * rank))
    return VMFeatureField(geometry, lines, planes, basis=basis)


def fog_density_field(geometry, rank, seed=0, raw_value=-1.0, noise=0.1) -> VMDensityField:
    """Density field whose raw value is ``raw_value`` everywhere, plus seeded noise.

    Lines start near one and planes near ``raw_value / 3R`` so every component
    receives a usable gradient from the first step on.
    """
    rng = np.random.default_rng(seed)
    res = geometry.resolution
    lines = [1.0 + rng.uniform(-noise, noise, size=(rank, res[a])) for a in range(3)]
    base = raw_value / (3 * rank)
    planes = [
        base + rng.uniform(-noise, noise, size=(rank, res[PLANE_AXES[a][0]], res[PLANE_AXES[a][1]])) * abs(base)
        for a in range(3)
    ]
    return VMDensityField(geometry, lines, planes)


def constant_density_field(geometry, raw_value: float) -> VMDensityField:
    res = geometry.resolution
    lines = [np.ones((1, res[a])) for a in range(3)]
    planes = [np.full((1, res[b], res[c]), raw_value / 3.0) for b, c in PLANE_AXES]
    return VMDensityField(geometry, lines, planes)


def constant_feature_field(geometry, values) -> VMFeatureField:
    """Rank-1 field equal to ``values`` (one entry per channel) everywhere."""
    values = np.asarray(values, dtype=np.float64)
    res = geometry.resolution
    lines = [np.ones((1, res[a])) for a in range(3)]
    planes = [np.ones((1, res[b], res[c])) for b, c in PLANE_AXES]
    basis = np.zeros((values.size, 3))
    basis[:, 0] = values
    return VMFeatureField(geometry, lines, planes, basis=basis)
