import numpy as np
import pytest
from conftest import trilinear

from stylefield.errors import NonFiniteInputError, OutOfDomainError, ResourceError, ShapeError
from stylefield.tensor_grid import (
    PLANE_AXES,
    GridGeometry,
    VMDensityField,
    VMFeatureField,
    constant_density_field,
    constant_feature_field,
    dense_param_count,
    random_feature_field,
    reconstruct_dense,
    sample_density,
    sample_feature,
    softplus,
)


def naive_dense(field):
    nx, ny, nz = field.geometry.resolution
    out = np.zeros((nx, ny, nz, field.channels))
    x, y, z = field.lines
    mx, my, mz = field.planes
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                for c in range(field.channels):
                    s = 0.0
                    for r in range(field.rank):
                        s += field.basis[c, r] * x[r, i] * mx[r, j, k]
                        s += field.basis[c, field.rank + r] * y[r, j] * my[r, i, k]
                        s += field.basis[c, 2 * field.rank + r] * z[r, k] * mz[r, i, j]
                    out[i, j, k, c] = s
    return out


def random_density(geometry, rank, rng):
    res = geometry.resolution
    lines = [rng.normal(size=(rank, res[a])) for a in range(3)]
    planes = [rng.normal(size=(rank, res[b], res[c])) for b, c in PLANE_AXES]
    return VMDensityField(geometry, lines, planes)


def test_constant_feature_field_anywhere(small_geometry, rng):
    c = np.array([0.3, -1.2, 2.5])
    field = constant_feature_field(small_geometry, c)
    pts = rng.uniform(small_geometry.lo, small_geometry.hi, size=(50, 3))
    np.testing.assert_allclose(sample_feature(field, pts), np.tile(c, (50, 1)), atol=1e-12)


def test_node_query_matches_dense(small_geometry):
    field = random_feature_field(small_geometry, 3, 5, seed=7, scale=1.0)
    dense = reconstruct_dense(field)
    for idx in [(0, 0, 0), (6, 5, 4), (3, 2, 1), (6, 0, 4)]:
        x = [small_geometry.node_positions(a)[idx[a]] for a in range(3)]
        np.testing.assert_allclose(sample_feature(field, x), dense[idx], atol=1e-6)


def test_random_point_matches_trilinear_dense(small_geometry, rng):
    field = random_feature_field(small_geometry, 4, 6, seed=3, scale=1.0)
    dense = naive_dense(field)
    for x in rng.uniform(small_geometry.lo, small_geometry.hi, size=(40, 3)):
        np.testing.assert_allclose(sample_feature(field, x), trilinear(dense, small_geometry, x), atol=1e-5)


def test_softplus_of_zero_field(small_geometry):
    field = constant_density_field(small_geometry, 0.0)
    assert sample_density(field, [0.1, 0.2, -0.3]) == pytest.approx(np.log(2.0), abs=1e-12)
    assert sample_density(field, [0.1, 0.2, -0.3]) == pytest.approx(0.6931, abs=1e-4)


def test_softplus_tail(small_geometry):
    field = constant_density_field(small_geometry, -40.0)
    assert sample_density(field, [0.0, 0.0, 0.0]) <= 1e-17
    assert sample_density(field, [0.0, 0.0, 0.0]) >= 0.0


def test_density_matches_dense_oracle(small_geometry, rng):
    field = random_density(small_geometry, 3, rng)
    dense = reconstruct_dense(field)
    assert dense.shape == (7, 6, 5, 1)
    for x in rng.uniform(small_geometry.lo, small_geometry.hi, size=(30, 3)):
        raw = trilinear(dense, small_geometry, x)[0]
        assert sample_density(field, x) == pytest.approx(np.log1p(np.exp(raw)), abs=1e-5)


def test_softplus_stable():
    np.testing.assert_allclose(softplus(np.array([-800.0, 0.0, 800.0])), [0.0, np.log(2.0), 800.0])


def test_rank1_all_ones():
    geo = GridGeometry((4, 3, 5))
    lines = [np.ones((1, n)) for n in geo.resolution]
    planes = [np.ones((1, geo.resolution[b], geo.resolution[c])) for b, c in PLANE_AXES]
    field = VMFeatureField(geo, lines, planes, basis=np.eye(3))
    np.testing.assert_array_equal(reconstruct_dense(field), np.ones((4, 3, 5, 3)))


def test_reconstruction_triple_loop(small_geometry):
    field = random_feature_field(small_geometry, 2, 3, seed=11, scale=1.0)
    np.testing.assert_allclose(reconstruct_dense(field), naive_dense(field), atol=1e-6)


def test_zero_factors(small_geometry):
    field = random_feature_field(small_geometry, 2, 3, seed=0)
    for arr in field.factor_arrays():
        arr[...] = 0.0
    np.testing.assert_array_equal(reconstruct_dense(field), 0.0)


def test_param_count_below_dense():
    geo = GridGeometry((64, 64, 64))
    field = random_feature_field(geo, 8, 16)
    assert field.param_count() == 3 * 8 * 64 + 3 * 8 * 64 * 64 + 16 * 24
    assert field.param_count() < dense_param_count(geo, 16)


def test_dense_cap(small_geometry):
    field = random_feature_field(small_geometry, 2, 3)
    with pytest.raises(ResourceError):
        reconstruct_dense(field, cap=10)


def test_query_errors(small_geometry):
    field = random_feature_field(small_geometry, 2, 3)
    with pytest.raises(OutOfDomainError):
        sample_feature(field, [5.0, 0.0, 0.0])
    with pytest.raises(NonFiniteInputError):
        sample_feature(field, [np.nan, 0.0, 0.0])
    with pytest.raises(ShapeError):
        sample_feature(field, [0.0, 0.0])


def test_geometry_validation():
    with pytest.raises(ShapeError):
        GridGeometry((1, 4, 4))
    with pytest.raises(ShapeError):
        GridGeometry((4, 4, 4), (0, 0, 0), (1, -1, 1))


def test_factor_shape_validation(small_geometry):
    field = random_feature_field(small_geometry, 2, 3)
    with pytest.raises(ShapeError):
        VMFeatureField(small_geometry, field.lines, field.planes, basis=np.ones((3, 5)))
    bad = [field.lines[0][:, :-1], field.lines[1], field.lines[2]]
    with pytest.raises(ShapeError):
        VMFeatureField(small_geometry, bad, field.planes, basis=field.basis)


def test_boundary_points_are_inside(small_geometry):
    field = random_feature_field(small_geometry, 2, 3, scale=1.0)
    dense = reconstruct_dense(field)
    np.testing.assert_allclose(sample_feature(field, small_geometry.hi), dense[-1, -1, -1], atol=1e-12)
    np.testing.assert_allclose(sample_feature(field, small_geometry.lo), dense[0, 0, 0], atol=1e-12)
