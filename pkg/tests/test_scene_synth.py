import math

import numpy as np
import pytest

from stylefield.errors import DomainError
from stylefield.scene_synth import (
    Primitive,
    SceneOracle,
    oracle_density,
    oracle_feature,
    reference_render,
    smoothstep,
    sphere_scene,
)
from stylefield.volume_renderer import Camera, orbit_cameras


def formula_feature(scene, x):
    """Re-derivation of the documented feature formula, one point at a time."""
    x = np.asarray(x, dtype=np.float64)
    phi = []
    for a in range(3):
        for freq in (math.pi / 2, math.pi):
            phi += [math.sin(freq * x[a]), math.cos(freq * x[a])]
    occ = []
    for p in scene.primitives:
        d = math.dist(x, p.center) - p.size[0]
        t = min(max(-d / scene.softness, 0.0), 1.0)
        occ.append(3 * t * t - 2 * t**3)
    out = []
    for c in range(scene.channels):
        v = 0.5 + 0.25 * phi[c % 12] + 0.15 * phi[(5 * c + 3) % 12]
        v += sum(o * 0.1 * math.cos(1.3 * c + 2.1 * k) for k, o in enumerate(occ))
        out.append(v)
    return np.array(out), sum(o * p.amplitude for o, p in zip(occ, scene.primitives))


def test_smoothstep_ends():
    np.testing.assert_array_equal(smoothstep(np.array([-1.0, 0.0, 1.0, 2.0])), [0.0, 0.0, 1.0, 1.0])
    assert smoothstep(0.5) == pytest.approx(0.5)


def test_far_point_has_no_density():
    assert oracle_density(sphere_scene(), np.array([5.0, 5.0, 5.0])) == 0.0


def test_centre_density_is_amplitude():
    assert oracle_density(sphere_scene(amplitude=17.0), np.zeros(3)) == 17.0


def test_formula_reimplementation(rng):
    scene = SceneOracle(
        [Primitive("sphere", (0.2, 0.0, -0.1), (0.4,), 10.0), Primitive("sphere", (-0.3, 0.3, 0.2), (0.3,), 5.0)],
        channels=14,
        softness=0.2,
    )
    for x in rng.uniform(-1, 1, (25, 3)):
        feat, dens = formula_feature(scene, x)
        np.testing.assert_allclose(oracle_feature(scene, x), feat, atol=1e-12)
        assert oracle_density(scene, x) == pytest.approx(dens, abs=1e-12)


def test_colour_is_linear_and_bounded(rng):
    scene = sphere_scene(channels=16)
    x = rng.uniform(-1, 1, (200, 3))
    rgb = scene.color(x)
    assert rgb.min() >= 0.0 and rgb.max() <= 1.0
    np.testing.assert_allclose(rgb, scene.feature(x) @ scene.color_matrix().T)


def test_box_and_torus_sdf():
    box = Primitive("box", size=(0.5, 0.3, 0.2))
    assert box.sdf(np.array([1.0, 0.0, 0.0])) == pytest.approx(0.5)
    assert box.sdf(np.zeros(3)) == pytest.approx(-0.2)
    torus = Primitive("torus", size=(0.6, 0.1))
    assert torus.sdf(np.array([0.6, 0.0, 0.0])) == pytest.approx(-0.1)
    assert torus.sdf(np.zeros(3)) == pytest.approx(0.5)


def test_primitive_validation():
    with pytest.raises(DomainError):
        Primitive("cone")
    with pytest.raises(DomainError):
        Primitive("box", size=(1.0,))
    with pytest.raises(DomainError):
        Primitive("sphere", amplitude=-1.0)


def test_empty_scene_renders_nothing():
    cam = orbit_cameras(1, 2.5, 6, 6, 8.0)[0]
    fmap, rgb = reference_render(SceneOracle([], 4), cam, 256, 1.0, 4.0)
    np.testing.assert_array_equal(fmap.ray_weight, 0.0)
    np.testing.assert_array_equal(rgb, 1.0)


def test_reference_needs_dense_sampling():
    cam = orbit_cameras(1, 2.5, 4, 4, 8.0)[0]
    with pytest.raises(DomainError):
        reference_render(sphere_scene(), cam, 64)


def test_silhouette_matches_ray_sphere_test():
    radius = 0.5
    scene = sphere_scene(channels=3, radius=radius, amplitude=1e6, softness=1e-4)
    cam = Camera.look_at((2.5, 0.3, 0.4), (0.0, 0.0, 0.0), 16, 16, 14.0)
    vv, uu = np.mgrid[0:16, 0:16]
    o, d = cam.rays(uu.ravel(), vv.ravel())
    closest = np.linalg.norm(np.cross(d, -o[0]), axis=1)  # distance of the line from the centre
    hit = (closest < radius).reshape(16, 16)
    # keep clear of grazing rays whose chord is shorter than the sample spacing
    chord = 2 * np.sqrt(np.clip(radius**2 - closest**2, 0, None))
    assert np.all((chord > 0.02) | (closest > radius + 1e-3))
    assert 10 < hit.sum() < 240
    fmap, _ = reference_render(scene, cam, 4096, 1.0, 4.0)
    np.testing.assert_array_equal(fmap.ray_weight > 0.5, hit)
