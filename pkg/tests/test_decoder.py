import numpy as np
import pytest

from stylefield.decoder import DecoderParams, decode, fit_decoder
from stylefield.errors import DomainError, ShapeError
from stylefield.volume_renderer import FeatureMap


def test_pure_background():
    fmap = FeatureMap(np.zeros((2, 2, 4)), np.zeros((2, 2)))
    out = decode(fmap, DecoderParams(np.ones((3, 4)), np.zeros(3), np.ones(3)))
    np.testing.assert_array_equal(out, 1.0)


def test_channel_selection():
    f = np.array([0.2, 0.4, 0.6, 0.8, 0.9])
    fmap = FeatureMap(f.reshape(1, 1, 5), np.ones((1, 1)))
    out = decode(fmap, DecoderParams(np.eye(3, 5), np.zeros(3), np.ones(3)))
    np.testing.assert_allclose(out[0, 0], [0.2, 0.4, 0.6], atol=1e-15)


def test_decode_matches_loop(rng):
    fmap = FeatureMap(rng.normal(0.5, 0.5, (3, 4, 5)), rng.uniform(0, 1, (3, 4)))
    params = DecoderParams(rng.normal(0, 0.5, (3, 5)), rng.normal(0, 0.2, 3), rng.uniform(0, 1, 3))
    out = decode(fmap, params)
    for i in range(3):
        for j in range(4):
            for k in range(3):
                inner = sum(params.weight[k, c] * fmap.data[i, j, c] for c in range(5)) + params.bias[k]
                ref = min(max(min(max(inner, 0.0), 1.0) + (1 - fmap.ray_weight[i, j]) * params.background[k], 0.0), 1.0)
                assert out[i, j, k] == pytest.approx(ref, abs=1e-6)


def test_fit_recovers_linear_map(rng):
    weight = rng.uniform(-0.1, 0.1, (3, 6))
    bias = np.array([0.3, 0.4, 0.5])
    bg = np.array([1.0, 0.5, 0.0])
    maps, rgbs = [], []
    for _ in range(2):
        fmap = FeatureMap(rng.uniform(0, 1, (10, 10, 6)), rng.uniform(0.6, 1.0, (10, 10)))
        maps.append(fmap)
        rgbs.append(decode(fmap, DecoderParams(weight, bias, bg)))
    fit = fit_decoder(maps, rgbs, bg)
    np.testing.assert_allclose(fit.weight, weight, atol=1e-4)
    np.testing.assert_allclose(fit.bias, bias, atol=1e-4)
    assert fit.residual < 1e-12


def test_zero_features_give_mean_bias(rng):
    fmap = FeatureMap(np.zeros((5, 5, 3)), np.ones((5, 5)))
    target = rng.uniform(0, 1, (5, 5, 3))
    fit = fit_decoder([fmap], [target])
    np.testing.assert_allclose(fit.bias, target.reshape(-1, 3).mean(axis=0), atol=1e-8)


def test_duplicates_do_not_change_solution(rng):
    fmap = FeatureMap(rng.uniform(0, 1, (4, 4, 3)), np.ones((4, 4)))
    target = rng.uniform(0, 1, (4, 4, 3))
    once = fit_decoder([fmap], [target])
    twice = fit_decoder([fmap, fmap], [target, target])
    np.testing.assert_allclose(twice.weight, once.weight, atol=1e-9)
    np.testing.assert_allclose(twice.bias, once.bias, atol=1e-9)


def test_fit_needs_foreground():
    fmap = FeatureMap(np.zeros((2, 2, 3)), np.zeros((2, 2)))
    with pytest.raises(DomainError):
        fit_decoder([fmap], [np.zeros((2, 2, 3))])


def test_param_validation():
    with pytest.raises(ShapeError):
        DecoderParams(np.ones((2, 3)))
    with pytest.raises(DomainError):
        DecoderParams(np.full((3, 3), np.inf))
    fmap = FeatureMap(np.zeros((1, 1, 4)), np.ones((1, 1)))
    with pytest.raises(ShapeError):
        decode(fmap, DecoderParams(np.ones((3, 3))))
