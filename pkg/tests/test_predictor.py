import pytest
import numpy as np

from dual_level_forecaster.mytypes import GlobalVariant, ConfigError, ShapeError, UsageError, Scene, Track
from dual_level_forecaster.core.skeleton import rest_pose
from dual_level_forecaster.gradcore.tensor import Tensor, backward
from dual_level_forecaster.gradcore import ops
from dual_level_forecaster.model.layers import frozen, to_arrays, from_arrays, sinusoidal_encoding
from dual_level_forecaster.model.predictor import (PredictorConfig, init_predictor, encode, decode,
                                                   forward_batch, forward)


def _config(**overrides):
    settings = dict(layers=1, d_model=8, heads=2, ff_dim=8, future_len=4)
    settings.update(overrides)
    return PredictorConfig(**settings)


def _history(rng, b=1, n=3, t_h=3):
    return rest_pose()[None, None, None] + rng.normal(0.0, 0.1, size=(b, n, t_h, 15, 3))


@pytest.fixture
def rng():
    return np.random.default_rng(21)


@pytest.fixture
def model(rng):
    config = _config()
    return config, frozen(init_predictor(config, rng))


def test_output_shapes(rng, model):
    config, params = model
    history = _history(rng, b=2)
    codes = rng.normal(size=(2, 5, 3, 8))
    deltas, absolute = forward_batch(history, codes, params, config)
    assert deltas.shape == absolute.shape == (2, 5, 3, 4, 15, 3)
    assert np.all(np.isfinite(absolute.data))


def test_encode_shapes(rng, model):
    config, params = model
    encoded = encode(_history(rng, b=2, n=3, t_h=5), params, config)
    assert encoded.local_embeddings.shape == (2, 3, 8)
    assert encoded.global_memory.shape == (2, 15, 8)
    assert encoded.person_count == 3


def test_absolute_is_last_pose_plus_cumulative_residuals(rng, model):
    config, params = model
    history = _history(rng)
    deltas, absolute = forward_batch(history, rng.normal(size=(1, 2, 3, 8)), params, config)
    expected = history[:, None, :, -1, None] + np.cumsum(deltas.data, axis=3)
    np.testing.assert_allclose(absolute.data, expected, atol=1e-12)


def test_zero_output_layer_predicts_standing_still(rng):
    config = _config()
    params = frozen(init_predictor(config, rng))
    params["dec.out.W"] = Tensor(np.zeros_like(params["dec.out.W"].data))
    history = _history(rng)
    _, absolute = forward_batch(history, rng.normal(size=(1, 2, 3, 8)), params, config)
    for t in range(4):
        np.testing.assert_allclose(absolute.data[0, :, :, t], np.broadcast_to(history[0, :, -1], (2, 3, 15, 3)),
                                   atol=1e-12)


def test_code_of_one_person_leaves_others_unchanged(rng, model):
    config, params = model
    for _ in range(100):
        history = _history(rng)
        codes = rng.normal(size=(1, 2, 3, 8))
        _, before = forward_batch(history, codes, params, config)
        person = int(rng.integers(3))
        codes[0, :, person] += rng.normal(size=(2, 8))
        _, after = forward_batch(history, codes, params, config)
        for n in set(range(3)) - {person}:
            np.testing.assert_array_equal(after.data[0, :, n], before.data[0, :, n])
        assert not np.allclose(after.data[0, :, person], before.data[0, :, person])


def test_code_of_one_slot_leaves_other_slots_unchanged(rng, model):
    config, params = model
    for _ in range(100):
        history = _history(rng)
        codes = rng.normal(size=(1, 3, 3, 8))
        _, before = forward_batch(history, codes, params, config)
        codes[0, 2] += 1.0
        _, after = forward_batch(history, codes, params, config)
        np.testing.assert_array_equal(after.data[0, :2], before.data[0, :2])


@pytest.mark.parametrize("variant", [GlobalVariant.ATTENTION, GlobalVariant.MAXPOOL])
def test_person_permutation_equivariance(rng, variant):
    config = _config(global_variant=variant)
    params = frozen(init_predictor(config, rng))
    history = _history(rng)
    codes = rng.normal(size=(1, 2, 3, 8))
    perm = [2, 0, 1]
    _, base = forward_batch(history, codes, params, config)
    _, permuted = forward_batch(history[:, perm], codes[:, :, perm], params, config)
    np.testing.assert_allclose(permuted.data, base.data[:, :, perm], atol=1e-9)


def test_maxpool_variant_has_single_memory_token(rng):
    config = _config(global_variant='maxpool')
    params = init_predictor(config, rng)
    assert not any(name.startswith("global.") for name in params)
    encoded = encode(_history(rng, n=4), frozen(params), config)
    assert encoded.global_memory.shape == (1, 1, 8)


def test_forward_returns_prediction_set(rng, model):
    config, params = model
    frames = _history(rng, t_h=5)[0]
    scene = Scene(tuple(Track(frames[n], 15.0) for n in range(3)), 3, 2)
    preds = forward(scene, rng.normal(size=(2, 3, 8)), params, config, ((0, 1, 2), (3, 4, 5)))
    assert preds.predictions.shape == (2, 3, 4, 15, 3)
    assert preds.source_intents == ((0, 1, 2), (3, 4, 5))
    assert preds.fps == 15.0
    again = forward(scene, rng.normal(size=(1, 3, 8)), params, config)
    assert again.source_intents == ((),)
    with pytest.raises(UsageError):
        forward(scene, rng.normal(size=(2, 2, 8)), params, config)


def test_decode_rejects_bad_codes(rng, model):
    config, params = model
    encoded = encode(_history(rng), params, config)
    with pytest.raises(UsageError):
        decode(encoded, rng.normal(size=(1, 2, 2, 8)), params, config)
    with pytest.raises(UsageError):
        decode(encoded, rng.normal(size=(2, 2, 3, 8)), params, config)
    with pytest.raises(ShapeError):
        decode(encoded, rng.normal(size=(1, 2, 3, 6)), params, config)


def test_encode_rejects_bad_history(rng, model):
    config, params = model
    with pytest.raises(ShapeError):
        encode(rng.normal(size=(1, 2, 3, 14, 3)), params, config)
    with pytest.raises(ShapeError):
        encode(rng.normal(size=(2, 3, 15, 3)), params, config)


def test_gradient_reaches_codes_and_weights(rng):
    config = _config()
    params = init_predictor(config, rng)
    codes = Tensor(rng.normal(size=(1, 2, 3, 8)), requires_grad=True)
    _, absolute = forward_batch(_history(rng), codes, params, config)
    grads = backward(ops.mean(ops.square(absolute)))
    assert grads[codes].shape == codes.shape
    assert np.any(grads[codes] != 0.0)
    assert np.any(grads[params["local.in.W"]] != 0.0)
    assert np.any(grads[params["global.in.W"]] != 0.0)


def test_initialisation_is_seeded():
    a = to_arrays(init_predictor(_config(), np.random.default_rng(4)))
    b = to_arrays(init_predictor(_config(), np.random.default_rng(4)))
    assert sorted(a) == sorted(b)
    assert all(a[k].tobytes() == b[k].tobytes() for k in a)


def test_from_arrays_copies(rng):
    arrays = to_arrays(init_predictor(_config(), rng))
    params = from_arrays(arrays)
    assert params["dec.out.b"].requires_grad
    params["dec.out.b"].data[0] = 7.0
    assert arrays["dec.out.b"][0] == 0.0


def test_sinusoidal_encoding_values():
    table = sinusoidal_encoding([0, 1, -2], 4)
    np.testing.assert_allclose(table[0], [0.0, 1.0, 0.0, 1.0])
    np.testing.assert_allclose(table[1], [np.sin(1.0), np.cos(1.0), np.sin(0.01), np.cos(0.01)])
    np.testing.assert_allclose(table[2, 0], np.sin(-2.0))


@pytest.mark.parametrize("settings", [
    dict(d_model=10, heads=4),
    dict(layers=0),
    dict(code_dim=16),
    dict(global_variant='pooling'),
])
def test_config_errors(settings):
    with pytest.raises(ConfigError):
        _config(**settings)


def test_config_from_dict():
    config = PredictorConfig.from_dict({"layers": 2, "d_model": 16, "heads": 4, "global_variant": "maxpool"})
    assert config.code_dim == 16 and config.global_variant is GlobalVariant.MAXPOOL
    assert config.to_dict()["global_variant"] == 'maxpool'
    with pytest.raises(ConfigError):
        PredictorConfig.from_dict({"depth": 3})
