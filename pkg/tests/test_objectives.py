import math
import pytest
import numpy as np
from scipy.spatial.transform import Rotation

from dual_level_forecaster.mytypes import ConfigError, ShapeError, UsageError
from dual_level_forecaster.core.skeleton import CANONICAL_SKELETON, rest_pose
from dual_level_forecaster.core.motion import track_limb_lengths
from dual_level_forecaster.gradcore.tensor import Tensor, backward
from dual_level_forecaster.model.layers import frozen
from dual_level_forecaster.objectives.kabsch import kabsch_align, kabsch_residuals
from dual_level_forecaster.objectives import losses
from dual_level_forecaster.objectives.losses import LossConfig, DEFAULT_WEIGHTS
from dual_level_forecaster.objectives.pseudo import PseudoFutureIndex, build_pseudo_futures, future_residuals
from dual_level_forecaster.objectives.discriminators import (DiscriminatorConfig, init_discriminators,
                                                             discriminator_local_forward,
                                                             discriminator_global_forward,
                                                             local_features, loss_lgan, loss_ggan)

SKEL = CANONICAL_SKELETON


@pytest.fixture
def rng():
    return np.random.default_rng(31)


def _walk(frames, velocity, rotation=None):
    """rest pose drifting at a constant velocity, optionally rotated as a whole"""
    pose = rest_pose()
    if rotation is not None:
        pose = rotation.apply(pose)
    steps = np.arange(frames)[:, None, None] * np.asarray(velocity, dtype=np.float64)
    return pose[None] + steps


# ---------------------------------------------------------------- kabsch

def test_kabsch_recovers_rigid_motion(rng):
    a = rng.normal(size=(15, 3))
    q = Rotation.from_rotvec([0.4, 0.2, -1.3]).as_matrix()
    t = np.array([1.0, -2.0, 0.5])
    b = a @ q.T + t
    rot, trans, residual = kabsch_align(a, b)
    np.testing.assert_allclose(rot, q.T, atol=1e-9)
    np.testing.assert_allclose(trans, t, atol=1e-9)
    assert residual < 1e-9
    np.testing.assert_allclose((b - trans) @ rot.T, a, atol=1e-9)


def test_kabsch_never_reflects(rng):
    a = rng.normal(size=(10, 3))
    mirrored = a * np.array([-1.0, 1.0, 1.0])
    rot, _, residual = kabsch_align(a, mirrored)
    assert np.linalg.det(rot) == pytest.approx(1.0, abs=1e-9)
    np.testing.assert_allclose(rot.T @ rot, np.eye(3), atol=1e-9)
    assert residual > 1e-3


def test_kabsch_degenerate_is_identity():
    rot, trans, residual = kabsch_align(np.zeros((4, 3)), np.zeros((4, 3)))
    np.testing.assert_array_equal(rot, np.eye(3))
    assert residual == 0.0


def test_kabsch_shape_error():
    with pytest.raises(ShapeError):
        kabsch_align(np.zeros((4, 3)), np.zeros((5, 3)))
    with pytest.raises(ShapeError):
        kabsch_residuals(np.zeros((4, 3)), np.zeros((2, 5, 3)))


def test_kabsch_residuals_match_single_alignment(rng):
    a = rng.normal(size=(15, 3))
    bs = rng.normal(size=(4, 15, 3))
    batched = kabsch_residuals(a, bs)
    for k in range(4):
        assert batched[k] == pytest.approx(kabsch_align(a, bs[k])[2], abs=1e-9)


# ---------------------------------------------------------------- reconstruction

def test_recon_losses_match_brute_force(rng):
    pred = rng.normal(size=(2, 3, 2, 4, 15, 3))
    target = rng.normal(size=(2, 2, 4, 15, 3))
    err = np.array([[[np.sum((pred[b, m, n] - target[b, n]) ** 2) for n in range(2)] for m in range(3)]
                    for b in range(2)])
    local = np.mean([np.mean([err[b, :, n].min() for n in range(2)]) for b in range(2)])
    shared = np.mean([err[b].mean(axis=1).min() for b in range(2)])
    np.testing.assert_allclose(losses.slot_errors(Tensor(pred), target).data, err, rtol=1e-12)
    assert losses.loss_local_recon(Tensor(pred), target).item() == pytest.approx(local, rel=1e-12)
    assert losses.loss_global_recon(Tensor(pred), target).item() == pytest.approx(shared, rel=1e-12)


def test_shared_winner_never_beats_per_person_winner(rng):
    strict = 0
    for _ in range(1000):
        m, n, t_p = rng.integers(1, 5), rng.integers(1, 4), rng.integers(1, 6)
        pred = Tensor(rng.normal(size=(1, m, n, t_p, 15, 3)))
        target = rng.normal(size=(1, n, t_p, 15, 3))
        shared = losses.loss_global_recon(pred, target).item()
        local = losses.loss_local_recon(pred, target).item()
        assert shared >= local * (1 - 1e-12)
        strict += shared > local * (1 + 1e-9)
    assert strict > 0


def test_shared_winner_strictly_worse_when_persons_disagree():
    target = np.zeros((1, 2, 1, 15, 3))
    pred = np.zeros((1, 2, 2, 1, 15, 3))
    pred[0, 0, 1] += 1.0       # slot 0 fits person 0 only
    pred[0, 1, 0] += 1.0       # slot 1 fits person 1 only
    assert losses.loss_local_recon(Tensor(pred), target).item() == 0.0
    assert losses.loss_global_recon(Tensor(pred), target).item() == pytest.approx(45.0 / 2)


def test_winner_takes_all_gradient(rng):
    pred = Tensor(rng.normal(size=(1, 3, 2, 2, 15, 3)), requires_grad=True)
    target = rng.normal(size=(1, 2, 2, 15, 3))
    winners = losses.slot_errors(pred, target).data[0].argmin(axis=0)
    grads = backward(losses.loss_local_recon(pred, target))[pred]
    for n in range(2):
        for m in range(3):
            if m == winners[n]:
                assert np.any(grads[0, m, n] != 0.0)
            else:
                np.testing.assert_array_equal(grads[0, m, n], 0.0)


def test_unbatched_inputs_are_lifted(rng):
    pred = rng.normal(size=(2, 1, 3, 15, 3))
    target = rng.normal(size=(1, 3, 15, 3))
    assert losses.loss_local_recon(Tensor(pred), target).item() == \
        pytest.approx(losses.loss_local_recon(Tensor(pred[None]), target[None]).item())
    with pytest.raises(ShapeError):
        losses.loss_local_recon(Tensor(pred), rng.normal(size=(2, 3, 15, 3)))


# ---------------------------------------------------------------- limbs

def test_limb_loss_zero_at_targets():
    history = _walk(4, [0.05, 0.0, 0.0])[None, None]             # (1, 1, 4, V, 3)
    targets = losses.limb_targets(history, SKEL)
    pred = np.broadcast_to(history[:, None, :, -1:], (1, 2, 1, 3, 15, 3)).copy()
    assert losses.loss_limb(Tensor(pred), SKEL, targets).item() == pytest.approx(0.0, abs=1e-20)


def test_limb_loss_value():
    history = rest_pose()[None, None, None]
    targets = losses.limb_targets(history, SKEL)
    pred = (rest_pose() * 2.0)[None, None, None, None]            # every limb doubled
    expected = float(np.sum(targets ** 2))
    assert losses.loss_limb(Tensor(pred), SKEL, targets).item() == pytest.approx(expected, rel=1e-12)


def test_limb_gradient_finite_for_collapsed_limb():
    targets = losses.limb_targets(rest_pose()[None, None, None], SKEL)
    pose = rest_pose()
    pose[2] = pose[1]                                            # knee on the hip
    for frames in (pose, np.zeros((15, 3))):
        pred = Tensor(np.broadcast_to(frames, (1, 1, 1, 2, 15, 3)).copy(), requires_grad=True)
        grads = backward(losses.loss_limb(pred, SKEL, targets))[pred]
        assert np.all(np.isfinite(grads))


def test_limb_tensor_matches_numpy(rng):
    poses = rng.normal(size=(2, 15, 3))
    np.testing.assert_allclose(losses.limb_lengths_tensor(Tensor(poses), SKEL).data,
                               track_limb_lengths(poses, SKEL), atol=1e-12)


# ---------------------------------------------------------------- multimodal and diversity

def test_multimodal_recon_brute_force(rng):
    pred = rng.normal(size=(1, 2, 2, 3, 15, 3))
    pseudo = [[rng.normal(size=(3, 3, 15, 3)), pred[0, 1, 1][None].copy()]]
    pairs = [min(np.sum((pred[0, m, 0] - p) ** 2) for m in range(2)) for p in pseudo[0][0]] + [0.0]
    value = losses.loss_multimodal_recon(Tensor(pred), pseudo).item()
    assert value == pytest.approx(np.mean(pairs), rel=1e-12)
    with pytest.raises(ShapeError):
        losses.loss_multimodal_recon(Tensor(pred), [pseudo[0][:1]])


def test_diversity_single_prediction_is_zero(rng):
    assert losses.loss_diversity(Tensor(rng.normal(size=(1, 1, 2, 3, 15, 3))), SKEL, 50.0, 100.0).item() == 0.0


def test_diversity_identical_predictions():
    pred = np.broadcast_to(rest_pose(), (1, 3, 2, 2, 15, 3)).copy()
    assert losses.loss_diversity(Tensor(pred), SKEL, 50.0, 100.0).item() == pytest.approx(1.0, rel=1e-12)


def test_diversity_root_offset_closed_form():
    pred = np.broadcast_to(rest_pose(), (1, 2, 1, 2, 15, 3)).copy()
    pred[0, 1] += np.array([1.0, 0.0, 0.0])
    expected = (math.exp(-2.0 / 50.0) + 1.0) / 2.0
    assert losses.loss_diversity(Tensor(pred), SKEL, 50.0, 100.0).item() == pytest.approx(expected, rel=1e-12)


def test_diversity_decreases_with_spread():
    values = []
    for spread in (0.0, 0.5, 1.0, 2.0):
        pred = np.broadcast_to(rest_pose(), (1, 2, 1, 3, 15, 3)).copy()
        pred[0, 1] += np.array([spread, 0.0, 0.0])
        values.append(losses.loss_diversity(Tensor(pred), SKEL, 1.0, 1.0).item())
    assert values == sorted(values, reverse=True)
    assert values[0] > values[-1]


# ---------------------------------------------------------------- least squares game

def test_lsgan_terms():
    zeros, ones = Tensor(np.zeros(4)), Tensor(np.ones(4))
    assert losses.lsgan_generator(zeros).item() == 1.0
    assert losses.lsgan_generator(ones).item() == 0.0
    assert losses.lsgan_discriminator(zeros, ones).item() == 0.0
    assert losses.lsgan_discriminator(ones, zeros).item() == 2.0


# ---------------------------------------------------------------- config

def test_loss_config_defaults_and_errors():
    config = LossConfig(weights={"D": 0.0})
    assert config.weights == {**DEFAULT_WEIGHTS, "D": 0.0}
    assert LossConfig.from_dict({"eps_pseudo": "inf"}).eps_pseudo == float('inf')
    for bad in ({"alpha": 0.0}, {"eps_pseudo": -1.0}, {"pseudo_stride": 0}, {"max_pseudo": 0},
                {"weights": {"bogus": 1.0}}, {"weights": {"lR": -1.0}}):
        with pytest.raises(ConfigError):
            LossConfig(**bad)
    with pytest.raises(ConfigError):
        LossConfig.from_dict({"gamma": 1.0})


# ---------------------------------------------------------------- pseudo futures

def test_future_residuals():
    track = _walk(5, [0.1, 0.0, 0.0])
    out = future_residuals(track, 1, 3)
    assert out.shape == (3, 15, 3)
    np.testing.assert_allclose(out[..., 0], 0.1, atol=1e-12)


def test_pseudo_ground_truth_first_and_cap():
    scenes = [np.stack([_walk(8, [0.1, 0.0, 0.0]), _walk(8, [0.0, 0.0, 0.2])])]
    index = PseudoFutureIndex(scenes, future_len=2, eps=float('inf'), max_pseudo=3)
    assert len(index.keys) == 2 * 6
    stack = index.lookup((0, 1, 2))
    assert stack.shape == (3, 2, 15, 3)
    np.testing.assert_array_equal(stack[0], future_residuals(scenes[0][1], 2, 2))


def test_pseudo_matches_translated_and_turned_starts():
    turned = Rotation.from_euler('y', 90, degrees=True)
    scenes = [np.stack([_walk(4, [0.1, 0.0, 0.0])]),
              np.stack([_walk(4, [0.0, 0.0, 0.3], rotation=turned) + np.array([5.0, 0.0, 5.0])])]
    index = PseudoFutureIndex(scenes, future_len=1, eps=1e-6)
    stack = index.lookup((0, 0, 0))
    # its own later windows plus all three windows of the turned walker
    assert len(stack) == 1 + 2 + 3
    np.testing.assert_allclose(stack[0, 0, :, 0], 0.1, atol=1e-12)


def test_pseudo_eps_zero_keeps_only_ground_truth(rng):
    scenes = [rest_pose()[None, None] + rng.normal(0.0, 0.2, size=(2, 5, 15, 3))]
    index = PseudoFutureIndex(scenes, future_len=2, eps=0.0)
    assert len(index.lookup((0, 0, 1))) == 1


def test_pseudo_errors():
    scenes = [np.stack([_walk(4, [0.1, 0.0, 0.0])])]
    index = PseudoFutureIndex(scenes, future_len=2, eps=1.0)
    with pytest.raises(UsageError):
        index.lookup((0, 0, 2))
    with pytest.raises(UsageError):
        PseudoFutureIndex(scenes, future_len=0, eps=1.0)


def test_build_pseudo_futures_stride():
    scenes = [np.stack([_walk(9, [0.1, 0.0, 0.0])])]
    pool = build_pseudo_futures(scenes, future_len=2, eps=1e-6, stride=3)
    assert sorted(pool.entries) == [(0, 0, 0), (0, 0, 3), (0, 0, 6)]
    assert all(len(pool.get(k)) == 3 for k in pool.entries)


# ---------------------------------------------------------------- discriminators

@pytest.fixture
def critics(rng):
    config = DiscriminatorConfig(layers=1, d_model=8, heads=2, ff_dim=8)
    return config, frozen(init_discriminators(config, SKEL, rng))


def test_local_features(rng):
    tracks = rng.normal(size=(2, 4, 15, 3))
    feats = local_features(Tensor(tracks), SKEL).data
    assert feats.shape == (2, 4, 45 + 6)
    np.testing.assert_array_equal(feats[:, 0, 45:], 0.0)
    np.testing.assert_allclose(feats[1, 2, 45:48], tracks[1, 2, 3] - tracks[1, 1, 3], atol=1e-12)
    np.testing.assert_allclose(feats[:, :, :3], tracks[:, :, 0] - tracks[:, :1, 0], atol=1e-12)


def test_discriminator_shapes(rng, critics):
    config, params = critics
    assert discriminator_local_forward(Tensor(rng.normal(size=(3, 5, 15, 3))), SKEL, params, config).shape == (3, 5)
    assert discriminator_global_forward(Tensor(rng.normal(size=(2, 3, 5, 15, 3))), SKEL, params, config).shape == (2,)
    with pytest.raises(ShapeError):
        discriminator_global_forward(Tensor(rng.normal(size=(3, 5, 15))), SKEL, params, config)


def test_discriminators_ignore_translation(rng, critics):
    config, params = critics
    tracks = rng.normal(size=(2, 3, 4, 15, 3))
    shifted = tracks + np.array([3.0, 0.0, -2.0])
    np.testing.assert_allclose(discriminator_global_forward(Tensor(shifted), SKEL, params, config).data,
                               discriminator_global_forward(Tensor(tracks), SKEL, params, config).data, atol=1e-9)
    np.testing.assert_allclose(discriminator_local_forward(Tensor(shifted[0]), SKEL, params, config).data,
                               discriminator_local_forward(Tensor(tracks[0]), SKEL, params, config).data, atol=1e-9)


def test_global_discriminator_ignores_person_order(rng, critics):
    config, params = critics
    tracks = rng.normal(size=(1, 3, 4, 15, 3))
    np.testing.assert_allclose(
        discriminator_global_forward(Tensor(tracks[:, [2, 0, 1]]), SKEL, params, config).data,
        discriminator_global_forward(Tensor(tracks), SKEL, params, config).data, atol=1e-9)


def test_gan_losses_are_scalars(rng, critics):
    config, params = critics
    generated = Tensor(rng.normal(size=(1, 2, 2, 3, 15, 3)))
    gen, disc = loss_lgan(generated, rng.normal(size=(3, 3, 15, 3)), SKEL, params, config)
    assert gen.shape == disc.shape == ()
    gen, disc = loss_ggan(generated, rng.normal(size=(2, 2, 3, 15, 3)), SKEL, params, config)
    assert gen.shape == disc.shape == ()
    assert gen.item() >= 0.0 and disc.item() >= 0.0


def test_discriminator_config_errors():
    with pytest.raises(ConfigError):
        DiscriminatorConfig(d_model=10, heads=4)
    with pytest.raises(ConfigError):
        DiscriminatorConfig.from_dict({"depth": 2})
