from pathlib import Path
import pytest
import numpy as np

from dual_level_forecaster.mytypes import (ParseError, SemanticError, ConfigError, UsageError, SynthesisError,
                                           Track, Scene)
from dual_level_forecaster.core.skeleton import CANONICAL_SKELETON, CANONICAL_JOINTS, rest_pose
from dual_level_forecaster.core.motion import track_limb_lengths
from dual_level_forecaster.importers.asf import parse_asf, read_asf
from dual_level_forecaster.importers.amc import parse_amc, read_amc
from dual_level_forecaster.importers.kinematics import RawTrack, forward_kinematics
from dual_level_forecaster.importers.main import (load_mapping, to_canonical, resample, split_scene,
                                                  ingest_files, CMU_UNIT_SCALE)
from dual_level_forecaster.importers.scenes import (SceneSynthConfig, synthesize_scene, mix_scenes,
                                                    groups_from_scenes)
from dual_level_forecaster.importers.synthetic import SyntheticSpec, synthetic_dataset

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def asf_text():
    return (FIXTURES / "two_bone.asf").read_text()


@pytest.fixture
def skel(asf_text):
    return parse_asf(asf_text)


@pytest.fixture
def amc_text():
    return (FIXTURES / "three_frames.amc").read_text()


def _walking_track(start, velocity, frames=6, fps=15.0):
    offsets = np.asarray(start) + np.arange(frames)[:, None] * np.asarray(velocity)
    return Track(rest_pose()[None] + offsets[:, None], fps)


# ---------------------------------------------------------------- ASF

def test_parse_asf_two_bone(skel):
    assert list(skel.bones) == ['upper', 'lower']
    assert skel.traversal() == ['upper', 'lower']
    assert skel.depth() == 2
    assert skel.bones['lower'].length == 2.0
    np.testing.assert_array_equal(skel.bones['upper'].direction, [0.0, 1.0, 0.0])
    assert skel.bones['upper'].dof == ('rx', 'ry', 'rz')
    assert skel.units.angle == 'deg'


def test_parse_asf_empty():
    with pytest.raises(ParseError) as err:
        parse_asf("")
    assert err.value.line == 1


def test_parse_asf_undefined_bone(asf_text):
    with pytest.raises(SemanticError) as err:
        parse_asf(asf_text.replace("upper lower", "upper elbow"))
    assert "elbow" in str(err.value)


def test_parse_asf_missing_section(asf_text):
    head = asf_text.split(":hierarchy")[0]
    with pytest.raises(ParseError) as err:
        parse_asf(head)
    assert "hierarchy" in err.value.msg


def test_parse_asf_duplicate_bone(asf_text):
    with pytest.raises(ParseError):
        parse_asf(asf_text.replace("name lower", "name upper"))


def test_read_asf_reports_file_and_line():
    path = FIXTURES / "bad_direction.asf"
    with pytest.raises(ParseError) as err:
        read_asf(path)
    assert err.value.line == 12
    assert err.value.key == str(path)
    assert "line 12" in str(err.value)


# ---------------------------------------------------------------- AMC

def test_parse_amc_three_frames(skel, amc_text):
    clip = parse_amc(amc_text, skel)
    assert len(clip) == 3
    assert clip.degrees
    np.testing.assert_array_equal(clip.frames[1]['root'], [1, 2, 3, 0, 0, 0])
    np.testing.assert_array_equal(clip.frames[2]['upper'], [0, 0, 90])


def test_read_amc_wrong_channel_count(skel):
    path = FIXTURES / "bad_channels.amc"
    with pytest.raises(ParseError) as err:
        read_amc(path, skel)
    assert err.value.line == 9
    assert "frame 2" in err.value.msg and "'upper'" in err.value.msg
    assert err.value.key == str(path)


def test_parse_amc_missing_bone(skel, amc_text):
    lines = amc_text.splitlines()
    truncated = "\n".join(lines[:-1])
    with pytest.raises(ParseError) as err:
        parse_amc(truncated, skel)
    assert "frame 3" in err.value.msg and "'lower'" in err.value.msg


def test_parse_amc_unknown_bone(skel, amc_text):
    with pytest.raises(ParseError) as err:
        parse_amc(amc_text.replace("lower 0 0 0\n2", "elbow 0 0 0\n2"), skel)
    assert "elbow" in err.value.msg


def test_parse_amc_without_frames(skel):
    with pytest.raises(ParseError):
        parse_amc(":FULLY-SPECIFIED\n:DEGREES\n", skel)


# ---------------------------------------------------------------- forward kinematics

def test_fk_rest_chain(skel, amc_text):
    raw = forward_kinematics(skel, parse_amc(amc_text, skel))
    assert raw.joint_names == ('root', 'upper', 'lower')
    np.testing.assert_allclose(raw.positions[0], [[0, 0, 0], [0, 1, 0], [0, 3, 0]], atol=1e-9)


def test_fk_root_translation(skel, amc_text):
    raw = forward_kinematics(skel, parse_amc(amc_text, skel))
    np.testing.assert_allclose(raw.positions[1] - raw.positions[0], np.tile([1.0, 2.0, 3.0], (3, 1)), atol=1e-9)


def test_fk_rotation_about_z(skel, amc_text):
    raw = forward_kinematics(skel, parse_amc(amc_text, skel))
    np.testing.assert_allclose(raw.joint('upper')[2], [-1.0, 0.0, 0.0], atol=1e-9)
    np.testing.assert_allclose(raw.joint('lower')[2], [-3.0, 0.0, 0.0], atol=1e-9)


def test_fk_radians_match_degrees(skel, amc_text):
    radians = amc_text.replace(":DEGREES", ":RADIANS").replace("upper 0 0 90", f"upper 0 0 {np.pi / 2!r}")
    deg = forward_kinematics(skel, parse_amc(amc_text, skel))
    rad = forward_kinematics(skel, parse_amc(radians, skel))
    np.testing.assert_allclose(rad.positions, deg.positions, atol=1e-9)


def test_fk_honours_length_unit(asf_text, amc_text):
    skel = parse_asf(asf_text.replace("length 1.0", "length 0.5"))
    raw = forward_kinematics(skel, parse_amc(amc_text, skel))
    np.testing.assert_allclose(raw.joint('lower')[0], [0.0, 6.0, 0.0], atol=1e-9)
    np.testing.assert_allclose(raw.joint('root')[1], [2.0, 4.0, 6.0], atol=1e-9)


def test_fk_is_deterministic(skel, amc_text):
    a = forward_kinematics(skel, parse_amc(amc_text, skel))
    b = forward_kinematics(skel, parse_amc(amc_text, skel))
    assert a.positions.tobytes() == b.positions.tobytes()


# ---------------------------------------------------------------- canonical mapping

def test_bundled_mapping_covers_canonical_joints():
    mapping = load_mapping()
    assert set(mapping) == set(CANONICAL_JOINTS)
    assert mapping['head'] == ['upperneck', 'head']


def test_fixture_mapping_averages_head(skel, amc_text):
    raw = forward_kinematics(skel, parse_amc(amc_text, skel))
    track = to_canonical(raw, load_mapping(FIXTURES / "two_bone_mapping.json"), unit_scale=1.0)
    assert track.joint_count == 15
    head = track.frames[:, CANONICAL_JOINTS.index('head')]
    np.testing.assert_allclose(head, (raw.joint('upper') + raw.joint('lower')) / 2.0, atol=1e-12)


def test_identity_mapping_and_scale_inverse():
    frames = np.random.default_rng(2).normal(size=(4, 15, 3))
    identity = {j: [j] for j in CANONICAL_JOINTS}
    raw = RawTrack(CANONICAL_JOINTS, frames, 15.0)
    np.testing.assert_array_equal(to_canonical(raw, identity, unit_scale=1.0).frames, frames)
    doubled = RawTrack(CANONICAL_JOINTS, frames * 2.0, 15.0)
    np.testing.assert_allclose(to_canonical(doubled, identity, unit_scale=0.5).frames, frames, atol=1e-12)


def test_unmapped_joint_is_config_error():
    frames = np.zeros((2, 15, 3))
    mapping = {j: [j] for j in CANONICAL_JOINTS[:-1]}
    with pytest.raises(ConfigError):
        to_canonical(RawTrack(CANONICAL_JOINTS, frames, 15.0), mapping)


def test_malformed_mapping_file(tmp_path):
    path = tmp_path / "mapping.json"
    path.write_text('{"version": 1, "joints": {"pelvis": []}}')
    with pytest.raises(ConfigError):
        load_mapping(path)


# ---------------------------------------------------------------- resampling

def test_resample_same_fps():
    track = _walking_track([0, 0, 0], [0.1, 0, 0])
    out = resample(track, 15.0)
    np.testing.assert_array_equal(out.frames, track.frames)


def test_resample_constant_track_length():
    track = Track(np.repeat(rest_pose()[None], 20, axis=0), 120.0)
    out = resample(track, 15.0)
    assert len(out) == 3
    np.testing.assert_allclose(out.frames, rest_pose()[None].repeat(3, axis=0), atol=1e-12)


def test_resample_linear_motion_is_exact():
    track = _walking_track([0, 0, 0], [0.01, 0.0, 0.02], frames=24, fps=120.0)
    out = resample(track, 15.0)
    assert out.fps == 15.0
    np.testing.assert_array_equal(out.frames[0], track.frames[0])
    np.testing.assert_allclose(out.frames, track.frames[::8], atol=1e-12)


def test_resample_rejects_bad_fps():
    with pytest.raises(UsageError):
        resample(_walking_track([0, 0, 0], [0, 0, 0]), 0.0)


def test_split_scene_keeps_one_future_frame():
    scene = split_scene(_walking_track([0, 0, 0], [0.1, 0, 0], frames=5), history_len=45)
    assert (scene.history_len, scene.future_len) == (4, 1)


def test_ingest_files(tmp_path, asf_text):
    asf = tmp_path / "subject.asf"
    asf.write_text(asf_text)
    frames = [f"{t + 1}\nroot {t} 0 0 0 0 0\nupper 0 0 0\nlower 0 0 0" for t in range(16)]
    amc = tmp_path / "walk.amc"
    amc.write_text(":FULLY-SPECIFIED\n:DEGREES\n" + "\n".join(frames) + "\n")
    scenes = ingest_files(asf, [amc], load_mapping(FIXTURES / "two_bone_mapping.json"), target_fps=15.0)
    scene = scenes["walk"]
    assert scene.fps == 15.0
    assert scene.as_array().shape == (1, 2, 15, 3)
    pelvis = scene.as_array()[0, :, 0]
    np.testing.assert_allclose(pelvis[:, 0], [0.0, 8 * CMU_UNIT_SCALE], atol=1e-12)


def test_ingest_missing_file(tmp_path):
    with pytest.raises(UsageError):
        ingest_files(tmp_path / "nope.asf", [], load_mapping())


# ---------------------------------------------------------------- scene synthesis

@pytest.fixture
def small_synth():
    return SceneSynthConfig(persons_per_scene=3, min_pair_distance=0.5, placement_radius=3.0, rng_seed=7,
                            history_len=4, future_len=2)


def _roots_ok(scene:Scene, min_dist:float) -> bool:
    arr = scene.as_array()
    for t in range(arr.shape[1]):
        for a in range(arr.shape[0]):
            for b in range(a + 1, arr.shape[0]):
                if np.linalg.norm(arr[a, t, 0] - arr[b, t, 0]) < min_dist:
                    return False
    return True


def test_synthesize_single_clip_is_planar_shift():
    clip = _walking_track([0.2, 0, 0.4], [0.05, 0, 0.0])
    cfg = SceneSynthConfig(persons_per_scene=1, history_len=4, future_len=2)
    scene = synthesize_scene([(clip,)], cfg, np.random.default_rng(0))
    shift = scene.as_array()[0] - clip.frames
    np.testing.assert_allclose(shift, np.broadcast_to(shift[0, 0], shift.shape), atol=1e-12)
    assert shift[0, 0, 1] == pytest.approx(0.0)


def test_synthesize_zero_radius_collides():
    clip = _walking_track([0, 0, 0], [0.05, 0, 0])
    cfg = SceneSynthConfig(persons_per_scene=2, placement_radius=0.0, max_rejection_tries=3,
                           history_len=4, future_len=2)
    with pytest.raises(SynthesisError):
        synthesize_scene([(clip,), (clip,)], cfg, np.random.default_rng(0))


def test_synthesize_three_persons_from_pair_and_single(small_synth):
    pair = (_walking_track([0, 0, 0], [0.05, 0, 0]), _walking_track([1.0, 0, 0], [0.05, 0, 0]))
    single = (_walking_track([0, 0, 0], [0, 0, 0.05]),)
    scene = synthesize_scene([pair, single], small_synth, np.random.default_rng(small_synth.rng_seed))
    assert scene.person_count == 3
    assert _roots_ok(scene, small_synth.min_pair_distance)
    arr = scene.as_array()
    np.testing.assert_allclose(arr[1, :, 0] - arr[0, :, 0], pair[1].frames[:, 0] - pair[0].frames[:, 0],
                               atol=1e-12)


def test_synthesize_cannot_pack(small_synth):
    pair = (_walking_track([0, 0, 0], [0, 0, 0]), _walking_track([1.0, 0, 0], [0, 0, 0]))
    with pytest.raises(SynthesisError):
        synthesize_scene([pair, pair], small_synth, np.random.default_rng(0))


def test_synthesize_rejects_short_clips(small_synth):
    short = _walking_track([0, 0, 0], [0, 0, 0], frames=3)
    with pytest.raises(SynthesisError):
        synthesize_scene([(short,)] * 3, small_synth, np.random.default_rng(0))


def test_scene_synth_config_validation():
    with pytest.raises(ConfigError):
        SceneSynthConfig(min_pair_distance=0.0)
    with pytest.raises(ConfigError):
        SceneSynthConfig.from_dict({"persons": 3})


@pytest.fixture
def tiny_spec():
    return SyntheticSpec(persons=2, scene_count=4, history_len=5, future_len=5, seed=3)


def test_mix_scenes_from_synthetic_singles():
    singles = synthetic_dataset(SyntheticSpec(persons=1, scene_count=6, history_len=5, future_len=5, seed=1))
    cfg = SceneSynthConfig(persons_per_scene=3, rng_seed=4, history_len=5, future_len=5)
    scenes = mix_scenes(groups_from_scenes(singles), cfg, count=2)
    assert [s.person_count for s in scenes] == [3, 3]
    assert all(_roots_ok(s, cfg.min_pair_distance) for s in scenes)
    again = mix_scenes(groups_from_scenes(singles), cfg, count=2)
    np.testing.assert_array_equal(scenes[1].as_array(), again[1].as_array())


# ---------------------------------------------------------------- synthetic data

def test_synthetic_static_scenes():
    spec = SyntheticSpec(persons=2, scene_count=2, history_len=3, future_len=3, speed=0.0, amplitude=0.0)
    for scene in synthetic_dataset(spec):
        arr = scene.as_array()
        np.testing.assert_allclose(arr, np.broadcast_to(arr[:, :1], arr.shape), atol=1e-12)


def test_synthetic_is_deterministic(tiny_spec):
    a = synthetic_dataset(tiny_spec)
    b = synthetic_dataset(tiny_spec, threads=3)
    assert len(a) == 4
    for x, y in zip(a, b):
        assert x.as_array().tobytes() == y.as_array().tobytes()


def test_synthetic_rng_argument_is_reproducible(tiny_spec):
    a = synthetic_dataset(tiny_spec, rng=np.random.default_rng(9))
    b = synthetic_dataset(tiny_spec, rng=np.random.default_rng(9))
    np.testing.assert_array_equal(a[0].as_array(), b[0].as_array())


def test_synthetic_limb_lengths_constant(tiny_spec):
    for scene in synthetic_dataset(tiny_spec):
        lengths = track_limb_lengths(scene.as_array(), CANONICAL_SKELETON)
        assert np.abs(lengths - lengths[:, :1]).max() <= 1e-9


def test_synthetic_branches_share_history(tiny_spec):
    first, second = synthetic_dataset(tiny_spec)[:2]
    np.testing.assert_array_equal(first.history, second.history)
    assert np.abs(first.future - second.future).max() > 1e-6


def test_synthetic_joint_noise(tiny_spec):
    clean = synthetic_dataset(tiny_spec)
    noisy = synthetic_dataset(SyntheticSpec.from_dict({**tiny_spec.to_dict(), "joint_noise": 0.01}))
    np.testing.assert_array_equal(noisy[0].history, noisy[1].history)
    offset = noisy[0].as_array() - clean[0].as_array()
    assert 0.005 < offset.std() < 0.02
    lengths = track_limb_lengths(noisy[0].as_array(), CANONICAL_SKELETON)
    assert np.abs(np.diff(lengths, axis=1)).mean() > 1e-3


def test_synthetic_spec_validation():
    with pytest.raises(ConfigError):
        SyntheticSpec(joint_noise=-0.1)
    with pytest.raises(ConfigError):
        SyntheticSpec(families=('zigzag',))
    with pytest.raises(ConfigError):
        SyntheticSpec.from_dict({"people": 2})
