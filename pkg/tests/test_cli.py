import json
from pathlib import Path
import pytest
import pandas as pd

from dual_level_forecaster.cli import main
from dual_level_forecaster.utils.io import read_scene
from dual_level_forecaster.training.checkpoint import load_checkpoint

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(autouse=True)
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("DUMMF_LOG_DIR", str(tmp_path / "logs"))
    return tmp_path


@pytest.fixture
def config_file(workdir, tiny_blocks):
    path = workdir / "configuration.json"
    blocks = {**tiny_blocks,
              "synthetic": {"persons": 2, "scene_count": 3, "history_len": 3, "future_len": 5, "seed": 3},
              "forecast": {"M": 2, "steps": 2}}
    path.write_text(json.dumps(blocks))
    return path


def _manifest(path):
    return json.loads(Path(path).read_text())


def test_version():
    assert main(["--version"]) == 0


def test_usage_errors(workdir):
    assert main([]) == 2
    assert main(["train", "--data", str(workdir / "missing"), "--out", "m.dmf"]) == 2
    assert main(["--threads", "0", "gradcheck", "--seed", "0"]) == 2


def test_bad_config_file(workdir):
    bad = workdir / "bad.json"
    bad.write_text(json.dumps({"bogus": {}}))
    assert main(["synth", "--config", str(bad), "--out", str(workdir / "scenes")]) == 2
    assert main(["synth", "--config", str(workdir / "nope.json"), "--out", str(workdir / "scenes")]) == 2
    assert not (workdir / "scenes").exists()


def test_ingest(workdir):
    asf = workdir / "subject.asf"
    asf.write_text((FIXTURES / "two_bone.asf").read_text())
    frames = [f"{t + 1}\nroot {t} 0 0 0 0 0\nupper 0 0 0\nlower 0 0 0" for t in range(16)]
    amc = workdir / "walk.amc"
    amc.write_text(":FULLY-SPECIFIED\n:DEGREES\n" + "\n".join(frames) + "\n")
    out = workdir / "scenes"
    assert main(["ingest", "--asf", str(asf), "--amc", str(amc),
                 "--mapping", str(FIXTURES / "two_bone_mapping.json"), "--out", str(out)]) == 0
    scene = read_scene(out / "walk.json")
    assert scene.person_count == 1 and scene.fps == 15.0
    manifest = _manifest(out / "manifest.json")
    assert manifest["command"] == "ingest"
    assert set(manifest["input_digests"]) == {str(FIXTURES / "two_bone_mapping.json"), str(asf), str(amc)}
    assert manifest["outputs"] == [str(out / "walk.json")]


def test_ingest_missing_amc(workdir):
    asf = workdir / "subject.asf"
    asf.write_text((FIXTURES / "two_bone.asf").read_text())
    assert main(["ingest", "--asf", str(asf), "--amc", str(workdir / "none.amc"), "--out", "scenes"]) == 2


def test_ingest_parse_failure_is_runtime_error(workdir):
    out = workdir / "scenes"
    assert main(["ingest", "--asf", str(FIXTURES / "two_bone.asf"), "--amc", str(FIXTURES / "bad_channels.amc"),
                 "--mapping", str(FIXTURES / "two_bone_mapping.json"), "--out", str(out)]) == 1


def test_synth_is_deterministic(workdir, config_file):
    for name in ("a", "b"):
        assert main(["synth", "--config", str(config_file), "--seed", "4", "--out", str(workdir / name)]) == 0
    names = sorted(p.name for p in (workdir / "a").iterdir())
    assert names == ["manifest.json", "scene_0000.json", "scene_0001.json", "scene_0002.json"]
    for name in names[1:]:
        assert (workdir / "a" / name).read_bytes() == (workdir / "b" / name).read_bytes()
    manifest = _manifest(workdir / "a" / "manifest.json")
    assert manifest["rng_seed"] == 4
    assert list(manifest["input_digests"]) == [str(config_file)]


def test_train_forecast_eval(workdir, config_file):
    scenes = workdir / "scenes"
    assert main(["synth", "--config", str(config_file), "--out", str(scenes)]) == 0

    for name in ("a.dmf", "b.dmf"):
        assert main(["train", "--data", str(scenes), "--config", str(config_file), "--out", str(workdir / name)]) == 0
    assert (workdir / "a.dmf").read_bytes() == (workdir / "b.dmf").read_bytes()
    assert load_checkpoint(workdir / "a.dmf").epoch == 2
    assert _manifest(workdir / "a.dmf.manifest.json")["command"] == "train"

    scene = str(scenes / "scene_0000.json")
    for run in ("a", "b"):
        pred = workdir / run / "pred.json"
        assert main(["forecast", "--ckpt", str(workdir / "a.dmf"), "--scene", scene,
                     "--config", str(config_file), "--seed", "1", "--out", str(pred)]) == 0
        assert main(["eval", "--pred", str(pred), "--gt", scene, "--out", str(workdir / run / "report.json")]) == 0
    for name in ("pred.json", "report.json", "report.csv"):
        assert (workdir / "a" / name).read_bytes() == (workdir / "b" / name).read_bytes()

    tree = json.loads((workdir / "a" / "pred.json").read_text())
    assert tree["steps"] == 2 and tree["M"] == 2 and len(tree["branches"]) == 4
    assert (workdir / "a" / "pred.json.manifest.json").is_file()
    data = json.loads((workdir / "a" / "report.json").read_text())
    assert data["scene"] == "scene_0000"
    assert [r["candidates"] for r in data["reports"]] == [2, 4]
    frame = pd.read_csv(workdir / "a" / "report.csv")
    assert len(frame) == 2 and "fpd" in frame.columns

    assert main(["forecast", "--ckpt", str(workdir / "a.dmf"), "--scene", scene,
                 "--intents", "3", "--steps", "1", "--out", str(workdir / "bad.json")]) == 2


def test_ablate(workdir, config_file):
    scenes = workdir / "scenes"
    assert main(["synth", "--config", str(config_file), "--out", str(scenes)]) == 0
    out = workdir / "ablation.csv"
    assert main(["ablate", "--data", str(scenes), "--eval", str(scenes), "--config", str(config_file),
                 "--variants", "full", "no_social", "--seeds", "0", "--epochs", "1", "--out", str(out)]) == 0
    frame = pd.read_csv(out)
    assert list(frame["variant"]) == ["full", "no_social"]
    assert main(["ablate", "--data", str(scenes), "--eval", str(scenes), "--variants", "bogus",
                 "--out", str(out)]) == 2


def test_gradcheck(workdir, capsys):
    out = workdir / "grad.json"
    assert main(["gradcheck", "--seed", "0", "--out", str(out)]) == 0
    results = json.loads(out.read_text())
    assert results and all(r["passed"] for r in results)
    assert f"all {len(results)} checks passed" in capsys.readouterr().out
