import logging
from datetime import datetime
import pytest

from dual_level_forecaster.mytypes import ConfigError
from dual_level_forecaster.utils.environment import ConfigManager, ConfigKeys
from dual_level_forecaster.setup.log_management import archive_old_days, setup_logdir_by_currentdate
from dual_level_forecaster.setup.bootstrap import Bootstrap


def test_archive_old_days(tmp_path):
    for name in ("2026-01-01", "2026-01-02", "notes"):
        (tmp_path / name).mkdir()
    (tmp_path / "2026-01-01" / "10.log").write_text("x")
    moved = archive_old_days(tmp_path, "2026-01-02")
    assert [p.name for p in moved] == ["2026-01-01"]
    assert (tmp_path / "archive" / "2026-01-01" / "10.log").read_text() == "x"
    assert (tmp_path / "2026-01-02").is_dir() and (tmp_path / "notes").is_dir()


def test_archive_merges_into_existing_day(tmp_path):
    (tmp_path / "archive" / "2026-01-01").mkdir(parents=True)
    (tmp_path / "archive" / "2026-01-01" / "09.log").write_text("old")
    (tmp_path / "2026-01-01").mkdir()
    (tmp_path / "2026-01-01" / "10.log").write_text("new")
    archive_old_days(tmp_path, "2026-01-02")
    assert sorted(p.name for p in (tmp_path / "archive" / "2026-01-01").iterdir()) == ["09.log", "10.log"]
    assert not (tmp_path / "2026-01-01").exists()


def test_logdir_by_currentdate(tmp_path):
    today = setup_logdir_by_currentdate("test", base_dir=str(tmp_path / "logs"))
    assert today == str(tmp_path / "logs_test" / f"{datetime.now():%Y-%m-%d}")
    assert (tmp_path / "logs_test" / "archive").is_dir()
    assert setup_logdir_by_currentdate("test", base_dir=str(tmp_path / "logs")) == today


def test_config_manager_precedence(tmp_path, monkeypatch):
    (tmp_path / ".env.unit").write_text("DUMMF_MAX_BRANCHES=77\n")
    for key in ("DUMMF_MAX_BRANCHES", "DUMMF_THREADS"):
        monkeypatch.setenv(key, "")
        monkeypatch.delenv(key)
    ConfigManager.setup(tmp_path, "unit")
    try:
        assert ConfigManager.get_int(ConfigKeys.DUMMF_MAX_BRANCHES) == 77
        assert ConfigManager.get_int(ConfigKeys.DUMMF_THREADS) == 1
        monkeypatch.setenv("DUMMF_MAX_BRANCHES", "12")
        assert ConfigManager.get_int(ConfigKeys.DUMMF_MAX_BRANCHES) == 12
        monkeypatch.setenv("DUMMF_THREADS", "many")
        with pytest.raises(ConfigError):
            ConfigManager.get_int(ConfigKeys.DUMMF_THREADS)
    finally:
        ConfigManager.env_config.pop("DUMMF_MAX_BRANCHES", None)


def test_bootstrap_writes_command_log(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("DUMMF_LOG_DIR", str(tmp_path / "logs"))
    monkeypatch.setenv("DUMMF_THREADS", "3")
    Bootstrap.setup(tmp_path, log_level="warning", command="unit")
    assert Bootstrap.get('threads') == 3 and Bootstrap.get('command') == "unit"
    logging.info("bootstrap check")
    for handler in logging.getLogger().handlers:
        handler.flush()
    log_file = tmp_path / "logs" / f"{datetime.now():%Y-%m-%d}" / f"{datetime.now():%H}-unit.log"
    assert "bootstrap check" in log_file.read_text()
