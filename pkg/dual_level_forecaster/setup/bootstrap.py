from logging import Logger
from pathlib import Path
from typing import Any
from dual_level_forecaster.utils.environment import ConfigManager, ConfigKeys
from dual_level_forecaster.setup.log_management import setup_logdir_by_currentdate, configure_logging


def setup_config(root:Path, env:str) -> dict:
    ConfigManager.setup(root, env)
    return ConfigManager().config


def setup_logging(env:str="", level:str|None=None, command:str="") -> tuple[Logger, str]:
    today_log_dir = setup_logdir_by_currentdate(env, base_dir=ConfigManager.get(ConfigKeys.DUMMF_LOG_DIR))
    level = (level or ConfigManager.get(ConfigKeys.DUMMF_LOG_LEVEL)).upper()
    return configure_logging(today_log_dir, __name__, command, level=level), today_log_dir


class Bootstrap:
  """Process-wide run context: environment config, logging and run-scoped values such as `threads`."""
  _instance = None
  config: dict
  logger: Logger
  today_log_dir: str
  data = {}

  def __new__(cls):
    if cls._instance is None:
        cls._instance = super(Bootstrap, cls).__new__(cls)
    return cls._instance

  @classmethod
  def get(cls, key: str, default=None) -> Any:
      return cls.data.get(key, default)

  @classmethod
  def set(cls, key:str, value:Any):
      cls.data[key] = value

  @classmethod
  def setup(cls, root: Path, env:str="", log_level:str|None=None, command:str="", with_logging:bool=True):
      cls.config = setup_config(root, env)
      cls.set('threads', ConfigManager.get_int(ConfigKeys.DUMMF_THREADS))
      cls.set('command', command)
      if with_logging:
        cls.logger, cls.today_log_dir = setup_logging(env, log_level, command)
      return cls
