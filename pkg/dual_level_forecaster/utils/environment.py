import os
from enum import Enum
from pathlib import Path
from dotenv import load_dotenv
from dual_level_forecaster.mytypes import ConfigError


class ConfigKeys(Enum):
  DUMMF_THREADS = 'DUMMF_THREADS'
  DUMMF_LOG_DIR = 'DUMMF_LOG_DIR'
  DUMMF_LOG_LEVEL = 'DUMMF_LOG_LEVEL'
  DUMMF_MAX_BRANCHES = 'DUMMF_MAX_BRANCHES'


DEFAULTS = {
  ConfigKeys.DUMMF_THREADS: '1',
  ConfigKeys.DUMMF_LOG_DIR: 'logs',
  ConfigKeys.DUMMF_LOG_LEVEL: 'INFO',
  ConfigKeys.DUMMF_MAX_BRANCHES: '4096',
}


class ConfigManager:
    _instance = None
    env:str = ""
    env_config:dict = {}

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super(ConfigManager, cls).__new__(cls)
        return cls._instance

    @classmethod
    def setup(cls, root, env:str=""):
        cls.env = env
        env_file = Path(root) / (f".env.{env}" if env else ".env")
        if os.path.isfile(env_file):
            load_dotenv(env_file)

        cls.env_config = {key: value for key, value in os.environ.items()}

    @property
    def config(self):
        return self.env_config

    @classmethod
    def get(cls, key:ConfigKeys) -> str:
        # live environment wins so tests can monkeypatch without re-running setup
        return os.environ.get(key.value, cls.env_config.get(key.value, DEFAULTS[key]))

    @classmethod
    def get_int(cls, key:ConfigKeys) -> int:
        raw = cls.get(key)
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(msg=f"expected an integer, got {raw!r}", key=key.value)
