from pathlib import Path
from dual_level_forecaster.mytypes import ConfigError
from dual_level_forecaster.configs.constants import ConfigBlock, METADATA_KEYS
from dual_level_forecaster.utils.io import read_json
from dual_level_forecaster.utils.base import deep_merge


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> dict:
  """
  Load the JSON run configuration and apply overrides block by block.

  Parameters:
  path: configuration file; None gives an empty configuration (all defaults).
  overrides: {block: {key: value}}; None values are ignored.

  Returns:
  dict: {block name: dict} for every known block, metadata keys dropped.

  Raises:
  ConfigError: unknown top-level block or a block that is not an object.
  """
  data = read_json(Path(path), "configuration") if path else {}
  if not isinstance(data, dict):
    raise ConfigError(msg="configuration must be a JSON object", key=str(path))
  known = {b.value for b in ConfigBlock}
  unknown = set(data) - known - set(METADATA_KEYS)
  if unknown:
    raise ConfigError(msg=f"unknown configuration blocks {sorted(unknown)}", key=str(path))
  config = {}
  for block in ConfigBlock:
    value = data.get(block.value, {})
    if not isinstance(value, dict):
      raise ConfigError(msg=f"block '{block.value}' must be an object", key=str(path))
    config[block.value] = value
  return deep_merge(config, overrides or {})
