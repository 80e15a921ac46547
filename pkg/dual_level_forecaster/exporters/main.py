from abc import ABC, abstractmethod
from dataclasses import asdict
from pathlib import Path
from typing import Any
import pandas as pd
from dual_level_forecaster.mytypes import RunManifest, Scene, UsageError
from dual_level_forecaster.utils.io import write_bytes_atomic, write_json_atomic, scene_to_dict

MANIFEST_NAME = "manifest.json"


class DataExporter(ABC):

  def __init__(self, config:dict) -> None:
    self.config = config

  @abstractmethod
  def export_dataframe(self, data_name:str, data:pd.DataFrame) -> Path:
    pass

  @abstractmethod
  def export_json(self, data_name:str, data:Any) -> Path:
    pass

  def export_scene(self, data_name:str, scene:Scene) -> Path:
    return self.export_json(data_name, scene_to_dict(scene))

  def export_manifest(self, manifest:RunManifest, data_name:str=MANIFEST_NAME) -> Path:
    return self.export_json(data_name, asdict(manifest))


class LocalFileExporter(DataExporter):
  """
  Writes into config["location"], always through a temp file and a rename,
  so an interrupted export never leaves a partial file.
  """

  def _target(self, data_name:str, suffix:str) -> Path:
    folder = self.config.get("location")
    if not folder:
      raise UsageError(msg="LocalFileExporter: no location was passed in")
    name = data_name if data_name.endswith(suffix) else f"{data_name}{suffix}"
    return Path(folder) / name

  def export_dataframe(self, data_name:str, data:pd.DataFrame) -> Path:
    path = self._target(data_name, ".csv")
    write_bytes_atomic(path, data.to_csv(index=False, float_format="%.10g").encode('utf-8'))
    return path

  def export_json(self, data_name:str, data:Any) -> Path:
    path = self._target(data_name, ".json")
    write_json_atomic(path, data)
    return path
