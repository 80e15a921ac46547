import os
import json
import hashlib
import logging
import tempfile
from pathlib import Path
from typing import Any
import numpy as np
from dual_level_forecaster.mytypes import Scene, Track, ConfigError, ShapeError, UsageError
from dual_level_forecaster.version import SCENE_SCHEMA_VERSION


def create_results_folder(results_folder:str|Path):
  # create results folder if it doesn't exist
  if not os.path.exists(results_folder):
    os.makedirs(results_folder)


def write_bytes_atomic(path:Path, payload:bytes):
  """
    Write to a sibling temp file and rename over the target, so a failed
    write never leaves a partial output behind.
  """
  path = Path(path)
  create_results_folder(path.parent)
  fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
  try:
    with os.fdopen(fd, 'wb') as fh:
      fh.write(payload)
    os.replace(tmp, path)
  except BaseException:
    if os.path.exists(tmp):
      os.remove(tmp)
    raise


def dumps_json(data:Any) -> str:
  return json.dumps(data, sort_keys=True, separators=(",", ":"))


def write_json_atomic(path:Path, data:Any):
  write_bytes_atomic(path, dumps_json(data).encode('utf-8'))


def read_json(path:Path, what:str="file") -> Any:
  path = Path(path)
  if not path.is_file():
    raise UsageError(msg=f"{what} not found", key=str(path))
  try:
    with open(path, 'r', encoding='utf-8') as fh:
      return json.load(fh)
  except json.JSONDecodeError as err:
    raise ConfigError(msg=f"invalid JSON: {err}", key=str(path))


def file_digest(path:Path) -> str:
  h = hashlib.sha256()
  with open(path, 'rb') as fh:
    for chunk in iter(lambda: fh.read(1 << 16), b''):
      h.update(chunk)
  return h.hexdigest()


def digest_text(text:str) -> str:
  return hashlib.sha256(text.encode('utf-8')).hexdigest()


# ---------------------------------------------------------------- scenes

def scene_to_dict(scene:Scene) -> dict:
  return {
    "schema_version": SCENE_SCHEMA_VERSION,
    "fps": scene.fps,
    "history_len": scene.history_len,
    "future_len": scene.future_len,
    "persons": [{"id": pid, "frames": track.frames.tolist()}
                for pid, track in zip(scene.ids, scene.persons)],
  }


def scene_from_dict(data:dict, source:str="<scene>") -> Scene:
  try:
    fps = float(data["fps"])
    persons = data["persons"]
    tracks = tuple(Track(np.asarray(p["frames"], dtype=np.float64), fps) for p in persons)
    ids = tuple(str(p.get("id", f"p{n}")) for n, p in enumerate(persons))
    return Scene(tracks, int(data["history_len"]), int(data["future_len"]), ids)
  except KeyError as err:
    raise ConfigError(msg=f"scene file missing field {err}", key=source)
  except ShapeError as err:
    err.key = source
    raise


def write_scene(path:Path, scene:Scene):
  write_json_atomic(path, scene_to_dict(scene))


def read_scene(path:Path) -> Scene:
  return scene_from_dict(read_json(path, "scene file"), str(path))


def list_scene_files(folder:Path) -> list[Path]:
  folder = Path(folder)
  if not folder.is_dir():
    raise UsageError(msg="scene directory not found", key=str(folder))
  files = sorted(p for p in folder.iterdir() if p.suffix == '.json' and not p.name.startswith('manifest'))
  logging.info(f"Found {len(files)} scene files in {folder}")
  return files


def read_scene_dir(folder:Path) -> list[Scene]:
  return [read_scene(p) for p in list_scene_files(folder)]
