import os
import math
import logging
from abc import ABC, abstractmethod
from pathlib import Path
import numpy as np

from dual_level_forecaster.mytypes import (ConfigError, ShapeError, UsageError, ParseError, SemanticError,
                                           Scene, Track)
from dual_level_forecaster.core.skeleton import CANONICAL_JOINTS
from dual_level_forecaster.importers.asf import AsfSkeleton, parse_asf
from dual_level_forecaster.importers.amc import parse_amc, AMC_FPS
from dual_level_forecaster.importers.kinematics import RawTrack, forward_kinematics
from dual_level_forecaster.utils.io import read_json

# ASF lengths divided by the length unit are inches
CMU_UNIT_SCALE = 0.0254
DEFAULT_MAPPING = Path(__file__).resolve().parent.parent / 'configs' / 'cmu_canonical_mapping.json'


class FileSource(ABC):
    def __init__(self, path: str):
        self.path = path

    @abstractmethod
    def list_files(self, prefix: str, suffix: str) -> list[str]:
        pass

    @abstractmethod
    def read_text(self, filepath: str) -> str:
        pass


class LocalFileSource(FileSource):

    def list_files(self, prefix: str, suffix: str) -> list[str]:
        files = sorted(os.listdir(self.path))
        return [file for file in files if file.startswith(prefix) and file.endswith(suffix)]

    def read_text(self, filepath: str) -> str:
        full_path = os.path.join(self.path, filepath)
        if os.path.isfile(full_path):
            with open(full_path, 'r', encoding='utf-8') as file:
                return file.read()
        else:
            raise UsageError(msg=f"File not found: {full_path}")


def load_mapping(path: str | Path | None = None) -> dict[str, list[str]]:
    """Versioned {"version", "joints"} table or a plain {canonical: [raw...]} dict."""
    data = read_json(Path(path or DEFAULT_MAPPING), "mapping table")
    joints = data.get("joints", data) if isinstance(data, dict) else None
    if not isinstance(joints, dict):
        raise ConfigError(msg="mapping table must be a JSON object", key=str(path))
    table = {}
    for name, raw in joints.items():
        if name == "version":
            continue
        raw = [raw] if isinstance(raw, str) else raw
        if not isinstance(raw, list) or not raw or not all(isinstance(r, str) for r in raw):
            raise ConfigError(msg=f"joint '{name}' must map to a non-empty list of raw joint names",
                              key=str(path))
        table[name] = list(raw)
    return table


def to_canonical(raw: RawTrack, mapping: dict[str, list[str]], unit_scale: float = CMU_UNIT_SCALE) -> Track:
    """Select (or average) raw joints into the 15 canonical joints, scaled to meters."""
    missing = [j for j in CANONICAL_JOINTS if j not in mapping]
    if missing:
        raise ConfigError(msg=f"mapping leaves canonical joints unmapped: {missing}", key='mapping')
    columns = []
    for joint in CANONICAL_JOINTS:
        unknown = [r for r in mapping[joint] if r not in raw.joint_names]
        if unknown:
            raise ConfigError(msg=f"'{joint}' maps to unknown raw joints {unknown}", key='mapping')
        idx = [raw.joint_names.index(r) for r in mapping[joint]]
        columns.append(raw.positions[:, idx].mean(axis=1))
    return Track(np.stack(columns, axis=1) * unit_scale, raw.fps)


def resample(track: Track, target_fps: float) -> Track:
    """Linear interpolation onto a target_fps grid starting at the first frame."""
    if not target_fps > 0:
        raise UsageError(msg=f"target fps must be positive, got {target_fps}")
    if target_fps == track.fps:
        return Track(track.frames.copy(), track.fps)
    frames = track.frames
    count = max(1, math.ceil(len(track) * target_fps / track.fps - 1e-9))
    pos = np.minimum(np.arange(count) * (track.fps / target_fps), len(track) - 1)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, len(track) - 1)
    w = (pos - lo)[:, None, None]
    return Track(frames[lo] * (1.0 - w) + frames[hi] * w, target_fps)


def split_scene(track: Track, history_len: int, person_id: str = "p0") -> Scene:
    if len(track) < 2:
        raise ShapeError(msg=f"clip too short to split into history and future: {len(track)} frames")
    history_len = min(history_len, len(track) - 1)
    return Scene((track,), history_len, len(track) - history_len, (person_id,))


def ingest_clip(skel: AsfSkeleton, amc_text: str, mapping: dict[str, list[str]], target_fps: float = 15.0,
                source_fps: float = AMC_FPS, unit_scale: float = CMU_UNIT_SCALE) -> Track:
    clip = parse_amc(amc_text, skel, source_fps)
    raw = forward_kinematics(skel, clip)
    return resample(to_canonical(raw, mapping, unit_scale), target_fps)


def ingest_files(asf_path: str | Path, amc_paths: list[str | Path], mapping: dict[str, list[str]],
                 target_fps: float = 15.0, history_len: int = 45) -> dict[str, Scene]:
    """One single-person scene per AMC file, keyed by the AMC file stem."""
    asf_path = Path(asf_path)
    source = LocalFileSource(str(asf_path.parent))
    try:
        skel = parse_asf(source.read_text(asf_path.name))
    except (ParseError, SemanticError) as err:
        err.key = str(asf_path)
        raise
    scenes = {}
    for amc_path in amc_paths:
        amc_path = Path(amc_path)
        text = LocalFileSource(str(amc_path.parent)).read_text(amc_path.name)
        try:
            track = ingest_clip(skel, text, mapping, target_fps)
        except ParseError as err:
            err.key = str(amc_path)
            raise
        scenes[amc_path.stem] = split_scene(track, history_len, amc_path.stem)
        logging.info(f"ingested {amc_path.name}: {len(track)} frames at {target_fps} fps")
    return scenes
