"""
  Multi-person scene synthesis from single- and two-person clip groups.

  Each group is moved by one planar offset (two-person groups keep their
  internal placement) and the result is accepted only when every pair of roots
  stays at least min_pair_distance apart on every frame.
"""
import logging
from dataclasses import dataclass, asdict
from typing import Optional, Sequence
import numpy as np
from dual_level_forecaster.mytypes import ConfigError, SynthesisError, Scene, SkeletonSpec, Track
from dual_level_forecaster.core.skeleton import CANONICAL_SKELETON

ClipGroup = tuple[Track, ...]


@dataclass
class SceneSynthConfig:
  persons_per_scene:int = 3
  min_pair_distance:float = 0.5
  placement_radius:float = 3.0
  rng_seed:int = 0
  max_rejection_tries:int = 200
  history_len:int = 45
  future_len:int = 15

  def __post_init__(self):
    if self.persons_per_scene < 1:
      raise ConfigError(msg=f"persons_per_scene must be >= 1, got {self.persons_per_scene}", key='synthesis')
    if not self.min_pair_distance > 0:
      raise ConfigError(msg="min_pair_distance must be > 0", key='synthesis')
    if self.placement_radius < 0 or self.max_rejection_tries < 1:
      raise ConfigError(msg="placement_radius must be >= 0 and max_rejection_tries >= 1", key='synthesis')
    if self.history_len < 1 or self.future_len < 0:
      raise ConfigError(msg="invalid history/future lengths", key='synthesis')

  @classmethod
  def from_dict(cls, data:dict) -> "SceneSynthConfig":
    unknown = set(data) - set(cls.__dataclass_fields__)
    if unknown:
      raise ConfigError(msg=f"unknown keys {sorted(unknown)}", key='synthesis')
    return cls(**data)

  def to_dict(self) -> dict:
    return asdict(self)


def groups_from_scenes(scenes:Sequence[Scene]) -> list[ClipGroup]:
  return [tuple(scene.persons) for scene in scenes]


def _pack(groups:Sequence[ClipGroup], persons:int) -> list[ClipGroup]:
  """Take groups in order, skipping any that would overshoot the person count."""
  chosen, total = [], 0
  for group in groups:
    if total + len(group) <= persons:
      chosen.append(group)
      total += len(group)
    if total == persons:
      return chosen
  raise SynthesisError(msg=f"clip groups cannot be packed into exactly {persons} persons")


def collision_free(arr:np.ndarray, min_dist:float, skel:SkeletonSpec=CANONICAL_SKELETON) -> bool:
  """True when all root pairs of an (N, T, V, 3) scene stay >= min_dist apart on every frame."""
  n = arr.shape[0]
  if n < 2:
    return True
  roots = arr[:, :, skel.root_index]
  first, second = np.triu_indices(n, k=1)
  dist = np.linalg.norm(roots[first] - roots[second], axis=-1)
  return bool(np.all(dist >= min_dist))


def synthesize_scene(groups:Sequence[ClipGroup], cfg:SceneSynthConfig, rng:np.random.Generator,
                     skel:SkeletonSpec=CANONICAL_SKELETON) -> Scene:
  chosen = _pack(groups, cfg.persons_per_scene)
  tracks = [t for group in chosen for t in group]
  fps = tracks[0].fps
  if any(t.fps != fps for t in tracks):
    raise SynthesisError(msg="clip groups must share one frame rate")
  length = cfg.history_len + cfg.future_len
  if min(len(t) for t in tracks) < length:
    raise SynthesisError(msg=f"clips shorter than the {length} frames a scene needs")

  planar = [a for a in range(3) if a != skel.up_axis]
  centred = []
  for group in chosen:
    arr = np.stack([t.frames[:length] for t in group])
    centre = arr[:, 0, skel.root_index].mean(axis=0)
    shift = np.zeros(3)
    shift[planar] = centre[planar]
    centred.append(arr - shift)

  for attempt in range(1, cfg.max_rejection_tries + 1):
    placed = []
    for arr in centred:
      radius = cfg.placement_radius * np.sqrt(rng.random())
      angle = 2 * np.pi * rng.random()
      offset = np.zeros(3)
      offset[planar] = radius * np.cos(angle), radius * np.sin(angle)
      placed.append(arr + offset)
    scene = np.concatenate(placed, axis=0)
    if collision_free(scene, cfg.min_pair_distance, skel):
      if attempt > cfg.max_rejection_tries / 2:
        logging.warning(f"scene accepted after {attempt - 1} rejected placements")
      return Scene(tuple(Track(p, fps) for p in scene), cfg.history_len, cfg.future_len)
    logging.debug(f"placement {attempt} rejected: roots closer than {cfg.min_pair_distance} m")
  raise SynthesisError(msg=f"no collision-free placement after {cfg.max_rejection_tries} tries")


def mix_scenes(groups:Sequence[ClipGroup], cfg:SceneSynthConfig, count:int,
               rng:Optional[np.random.Generator]=None) -> list[Scene]:
  """
    count scenes of cfg.persons_per_scene persons drawn from a shuffled group pool.
    Scene i uses its own stream seeded by (rng_seed, i).
  """
  if not groups:
    raise SynthesisError(msg="no clip groups to mix")
  seed = cfg.rng_seed if rng is None else int(rng.integers(2 ** 62))
  scenes = []
  for i in range(count):
    scene_rng = np.random.default_rng([seed, i])
    order = scene_rng.permutation(len(groups))
    scenes.append(synthesize_scene([groups[j] for j in order], cfg, scene_rng))
  logging.info(f"synthesized {count} scenes of {cfg.persons_per_scene} persons")
  return scenes
