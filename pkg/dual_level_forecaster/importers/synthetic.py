"""
  Procedural multi-person walking scenes.

  Every person walks a straight or curved root path while limbs swing
  sinusoidally around the rest pose; limb offsets are only ever rotated, so limb
  lengths stay fixed unless `joint_noise` adds Gaussian sensor noise on top.
  Scenes come in families of `branches` members that share the same history;
  after the history the whole scene turns with a branch-specific curvature,
  giving several plausible futures per history.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, asdict
from typing import Optional
import numpy as np
from scipy.spatial.transform import Rotation
from dual_level_forecaster.mytypes import ConfigError, Scene, Track
from dual_level_forecaster.core.skeleton import CANONICAL_SKELETON, REST_OFFSETS, REST_PELVIS_HEIGHT, traversal_order

FAMILIES = ('straight', 'curved')

# swing phase per limb edge; edges not listed keep their rest direction
SWING_PHASE = {
  (1, 2): 0.0, (2, 3): 0.0,
  (4, 5): np.pi, (5, 6): np.pi,
  (9, 10): np.pi, (10, 11): np.pi,
  (12, 13): 0.0, (13, 14): 0.0,
}


@dataclass
class SyntheticSpec:
  persons:int = 2
  scene_count:int = 16
  history_len:int = 45
  future_len:int = 45
  fps:float = 15.0
  speed:float = 1.2              # m/s
  speed_jitter:float = 0.2
  amplitude:float = 0.35         # rad
  frequency:float = 1.0          # Hz
  curvature:float = 0.3          # 1/m, curved family
  branch_curvature:float = 0.6   # 1/m, applied after the history
  branches:int = 2
  person_spacing:float = 1.5     # m
  joint_noise:float = 0.0        # m, per-coordinate sensor noise, shared within a family
  families:tuple[str, ...] = FAMILIES
  seed:int = 0

  def __post_init__(self):
    self.families = tuple(self.families)
    if self.persons < 1 or self.scene_count < 1 or self.branches < 1:
      raise ConfigError(msg="persons, scene_count and branches must be >= 1", key='synthetic')
    if self.history_len < 1 or self.future_len < 1 or not self.fps > 0:
      raise ConfigError(msg="history_len, future_len and fps must be positive", key='synthetic')
    if min(self.speed, self.speed_jitter, self.amplitude, self.frequency, self.person_spacing,
           self.joint_noise) < 0:
      raise ConfigError(msg="motion parameters must be >= 0", key='synthetic')
    bad = [f for f in self.families if f not in FAMILIES]
    if bad or not self.families:
      raise ConfigError(msg=f"families must be drawn from {FAMILIES}, got {list(self.families)}", key='synthetic')

  @classmethod
  def from_dict(cls, data:dict) -> "SyntheticSpec":
    unknown = set(data) - set(cls.__dataclass_fields__)
    if unknown:
      raise ConfigError(msg=f"unknown keys {sorted(unknown)}", key='synthetic')
    return cls(**data)

  def to_dict(self) -> dict:
    data = asdict(self)
    data['families'] = list(self.families)
    return data


def _branch_curvature(spec:SyntheticSpec, branch:int) -> float:
  if spec.branches == 1:
    return 0.0
  return spec.branch_curvature * (2.0 * branch / (spec.branches - 1) - 1.0)


def _walk(spec:SyntheticSpec, start:np.ndarray, heading0:float, speed:float, curvature:float,
          phase0:float, branch_curv:float) -> np.ndarray:
  """(T, V, 3) track of one person."""
  total = spec.history_len + spec.future_len
  dt = 1.0 / spec.fps
  # heading rate is speed * curvature, so a person standing still never turns
  curv = np.where(np.arange(total) < spec.history_len, curvature, curvature + branch_curv)
  heading = heading0 + np.concatenate([[0.0], np.cumsum(speed * curv[:-1] * dt)])
  step = speed * dt * np.stack([np.sin(heading), np.zeros(total), np.cos(heading)], axis=1)
  roots = start + np.concatenate([np.zeros((1, 3)), np.cumsum(step[:-1], axis=0)])
  roots[:, CANONICAL_SKELETON.up_axis] = REST_PELVIS_HEIGHT

  phase = phase0 + 2 * np.pi * spec.frequency * np.arange(total) * dt
  facing = Rotation.from_euler('y', heading)
  frames = np.zeros((total, CANONICAL_SKELETON.joint_count, 3))
  frames[:, CANONICAL_SKELETON.root_index] = roots
  for parent, child in traversal_order(CANONICAL_SKELETON):
    offset = np.asarray(REST_OFFSETS[(parent, child)], dtype=np.float64)
    if (parent, child) in SWING_PHASE:
      swing = Rotation.from_euler('x', spec.amplitude * np.sin(phase + SWING_PHASE[(parent, child)]))
      offset = swing.apply(offset)
    frames[:, child] = frames[:, parent] + facing.apply(offset)
  return frames


def _family(spec:SyntheticSpec, family:int) -> list[Scene]:
  rng = np.random.default_rng([spec.seed, family])
  kind = spec.families[int(rng.integers(len(spec.families)))]
  heading0 = rng.uniform(-np.pi, np.pi)
  side = np.array([np.cos(heading0), 0.0, -np.sin(heading0)])
  people = []
  for n in range(spec.persons):
    lateral = (n - (spec.persons - 1) / 2.0) * spec.person_spacing
    people.append(dict(
      start=side * lateral,
      heading0=heading0 + rng.normal(0.0, 0.1),
      speed=spec.speed + spec.speed_jitter * rng.uniform(-1.0, 1.0) if spec.speed > 0 else 0.0,
      curvature=rng.uniform(-spec.curvature, spec.curvature) if kind == 'curved' else 0.0,
      phase0=rng.uniform(0.0, 2 * np.pi),
    ))
  total = spec.history_len + spec.future_len
  noise = np.zeros((spec.persons, total, CANONICAL_SKELETON.joint_count, 3))
  if spec.joint_noise > 0:
    # own stream, so the noise-free scenes are unchanged
    noise = np.random.default_rng([spec.seed, family, 1]).normal(0.0, spec.joint_noise, noise.shape)
  scenes = []
  for branch in range(spec.branches):
    curv = _branch_curvature(spec, branch)
    tracks = tuple(Track(_walk(spec, branch_curv=curv, **p) + noise[n], spec.fps) for n, p in enumerate(people))
    scenes.append(Scene(tracks, spec.history_len, spec.future_len))
  return scenes


def synthetic_dataset(spec:SyntheticSpec, rng:Optional[np.random.Generator]=None, threads:int=1) -> list[Scene]:
  """
    spec.scene_count scenes (rounded up to whole families). Family k is drawn from
    the stream seeded by (seed, k), so threads only change scheduling.
  """
  if rng is not None:
    spec = SyntheticSpec.from_dict({**spec.to_dict(), 'seed': int(rng.integers(2 ** 62))})
  families = -(-spec.scene_count // spec.branches)
  if threads > 1:
    with ThreadPoolExecutor(max_workers=threads) as pool:
      groups = list(pool.map(lambda k: _family(spec, k), range(families)))
  else:
    groups = [_family(spec, k) for k in range(families)]
  scenes = [scene for group in groups for scene in group][:spec.scene_count]
  logging.info(f"generated {len(scenes)} synthetic scenes ({families} families, "
               f"{spec.branches} branches, {spec.persons} persons)")
  return scenes
