"""
  Pseudo futures: dataset continuations whose start pose matches a history's end pose.

  Every (scene, person, end frame) with a full future window after it is a pool
  entry; the pool is subsampled by `stride`. A query collects the ground-truth
  future first, then every other pool entry whose root-relative start pose is within
  eps of the query pose after rotation alignment, closest first, capped at max_pseudo.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional
import numpy as np
from dual_level_forecaster.mytypes import UsageError
from dual_level_forecaster.objectives.kabsch import kabsch_residuals

PoolKey = tuple[int, int, int]   # (scene index, person index, end frame)


def future_residuals(track:np.ndarray, end:int, future_len:int) -> np.ndarray:
  """Residuals of frames end+1 .. end+future_len anchored at frame end, (T_p, V, 3)."""
  window = track[end:end + future_len + 1]
  return np.diff(window, axis=0)


@dataclass
class PseudoFutureSet:
  eps:float
  future_len:int
  entries:dict[PoolKey, np.ndarray] = field(default_factory=dict)

  def __len__(self):
    return len(self.entries)

  def get(self, key:PoolKey) -> np.ndarray:
    return self.entries[key]


class PseudoFutureIndex:
  """Lazy per-key lookup with a cache; `scenes` are (N, T, V, 3) arrays."""

  def __init__(self, scenes:list[np.ndarray], future_len:int, eps:float,
               root_index:int=0, stride:int=1, max_pseudo:Optional[int]=None):
    if future_len < 1:
      raise UsageError(msg=f"future_len must be >= 1, got {future_len}")
    self.scenes = [np.asarray(s, dtype=np.float64) for s in scenes]
    self.future_len = future_len
    self.eps = eps
    self.root_index = root_index
    self.max_pseudo = max_pseudo
    self._cache: dict[PoolKey, np.ndarray] = {}

    keys, poses, futures = [], [], []
    for s, scene in enumerate(self.scenes):
      n_persons, length = scene.shape[:2]
      for n in range(n_persons):
        for end in range(0, length - future_len, stride):
          keys.append((s, n, end))
          poses.append(self._start_pose(scene[n, end]))
          futures.append(future_residuals(scene[n], end, future_len))
    self.keys: list[PoolKey] = keys
    self._key_pos = {k: i for i, k in enumerate(keys)}
    v = self.scenes[0].shape[2] if self.scenes else 0
    self.poses = np.asarray(poses).reshape(len(keys), v, 3)
    self.futures = np.asarray(futures).reshape(len(keys), future_len, v, 3)
    logging.info(f"Pseudo-future pool: {len(keys)} entries from {len(self.scenes)} scenes (stride {stride})")

  def _start_pose(self, pose:np.ndarray) -> np.ndarray:
    return pose - pose[self.root_index]

  def lookup(self, key:PoolKey) -> np.ndarray:
    """(P, T_p, V, 3) residual stack, ground truth first."""
    cached = self._cache.get(key)
    if cached is not None:
      return cached
    s, n, end = key
    track = self.scenes[s][n]
    if end + self.future_len >= len(track):
      raise UsageError(msg=f"no full future window after frame {end}", key=str(key))
    own = future_residuals(track, end, self.future_len)
    picked = [own]
    if len(self.keys):
      dist = kabsch_residuals(self._start_pose(track[end]), self.poses, centre=False)
      ok = dist <= self.eps
      own_pos = self._key_pos.get(key)
      if own_pos is not None:
        ok[own_pos] = False
      candidates = np.flatnonzero(ok)
      candidates = candidates[np.argsort(dist[candidates], kind='stable')]
      if self.max_pseudo is not None:
        candidates = candidates[:max(self.max_pseudo - 1, 0)]
      picked.extend(self.futures[candidates])
    result = np.stack(picked)
    self._cache[key] = result
    return result


def build_pseudo_futures(scenes:list[np.ndarray], future_len:int, eps:float, root_index:int=0,
                         stride:int=1, max_pseudo:Optional[int]=None) -> PseudoFutureSet:
  """Pseudo-future stacks for every pool entry of the dataset."""
  index = PseudoFutureIndex(scenes, future_len, eps, root_index, stride, max_pseudo)
  out = PseudoFutureSet(eps=eps, future_len=future_len)
  for key in index.keys:
    out.entries[key] = index.lookup(key)
  return out
