import logging
from dataclasses import dataclass
from typing import Sequence
import numpy as np
from dual_level_forecaster.mytypes import Scene, UsageError

HISTORY_LENGTHS = (15, 30, 45)


@dataclass
class Batch:
  history:np.ndarray                    # (B, N, T_h, V, 3)
  future:np.ndarray                     # (B, N, T_p, V, 3)
  windows:list[tuple[int, int]]         # (scene index, window start)

  @property
  def size(self) -> int:
    return self.history.shape[0]

  @property
  def person_count(self) -> int:
    return self.history.shape[1]

  @property
  def history_len(self) -> int:
    return self.history.shape[2]

  def target_residuals(self) -> np.ndarray:
    """Future residuals anchored at the last history pose, (B, N, T_p, V, 3)."""
    joined = np.concatenate([self.history[:, :, -1:], self.future], axis=2)
    return np.diff(joined, axis=2)

  def pseudo_keys(self) -> list[list[tuple[int, int, int]]]:
    """Pool keys (scene, person, last history frame) per batch entry and person."""
    t_h = self.history_len
    return [[(s, n, start + t_h - 1) for n in range(self.person_count)] for s, start in self.windows]


class WindowSampler:
  """
    Crops (history, future) windows with stride 1 from full scene tracks.
    Scenes are bucketed by person count; one batch never mixes counts.
  """

  def __init__(self, scenes:Sequence[Scene], future_len:int=15,
               history_lens:Sequence[int]=HISTORY_LENGTHS):
    if not scenes:
      raise UsageError(msg="training needs at least one scene")
    self.arrays = [s.as_array() for s in scenes]
    self.future_len = future_len
    self.history_lens = tuple(sorted(history_lens))
    self.length = min(a.shape[1] for a in self.arrays)
    self.feasible = tuple(h for h in self.history_lens if h + future_len <= self.length)
    if not self.feasible:
      raise UsageError(msg=f"scenes of {self.length} frames cannot hold any history length "
                           f"{self.history_lens} plus {future_len} future frames")
    buckets: dict[int, list[int]] = {}
    for i, arr in enumerate(self.arrays):
      buckets.setdefault(arr.shape[0], []).append(i)
    self.buckets = {n: np.asarray(ids) for n, ids in sorted(buckets.items())}
    logging.info(f"Window sampler: {len(self.arrays)} scenes, history lengths {self.feasible}, "
                 f"person counts {sorted(self.buckets)}")

  def sample(self, rng:np.random.Generator, batch_size:int) -> Batch:
    t_h = int(self.feasible[rng.integers(len(self.feasible))])
    first = int(rng.integers(len(self.arrays)))
    bucket = self.buckets[self.arrays[first].shape[0]]
    span = t_h + self.future_len
    chosen = bucket[rng.integers(len(bucket), size=batch_size)]
    windows = []
    hist, fut = [], []
    for s in chosen:
      arr = self.arrays[int(s)]
      start = int(rng.integers(arr.shape[1] - span + 1))
      windows.append((int(s), start))
      hist.append(arr[:, start:start + t_h])
      fut.append(arr[:, start + t_h:start + span])
    return Batch(np.stack(hist), np.stack(fut), windows)
