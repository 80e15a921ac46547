"""
  Inference with global-mode intents only.

  forecast_progressive grows a tree: every branch of step k-1 is extended by M
  scene-consistent predictions, giving M, M^2, ... branches. Each expansion draws
  from its own rng, seeded from one base draw plus the branch's slot path, so the
  result does not depend on the order (or thread) branches are evaluated in.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Union
import numpy as np
from dual_level_forecaster.mytypes import PredictionSet, UsageError, ShapeError, SkeletonSpec
from dual_level_forecaster.core.skeleton import CANONICAL_SKELETON
from dual_level_forecaster.gradcore import ops
from dual_level_forecaster.gradcore.tensor import Tensor
from dual_level_forecaster.model import layers
from dual_level_forecaster.model.layers import Params
from dual_level_forecaster.model.predictor import PredictorConfig, forward_batch
from dual_level_forecaster.model.intents import Codebook, sample_global
from dual_level_forecaster.training.checkpoint import Checkpoint
from dual_level_forecaster.utils.environment import ConfigManager, ConfigKeys

MAX_HISTORY = 45


@dataclass
class ForecastModel:
  """Frozen generator and codebook taken from a checkpoint."""
  params:Params
  config:PredictorConfig
  codebook:Codebook
  max_history:int = MAX_HISTORY
  skeleton:SkeletonSpec = CANONICAL_SKELETON

  @classmethod
  def from_checkpoint(cls, checkpoint:Checkpoint) -> "ForecastModel":
    config = PredictorConfig.from_dict(checkpoint.config.get('predictor', {}))
    history_lens = checkpoint.config.get('training', {}).get('history_lens') or [MAX_HISTORY]
    codebook = Codebook(Tensor(np.array(checkpoint.codebook), name='intent.codebook'))
    return cls(layers.from_arrays(checkpoint.predictor, requires_grad=False), config, codebook,
               max_history=int(max(history_lens)))


ModelSource = Union[Checkpoint, ForecastModel]


def _model(source:ModelSource) -> ForecastModel:
  return source if isinstance(source, ForecastModel) else ForecastModel.from_checkpoint(source)


def _check_history(history:np.ndarray, model:ForecastModel) -> np.ndarray:
  history = np.asarray(history, dtype=np.float64)
  if history.ndim != 4 or history.shape[-2:] != (model.config.joint_count, 3) or history.shape[1] < 1:
    raise ShapeError(msg=f"forecast: history must be (N, T_h, {model.config.joint_count}, 3), got {history.shape}")
  return history


def _predict(model:ForecastModel, history:np.ndarray, m:int, rng:np.random.Generator) -> tuple[np.ndarray, tuple]:
  recent = history[:, -model.max_history:]
  intents = sample_global(model.codebook, m, recent.shape[0], rng)
  codes = ops.reshape(intents.combined, (1,) + intents.combined.shape)
  _, absolute = forward_batch(recent[None], codes, model.params, model.config, model.skeleton.root_index)
  return absolute.data[0], intents.source_intents()


def forecast_window(history:np.ndarray, checkpoint:ModelSource, m:int, rng:np.random.Generator,
                    fps:float=15.0) -> PredictionSet:
  """M global-mode predictions of T_p frames for an (N, T_h, V, 3) history."""
  model = _model(checkpoint)
  history = _check_history(history, model)
  predictions, sources = _predict(model, history, m, rng)
  return PredictionSet(predictions, sources, fps)


@dataclass
class Branch:
  intent_path:tuple[int, ...]        # shared codebook index chosen at each step
  slot_path:tuple[int, ...]          # position among siblings at each step
  tracks:np.ndarray                  # (N, T_h + k*T_p, V, 3)
  parent:Optional["Branch"] = field(default=None, repr=False)


@dataclass
class RolloutTree:
  history_len:int
  future_len:int
  m:int
  fps:float
  levels:list[list[Branch]] = field(default_factory=list)

  @property
  def steps(self) -> int:
    return len(self.levels)

  def branch_count(self, step:int) -> int:
    return len(self.levels[step - 1])

  def final(self) -> list[Branch]:
    return self.levels[-1]

  def horizon_candidates(self, step:int) -> np.ndarray:
    """Predicted frames of every step-k branch, (M^k, N, k*T_p, V, 3)."""
    if not 1 <= step <= self.steps:
      raise UsageError(msg=f"horizon {step} outside 1..{self.steps}")
    end = self.history_len + step * self.future_len
    return np.stack([b.tracks[:, self.history_len:end] for b in self.levels[step - 1]])

  def history(self) -> np.ndarray:
    return self.levels[0][0].tracks[:, :self.history_len]

  def to_dict(self) -> dict:
    return {
      "history_len": self.history_len,
      "future_len": self.future_len,
      "fps": self.fps,
      "steps": self.steps,
      "M": self.m,
      "branches": [{"intent_path": list(b.intent_path),
                    "persons": [{"frames": person.tolist()} for person in b.tracks]}
                   for b in self.final()],
    }

  @classmethod
  def from_dict(cls, data:dict) -> "RolloutTree":
    """Rebuild all levels from the final-level branches by grouping intent-path prefixes."""
    try:
      t_h, t_p = int(data["history_len"]), int(data["future_len"])
      steps, m = int(data["steps"]), int(data["M"])
      finals = [(tuple(b["intent_path"]), np.asarray([p["frames"] for p in b["persons"]], dtype=np.float64))
                for b in data["branches"]]
    except (KeyError, TypeError) as err:
      raise ShapeError(msg=f"prediction file missing field {err}")
    tree = cls(t_h, t_p, m, float(data.get("fps", 15.0)))
    parents: dict[tuple, Branch] = {}
    for k in range(1, steps + 1):
      level: list[Branch] = []
      seen: dict[tuple, Branch] = {}
      for path, tracks in finals:
        prefix = path[:k]
        if prefix in seen:
          continue
        if tracks.shape[1] < t_h + k * t_p:
          raise ShapeError(msg=f"branch {list(path)} has {tracks.shape[1]} frames, need {t_h + steps * t_p}")
        branch = Branch(prefix, (), tracks[:, :t_h + k * t_p], parents.get(prefix[:-1]))
        seen[prefix] = branch
        level.append(branch)
      parents = seen
      tree.levels.append(level)
    return tree


def forecast_progressive(history:np.ndarray, checkpoint:ModelSource, m:int, steps:int,
                         rng:np.random.Generator, fps:float=15.0, max_branches:Optional[int]=None,
                         threads:int=1) -> RolloutTree:
  if steps < 1:
    raise UsageError(msg=f"steps must be >= 1, got {steps}")
  if m < 1:
    raise UsageError(msg=f"M must be >= 1, got {m}")
  cap = max_branches if max_branches is not None else ConfigManager.get_int(ConfigKeys.DUMMF_MAX_BRANCHES)
  if m ** steps > cap:
    raise UsageError(msg=f"{m}^{steps} = {m ** steps} branches exceeds the cap of {cap}")
  model = _model(checkpoint)
  history = _check_history(history, model)
  t_p = model.config.future_len
  base = None

  def expand(parent:Branch, branch_rng:Optional[np.random.Generator]=None) -> list[Branch]:
    # step 1 consumes the caller's rng, so one step equals forecast_window
    if branch_rng is None:
      branch_rng = np.random.default_rng([base, *parent.slot_path])
    predictions, sources = _predict(model, parent.tracks, m, branch_rng)
    return [Branch(parent.intent_path + (sources[i][0],), parent.slot_path + (i,),
                   np.concatenate([parent.tracks, predictions[i]], axis=1), parent)
            for i in range(m)]

  root = Branch((), (), history)
  tree = RolloutTree(history.shape[1], t_p, m, fps)
  frontier = [root]
  with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
    for step in range(1, steps + 1):
      if step == 1:
        children = [expand(root, rng)]
        base = int(rng.integers(2 ** 62))
      elif threads > 1:
        children = list(pool.map(expand, frontier))
      else:
        children = [expand(b) for b in frontier]
      frontier = [child for group in children for child in group]
      tree.levels.append(frontier)
      logging.debug(f"rollout step {step}: {len(frontier)} branches")
  return tree
