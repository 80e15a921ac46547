import logging
from dataclasses import dataclass, asdict
from typing import Mapping
import numpy as np
import pandas as pd
from dual_level_forecaster.mytypes import ConfigError, ShapeError, SkeletonSpec
from dual_level_forecaster.core.skeleton import CANONICAL_SKELETON
from dual_level_forecaster.forecasting.rollout import RolloutTree
from dual_level_forecaster.metrics.displacement import ade_fde, lade_lfde, fpd, aligned_variants
from dual_level_forecaster.metrics.fidelity import (ground_height, mean_fsr, tcr, ahd,
                                                    FOOT_DISTANCE, FOOT_SPEED, COLLISION_DISTANCE)


@dataclass
class MetricConfig:
  collision_dist:float = COLLISION_DISTANCE
  foot_dist:float = FOOT_DISTANCE
  foot_speed:float = FOOT_SPEED

  def __post_init__(self):
    if min(self.collision_dist, self.foot_dist, self.foot_speed) < 0:
      raise ConfigError(msg="metric thresholds must be >= 0", key='metrics')

  @classmethod
  def from_dict(cls, data:dict) -> "MetricConfig":
    unknown = set(data) - set(cls.__dataclass_fields__)
    if unknown:
      raise ConfigError(msg=f"unknown keys {sorted(unknown)}", key='metrics')
    return cls(**data)


@dataclass
class MetricReport:
  horizon_s:float
  candidates:int
  ade:float
  fde:float
  lade:float
  lfde:float
  fpd:float
  rootADE:float
  rootFDE:float
  poseADE:float
  poseFDE:float
  rootFPD:float
  poseFPD:float
  fsr:float
  tcr:float
  ahd:float

  def metrics(self) -> dict[str, float]:
    return {k: v for k, v in asdict(self).items() if k not in ('horizon_s', 'candidates')}

  def to_dict(self) -> dict:
    return {"horizon_s": self.horizon_s, "candidates": self.candidates, "metrics": self.metrics()}

  @classmethod
  def from_dict(cls, data:dict) -> "MetricReport":
    return cls(horizon_s=data["horizon_s"], candidates=data["candidates"], **data["metrics"])


def score_candidates(candidates:np.ndarray, gt:np.ndarray, ground:float, horizon_s:float,
                     config:MetricConfig, skel:SkeletonSpec=CANONICAL_SKELETON, fps:float=15.0) -> MetricReport:
  ade, fde = ade_fde(candidates, gt)
  lade, lfde = lade_lfde(candidates, gt)
  return MetricReport(horizon_s=horizon_s, candidates=int(candidates.shape[0]),
                      ade=ade, fde=fde, lade=lade, lfde=lfde, fpd=fpd(candidates),
                      **aligned_variants(candidates, gt, skel),
                      fsr=mean_fsr(candidates, skel, ground, fps=fps,
                                   dist_thresh=config.foot_dist, speed_thresh=config.foot_speed),
                      tcr=tcr(candidates, skel, config.collision_dist),
                      ahd=ahd(candidates))


def evaluate(rollout:RolloutTree, gt_future:np.ndarray, config:MetricConfig|None=None,
             skel:SkeletonSpec=CANONICAL_SKELETON) -> list[MetricReport]:
  """
    One report per rollout step k: the M^k step-k branches against the first
    k*T_p ground-truth frames. gt_future is (N, >= steps*T_p, V, 3).
  """
  config = config or MetricConfig()
  gt_future = np.asarray(gt_future, dtype=np.float64)
  needed = rollout.steps * rollout.future_len
  if gt_future.ndim != 4 or gt_future.shape[1] < needed:
    raise ShapeError(msg=f"evaluate: ground truth needs (N, >= {needed}, V, 3), got {gt_future.shape}")
  ground = ground_height(rollout.history(), skel)
  reports = []
  for k in range(1, rollout.steps + 1):
    frames = k * rollout.future_len
    candidates = rollout.horizon_candidates(k)
    horizon_s = frames / rollout.fps
    reports.append(score_candidates(candidates, gt_future[:, :frames], ground, horizon_s,
                                    config, skel, rollout.fps))
    logging.debug(f"horizon {horizon_s:.1f}s: {candidates.shape[0]} candidates, ade={reports[-1].ade:.4f}")
  return reports


def reports_to_frame(reports:Mapping[str, list[MetricReport]]) -> pd.DataFrame:
  """One row per (scene, horizon)."""
  rows = [{"scene": scene, **asdict(r)} for scene, scene_reports in reports.items() for r in scene_reports]
  columns = ["scene"] + list(MetricReport.__dataclass_fields__)
  return pd.DataFrame(rows, columns=columns)
