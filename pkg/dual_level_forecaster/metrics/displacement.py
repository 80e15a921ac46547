"""
  Accuracy and diversity metrics.

  predictions: (M, N, T, V, 3), ground truth: (N, T, V, 3). The distance between two
  poses is the Frobenius norm over the V x 3 matrix; for root trajectories (V = 1)
  this is the plain 3-D distance.
"""
import numpy as np
from dual_level_forecaster.mytypes import ShapeError, SkeletonSpec


def _check(predictions:np.ndarray, gt:np.ndarray|None=None) -> tuple[np.ndarray, np.ndarray|None]:
  pred = np.asarray(predictions, dtype=np.float64)
  if pred.ndim != 5 or pred.shape[-1] != 3 or pred.shape[0] < 1:
    raise ShapeError(msg=f"metrics: predictions must be (M, N, T, V, 3), got {pred.shape}")
  if gt is None:
    return pred, None
  gt = np.asarray(gt, dtype=np.float64)
  if gt.shape != pred.shape[1:]:
    raise ShapeError(msg=f"metrics: ground truth {gt.shape} vs predictions {pred.shape}")
  return pred, gt


def frame_errors(predictions:np.ndarray, gt:np.ndarray) -> np.ndarray:
  """Per-frame pose distance, (M, N, T)."""
  pred, gt = _check(predictions, gt)
  diff = pred - gt[None]
  return np.sqrt((diff ** 2).sum(axis=(-2, -1)))


def ade_fde(predictions:np.ndarray, gt:np.ndarray) -> tuple[float, float]:
  """Best-of-M with one winner for the whole scene (chosen separately for ADE and FDE)."""
  err = frame_errors(predictions, gt)
  ade = err.mean(axis=(1, 2)).min()
  fde = err[:, :, -1].mean(axis=1).min()
  return float(ade), float(fde)


def lade_lfde(predictions:np.ndarray, gt:np.ndarray) -> tuple[float, float]:
  """Best-of-M with an independent winner per person."""
  err = frame_errors(predictions, gt)
  lade = err.mean(axis=2).min(axis=0).mean()
  lfde = err[:, :, -1].min(axis=0).mean()
  return float(lade), float(lfde)


def fpd(predictions:np.ndarray) -> float:
  """
    sum over persons and unordered pairs m < k of final-pose distances,
    divided by N * M * (M - 1). Zero for M = 1.
  """
  pred, _ = _check(predictions)
  m, n = pred.shape[:2]
  if m < 2:
    return 0.0
  final = pred[:, :, -1]                                   # (M, N, V, 3)
  first, second = np.triu_indices(m, k=1)
  dist = np.sqrt(((final[first] - final[second]) ** 2).sum(axis=(-2, -1)))
  return float(dist.sum() / (n * m * (m - 1)))


def split_root(arr:np.ndarray, skel:SkeletonSpec) -> tuple[np.ndarray, np.ndarray]:
  """(..., T, V, 3) -> root trajectory (..., T, 1, 3) and root-relative pose (..., T, V, 3)."""
  root = arr[..., skel.root_index:skel.root_index + 1, :]
  return root, arr - root


def aligned_variants(predictions:np.ndarray, gt:np.ndarray, skel:SkeletonSpec) -> dict[str, float]:
  pred, gt = _check(predictions, gt)
  pred_root, pred_pose = split_root(pred, skel)
  gt_root, gt_pose = split_root(gt, skel)
  root_ade, root_fde = ade_fde(pred_root, gt_root)
  pose_ade, pose_fde = ade_fde(pred_pose, gt_pose)
  return {
    "rootADE": root_ade, "rootFDE": root_fde,
    "poseADE": pose_ade, "poseFDE": pose_fde,
    "rootFPD": fpd(pred_root), "poseFPD": fpd(pred_pose),
  }
