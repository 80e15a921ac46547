import numpy as np
from dual_level_forecaster.mytypes import ShapeError, SkeletonSpec

FOOT_DISTANCE = 0.05     # m
FOOT_SPEED = 0.075       # m/s
COLLISION_DISTANCE = 0.2  # m


def ground_height(history:np.ndarray, skel:SkeletonSpec) -> float:
  """Lowest foot height over a (..., T, V, 3) history window."""
  feet = np.asarray(history)[..., list(skel.foot_indices), skel.up_axis]
  return float(feet.min())


def fsr(track:np.ndarray, skel:SkeletonSpec, ground:float, dist_thresh:float=FOOT_DISTANCE,
        speed_thresh:float=FOOT_SPEED, fps:float=15.0) -> float:
  """
    Foot skating ratio of one (T, V, 3) track over its T-1 frame intervals: both feet
    within dist_thresh of the ground at the interval's end and both moving at
    speed_thresh or faster.
  """
  track = np.asarray(track, dtype=np.float64)
  if track.ndim != 3 or track.shape[-1] != 3:
    raise ShapeError(msg=f"fsr: track must be (T, V, 3), got {track.shape}")
  if len(track) < 2:
    return 0.0
  feet = track[:, list(skel.foot_indices)]                       # (T, F, 3)
  speed = np.linalg.norm(np.diff(feet, axis=0), axis=-1) * fps   # (T-1, F)
  low = np.abs(feet[1:, :, skel.up_axis] - ground) <= dist_thresh   # (T-1, F), either side of the ground
  skating = np.all(low & (speed >= speed_thresh), axis=1)
  return float(skating.mean())


def mean_fsr(predictions:np.ndarray, skel:SkeletonSpec, ground:float, fps:float=15.0, **thresholds) -> float:
  pred = np.asarray(predictions, dtype=np.float64)
  ratios = [fsr(pred[m, n], skel, ground, fps=fps, **thresholds)
            for m in range(pred.shape[0]) for n in range(pred.shape[1])]
  return float(np.mean(ratios))


def tcr(predictions:np.ndarray, skel:SkeletonSpec, collision_dist:float=COLLISION_DISTANCE) -> float:
  """Mean over predictions of the fraction of frames where any two persons' roots are closer than collision_dist."""
  pred = np.asarray(predictions, dtype=np.float64)
  if pred.ndim != 5:
    raise ShapeError(msg=f"tcr: predictions must be (M, N, T, V, 3), got {pred.shape}")
  n = pred.shape[1]
  if n < 2:
    return 0.0
  roots = pred[:, :, :, skel.root_index]                          # (M, N, T, 3)
  first, second = np.triu_indices(n, k=1)
  dist = np.linalg.norm(roots[:, first] - roots[:, second], axis=-1)   # (M, P, T)
  colliding = (dist < collision_dist).any(axis=1)                  # (M, T)
  return float(colliding.mean(axis=1).mean())


def ahd(predictions:np.ndarray) -> float:
  """Mean distance between each prediction's last and first predicted pose."""
  pred = np.asarray(predictions, dtype=np.float64)
  if pred.ndim != 5:
    raise ShapeError(msg=f"ahd: predictions must be (M, N, T, V, 3), got {pred.shape}")
  moved = pred[:, :, -1] - pred[:, :, 0]
  return float(np.sqrt((moved ** 2).sum(axis=(-2, -1))).mean())
