"""
  Rigid alignment of two point sets (orthogonal Procrustes with reflection fix).
"""
import numpy as np
from dual_level_forecaster.mytypes import ShapeError

DEGENERATE_SPREAD = 1e-12


def _check(a:np.ndarray, b:np.ndarray):
  if a.shape != b.shape or a.ndim != 2 or a.shape[1] != 3:
    raise ShapeError(msg=f"kabsch_align: poses must both be (V, 3), got {a.shape} and {b.shape}")


def _proper_rotation(h:np.ndarray) -> np.ndarray:
  """Proper rotation R minimising sum ||R b_i - a_i||^2, given H = B^T A (batched over leading axes)."""
  u, _, vt = np.linalg.svd(h)
  d = np.sign(np.linalg.det(vt.swapaxes(-1, -2) @ u.swapaxes(-1, -2)))
  d = np.where(d == 0, 1.0, d)
  fix = np.zeros(h.shape[:-2] + (3, 3))
  fix[..., 0, 0] = 1.0
  fix[..., 1, 1] = 1.0
  fix[..., 2, 2] = d
  return vt.swapaxes(-1, -2) @ fix @ u.swapaxes(-1, -2)


def kabsch_align(pose_a:np.ndarray, pose_b:np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
  """
    Align pose_b onto pose_a. Returns (R, T, residual) with R proper (det +1) such that
    R @ (b - T) ~ a for every point, and residual = ||R (B - T) - A||_F.
    Coincident point sets give the identity rotation.
  """
  a = np.asarray(pose_a, dtype=np.float64)
  b = np.asarray(pose_b, dtype=np.float64)
  _check(a, b)
  ca, cb = a.mean(axis=0), b.mean(axis=0)
  ac, bc = a - ca, b - cb
  if np.abs(ac).max() < DEGENERATE_SPREAD or np.abs(bc).max() < DEGENERATE_SPREAD:
    rot = np.eye(3)
  else:
    rot = _proper_rotation(bc.T @ ac)
  trans = cb - rot.T @ ca
  aligned = (b - trans) @ rot.T
  return rot, trans, float(np.linalg.norm(aligned - a))


def kabsch_residuals(pose_a:np.ndarray, poses_b:np.ndarray, centre:bool=True) -> np.ndarray:
  """
    Batched alignment residuals of every poses_b[k] onto pose_a, (K,).
    centre=False aligns by rotation about the origin only (inputs already root-relative).
  """
  a = np.asarray(pose_a, dtype=np.float64)
  bs = np.asarray(poses_b, dtype=np.float64)
  if bs.ndim != 3 or bs.shape[1:] != a.shape:
    raise ShapeError(msg=f"kabsch_residuals: expected (K, {a.shape[0]}, 3) poses, got {bs.shape}")
  if centre:
    a = a - a.mean(axis=0)
    bs = bs - bs.mean(axis=1, keepdims=True)
  if not len(bs):
    return np.zeros(0)
  rot = _proper_rotation(np.einsum('kvi,vj->kij', bs, a))
  degenerate = (np.abs(bs).max(axis=(1, 2)) < DEGENERATE_SPREAD) | (np.abs(a).max() < DEGENERATE_SPREAD)
  rot[degenerate] = np.eye(3)
  aligned = np.einsum('kij,kvj->kvi', rot, bs)
  return np.linalg.norm((aligned - a[None]).reshape(len(bs), -1), axis=1)
