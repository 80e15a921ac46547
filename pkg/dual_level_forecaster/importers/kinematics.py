"""
  Forward kinematics for ASF/AMC data.

  Each bone has a local frame C built from its ASF axis angles. A frame's
  channel values give a rotation M in that local frame, so the bone's global
  rotation is parent_R . C . M . C^-1 and its end sits at
  parent_end + length * R . direction. Lengths and root translation are divided
  by the ASF length unit.
"""
from dataclasses import dataclass
import numpy as np
from scipy.spatial.transform import Rotation
from dual_level_forecaster.mytypes import ShapeError
from dual_level_forecaster.importers.asf import AsfSkeleton, ROOT, ROTATION_DOFS
from dual_level_forecaster.importers.amc import AmcClip


@dataclass(frozen=True)
class RawTrack:
  """Joint positions in source naming, (T, J, 3)."""
  joint_names:tuple[str, ...]
  positions:np.ndarray
  fps:float

  def joint(self, name:str) -> np.ndarray:
    return self.positions[:, self.joint_names.index(name)]


def _euler(order:str, angles:np.ndarray) -> Rotation:
  """Extrinsic rotations applied in `order`; an empty order is the identity."""
  if not order:
    return Rotation.identity(angles.shape[0])
  return Rotation.from_euler(order, angles)


def _channels(clip:AmcClip, bone:str, count:int) -> np.ndarray:
  return np.stack([frame.get(bone, np.zeros(count)) for frame in clip.frames])


def forward_kinematics(skel:AsfSkeleton, clip:AmcClip) -> RawTrack:
  if len(clip) == 0:
    raise ShapeError(msg="forward kinematics needs at least one frame")
  to_rad = np.deg2rad if clip.degrees else (lambda a: a)
  scale = 1.0 / skel.units.length
  frames = len(clip)

  order = skel.root.order
  root_values = _channels(clip, ROOT, len(order))
  translation = np.zeros((frames, 3))
  rot_order, rot_values = '', []
  for c, channel in enumerate(order):
    axis = 'xyz'.index(channel[1])
    if channel[0] == 't':
      translation[:, axis] = root_values[:, c]
    else:
      rot_order += channel[1]
      rot_values.append(root_values[:, c])
  root_c = Rotation.from_euler(skel.root.axis_order, skel.root.orientation)
  root_m = _euler(rot_order, to_rad(np.stack(rot_values, axis=1)) if rot_values else np.zeros((frames, 0)))
  rotations = {ROOT: root_c * root_m * root_c.inv()}
  positions = {ROOT: translation * scale}

  for name in skel.traversal():
    bone = skel.bones[name]
    parent = skel.parents[name]
    dofs = [d for d in bone.dof if d in ROTATION_DOFS]
    values = _channels(clip, name, len(bone.dof))
    angles = np.stack([values[:, bone.dof.index(d)] for d in dofs], axis=1) if dofs \
      else np.zeros((frames, 0))
    c = Rotation.from_euler(bone.axis_order, bone.axis)
    m = _euler(''.join(d[1] for d in dofs), to_rad(angles))
    rotations[name] = rotations[parent] * c * m * c.inv()
    offset = rotations[name].apply(bone.direction * bone.length * scale)
    positions[name] = positions[parent] + offset

  names = (ROOT,) + tuple(skel.traversal())
  stacked = np.stack([positions[n] for n in names], axis=1)
  return RawTrack(names, stacked, clip.fps)
