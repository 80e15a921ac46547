"""
  Canonical 15-joint skeleton shared by ingestion, synthesis, training and metrics.

  Joint order (index: name):
     0 pelvis (root)     5 right_knee       10 left_elbow
     1 left_hip          6 right_ankle      11 left_wrist
     2 left_knee         7 neck             12 right_shoulder
     3 left_ankle        8 head             13 right_elbow
     4 right_hip         9 left_shoulder    14 right_wrist

  Coordinates are meters, Y is up. Feet are the two ankle joints.
"""
import numpy as np
from dual_level_forecaster.mytypes import SkeletonSpec

CANONICAL_JOINTS = (
  'pelvis',
  'left_hip', 'left_knee', 'left_ankle',
  'right_hip', 'right_knee', 'right_ankle',
  'neck', 'head',
  'left_shoulder', 'left_elbow', 'left_wrist',
  'right_shoulder', 'right_elbow', 'right_wrist',
)

CANONICAL_EDGES = (
  (0, 1), (1, 2), (2, 3),
  (0, 4), (4, 5), (5, 6),
  (0, 7), (7, 8),
  (7, 9), (9, 10), (10, 11),
  (7, 12), (12, 13), (13, 14),
)

CANONICAL_SKELETON = SkeletonSpec(
  joint_names=CANONICAL_JOINTS,
  edges=CANONICAL_EDGES,
  root_index=0,
  foot_indices=(3, 6),
  unit_scale=1.0,
  up_axis=1,
)

# rest offsets (child - parent) in meters, Y up, person facing +Z
REST_OFFSETS = {
  (0, 1): (0.10, -0.05, 0.0),
  (1, 2): (0.0, -0.42, 0.0),
  (2, 3): (0.0, -0.40, 0.0),
  (0, 4): (-0.10, -0.05, 0.0),
  (4, 5): (0.0, -0.42, 0.0),
  (5, 6): (0.0, -0.40, 0.0),
  (0, 7): (0.0, 0.50, 0.0),
  (7, 8): (0.0, 0.22, 0.0),
  (7, 9): (0.18, -0.03, 0.0),
  (9, 10): (0.0, -0.28, 0.0),
  (10, 11): (0.0, -0.25, 0.0),
  (7, 12): (-0.18, -0.03, 0.0),
  (12, 13): (0.0, -0.28, 0.0),
  (13, 14): (0.0, -0.25, 0.0),
}

# pelvis height that puts the rest-pose ankles on the ground plane
REST_PELVIS_HEIGHT = 0.87


def rest_pose(skel:SkeletonSpec=CANONICAL_SKELETON) -> np.ndarray:
    pose = np.zeros((skel.joint_count, 3))
    for parent, child in skel.edges:
        pose[child] = pose[parent] + np.asarray(REST_OFFSETS[(parent, child)])
    pose[:, skel.up_axis] += REST_PELVIS_HEIGHT
    return pose


def traversal_order(skel:SkeletonSpec) -> list[tuple[int, int]]:
    """Edges ordered so every parent is placed before its children (BFS from the root)."""
    adjacency: dict[int, list[int]] = {i: [] for i in range(skel.joint_count)}
    for a, b in skel.edges:
        adjacency[a].append(b)
        adjacency[b].append(a)
    order, seen, queue = [], {skel.root_index}, [skel.root_index]
    while queue:
        joint = queue.pop(0)
        for nxt in adjacency[joint]:
            if nxt not in seen:
                seen.add(nxt)
                order.append((joint, nxt))
                queue.append(nxt)
    return order
