import numpy as np
from dual_level_forecaster.mytypes import Track, SkeletonSpec, ShapeError, Pose


def _check_joints(op:str, expected:int, got:int):
    if expected != got:
        raise ShapeError(msg=f"{op}: joint count mismatch {expected} vs {got}")


def residuals(track:Track, anchor:Pose) -> np.ndarray:
    """
    Frame deltas of a track: out[0] = frames[0] - anchor, out[t] = frames[t] - frames[t-1].
    """
    anchor = np.asarray(anchor, dtype=np.float64)
    if anchor.shape != track.frames.shape[1:]:
        raise ShapeError(msg=f"residuals: anchor shape {anchor.shape} vs pose shape {track.frames.shape[1:]}")
    frames = track.frames
    return np.diff(frames, axis=0, prepend=anchor[None])


def integrate_residuals(anchor:Pose, deltas:np.ndarray, fps:float=15.0) -> Track:
    anchor = np.asarray(anchor, dtype=np.float64)
    deltas = np.asarray(deltas, dtype=np.float64)
    if deltas.ndim != 3 or deltas.shape[0] == 0:
        raise ShapeError(msg=f"integrate_residuals: expected non-empty (T, V, 3) deltas, got {deltas.shape}")
    if anchor.shape != deltas.shape[1:]:
        raise ShapeError(msg=f"integrate_residuals: anchor shape {anchor.shape} vs delta shape {deltas.shape[1:]}")
    return Track(anchor[None] + np.cumsum(deltas, axis=0), fps)


def split_root_pose(track:Track, skel:SkeletonSpec) -> tuple[np.ndarray, Track]:
    """Returns (root trajectory (T, 3), root-relative track)."""
    _check_joints("split_root_pose", skel.joint_count, track.joint_count)
    root = track.frames[:, skel.root_index, :].copy()
    local = track.frames - root[:, None, :]
    return root, Track(local, track.fps)


def limb_lengths(pose:Pose, skel:SkeletonSpec) -> np.ndarray:
    pose = np.asarray(pose, dtype=np.float64)
    _check_joints("limb_lengths", skel.joint_count, pose.shape[0])
    edges = skel.edge_array
    return np.linalg.norm(pose[edges[:, 0]] - pose[edges[:, 1]], axis=-1)


def track_limb_lengths(frames:np.ndarray, skel:SkeletonSpec) -> np.ndarray:
    """Limb lengths for every frame of a (..., V, 3) array -> (..., E)."""
    edges = skel.edge_array
    return np.linalg.norm(frames[..., edges[:, 0], :] - frames[..., edges[:, 1], :], axis=-1)
