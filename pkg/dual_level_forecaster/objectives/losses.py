"""
  Training objectives over batched predictions.

  Shapes: predictions (B, M, N, T, V, 3) Tensors, targets (B, N, T, V, 3) arrays.
  Unbatched inputs (M, N, T, V, 3) / (N, T, V, 3) are lifted to B = 1.
  ||.||^2 of a track is the sum over all T x V x 3 entries.
"""
from dataclasses import dataclass, field, asdict
import numpy as np
from dual_level_forecaster.mytypes import ConfigError, ShapeError, SkeletonSpec
from dual_level_forecaster.gradcore import ops
from dual_level_forecaster.gradcore.tensor import Tensor, as_tensor
from dual_level_forecaster.core.motion import track_limb_lengths

WEIGHT_KEYS = ('lR', 'L', 'mmR', 'D', 'lGAN', 'gR', 'gGAN')

DEFAULT_WEIGHTS = {'lR': 1.0, 'L': 1.0, 'mmR': 0.5, 'D': 0.1, 'lGAN': 0.1, 'gR': 1.0, 'gGAN': 0.1}
LIMB_EPS = 1e-18       # keeps the sqrt gradient finite for a collapsed limb


@dataclass
class LossConfig:
  alpha:float = 50.0
  beta:float = 100.0
  eps_pseudo:float = 0.1
  max_pseudo:int | None = 8
  pseudo_stride:int = 1
  weights:dict[str, float] = field(default_factory=lambda: dict(DEFAULT_WEIGHTS))

  def __post_init__(self):
    if not (self.alpha > 0 and self.beta > 0):
      raise ConfigError(msg="alpha and beta must be positive", key='loss')
    if self.eps_pseudo < 0:
      raise ConfigError(msg="eps_pseudo must be >= 0", key='loss')
    if self.pseudo_stride < 1 or (self.max_pseudo is not None and self.max_pseudo < 1):
      raise ConfigError(msg="pseudo_stride and max_pseudo must be >= 1", key='loss')
    unknown = set(self.weights) - set(WEIGHT_KEYS)
    if unknown:
      raise ConfigError(msg=f"unknown loss weights {sorted(unknown)}", key='loss')
    self.weights = {**DEFAULT_WEIGHTS, **{k: float(v) for k, v in self.weights.items()}}
    if any(v < 0 for v in self.weights.values()):
      raise ConfigError(msg="loss weights must be >= 0", key='loss')

  @classmethod
  def from_dict(cls, data:dict) -> "LossConfig":
    unknown = set(data) - set(cls.__dataclass_fields__)
    if unknown:
      raise ConfigError(msg=f"unknown keys {sorted(unknown)}", key='loss')
    data = dict(data)
    if data.get('eps_pseudo') in ('inf', 'Infinity'):
      data['eps_pseudo'] = float('inf')
    return cls(**data)

  def to_dict(self) -> dict:
    return asdict(self)


def _lift(pred, target=None) -> tuple[Tensor, np.ndarray | None]:
  pred = as_tensor(pred)
  if pred.ndim == 5:
    pred = ops.reshape(pred, (1,) + pred.shape)
  if pred.ndim != 6 or pred.shape[-1] != 3:
    raise ShapeError(msg=f"loss: predictions must be (B, M, N, T, V, 3), got {pred.shape}")
  if target is None:
    return pred, None
  target = np.asarray(target, dtype=np.float64)
  if target.ndim == 4:
    target = target[None]
  b, _, n, t, v, _ = pred.shape
  if target.shape != (b, n, t, v, 3):
    raise ShapeError(msg=f"loss: target shape {target.shape} does not match predictions {pred.shape}")
  return pred, target


def slot_errors(pred, target) -> Tensor:
  """||pred[b, m, n] - target[b, n]||^2 for every slot, (B, M, N)."""
  pred, target = _lift(pred, target)
  tgt = ops.expand(Tensor(target[:, None]), pred.shape)
  return ops.sum(ops.squared_error(pred, tgt), axis=(3, 4, 5))


def loss_local_recon(pred, target) -> Tensor:
  """Per-person winner: mean over persons of min_m error."""
  best, _ = ops.min_index_select(slot_errors(pred, target), axis=1)
  return ops.mean(best)


def loss_global_recon(pred, target) -> Tensor:
  """Shared winner: min over m of the person-averaged error."""
  per_slot = ops.mean(slot_errors(pred, target), axis=2)
  best, _ = ops.min_index_select(per_slot, axis=1)
  return ops.mean(best)


def limb_lengths_tensor(tracks, skel:SkeletonSpec) -> Tensor:
  """Edge lengths over the joint axis (-2); (..., E)."""
  tracks = as_tensor(tracks)
  edges = skel.edge_array
  joint_axis = tracks.ndim - 2
  a = ops.take(tracks, edges[:, 0], axis=joint_axis)
  b = ops.take(tracks, edges[:, 1], axis=joint_axis)
  return ops.sqrt(ops.add(ops.sum(ops.square(ops.sub(a, b)), axis=-1), LIMB_EPS))


def limb_targets(history:np.ndarray, skel:SkeletonSpec) -> np.ndarray:
  """Limb lengths of each person's last history pose, (B, N, E)."""
  return track_limb_lengths(np.asarray(history)[..., -1, :, :], skel)


def loss_limb(pred_abs, skel:SkeletonSpec, targets:np.ndarray) -> Tensor:
  """(1/(N M)) sum over persons and predictions of the squared limb error summed over frames and edges."""
  pred, _ = _lift(pred_abs)
  b, m, n, t = pred.shape[:4]
  targets = np.asarray(targets, dtype=np.float64)
  if targets.ndim == 2:
    targets = targets[None]
  lengths = limb_lengths_tensor(pred, skel)                          # (B, M, N, T, E)
  if targets.shape != (b, n, lengths.shape[-1]):
    raise ShapeError(msg=f"loss_limb: targets {targets.shape} vs {(b, n, lengths.shape[-1])}")
  tgt = ops.expand(Tensor(targets[:, None, :, None, :]), lengths.shape)
  per_slot = ops.sum(ops.squared_error(lengths, tgt), axis=(3, 4))    # (B, M, N)
  return ops.mean(per_slot)


def loss_multimodal_recon(pred, pseudo:list[list[np.ndarray]]) -> Tensor:
  """
    pseudo[b][n] is a (P_bn, T, V, 3) stack of pseudo-future residuals for person n of scene b.
    Mean over all (person, pseudo future) pairs of min_m error, averaged over scenes.
  """
  pred, _ = _lift(pred)
  b, m, n, t, v, _ = pred.shape
  if len(pseudo) != b:
    raise ShapeError(msg=f"loss_multimodal_recon: {len(pseudo)} pseudo sets for batch of {b}")
  per_scene = []
  for i, persons in enumerate(pseudo):
    if len(persons) != n:
      raise ShapeError(msg=f"loss_multimodal_recon: scene {i} has {len(persons)} pseudo lists for {n} persons")
    owners = np.concatenate([np.full(len(p), k, dtype=np.int64) for k, p in enumerate(persons)])
    futures = np.concatenate([np.asarray(p, dtype=np.float64).reshape(-1, t, v, 3) for p in persons])
    scene_pred = ops.take(ops.slice_(pred, i), owners, axis=1)         # (M, K, T, V, 3)
    tgt = ops.expand(Tensor(futures[None]), scene_pred.shape)
    errs = ops.sum(ops.squared_error(scene_pred, tgt), axis=(2, 3, 4))  # (M, K)
    best, _ = ops.min_index_select(errs, axis=0)
    per_scene.append(ops.mean(best))
  return ops.mean(ops.stack(per_scene))


def loss_diversity(pred_abs, skel:SkeletonSpec, alpha:float, beta:float) -> Tensor:
  """
    (1/(N M (M-1))) sum_n sum_{m<k} exp(-d_root^2/alpha) + exp(-d_pose^2/beta),
    root = root-joint trajectory, pose = root-relative joints. Zero when M = 1.
  """
  pred, _ = _lift(pred_abs)
  b, m, n, t, v, _ = pred.shape
  if m < 2:
    return Tensor(0.0)
  root = ops.take(pred, [skel.root_index], axis=4)                    # (B, M, N, T, 1, 3)
  local = ops.sub(pred, ops.expand(root, pred.shape))
  first, second = np.triu_indices(m, k=1)

  def pair_dist(x):
    d = ops.sub(ops.take(x, first, axis=1), ops.take(x, second, axis=1))
    return ops.sum(ops.square(d), axis=(3, 4, 5))                      # (B, P, N)

  terms = ops.add(ops.exp(ops.mul(pair_dist(root), -1.0 / alpha)),
                  ops.exp(ops.mul(pair_dist(local), -1.0 / beta)))
  total = ops.sum(terms, axis=(1, 2))                                 # (B,)
  return ops.mean(ops.mul(total, 1.0 / (n * m * (m - 1))))


def lsgan_generator(fake_scores) -> Tensor:
  return ops.mean(ops.square(ops.sub(fake_scores, 1.0)))


def lsgan_discriminator(fake_scores, real_scores) -> Tensor:
  return ops.add(ops.mean(ops.square(fake_scores)),
                 ops.mean(ops.square(ops.sub(real_scores, 1.0))))
