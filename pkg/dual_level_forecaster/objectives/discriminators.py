"""
  Realism critics.

  local  - one track at a time: per-frame pose (relative to the first-frame root) plus
           foot velocities, transformer over frames, one score per frame.
  global - every person of a scene as one token sequence (positions relative to the
           scene's mean first-frame root), pooled to a single score.
"""
from dataclasses import dataclass, asdict
import numpy as np
from dual_level_forecaster.mytypes import ConfigError, ShapeError, SkeletonSpec
from dual_level_forecaster.gradcore import ops
from dual_level_forecaster.gradcore.tensor import Tensor, as_tensor
from dual_level_forecaster.model import layers
from dual_level_forecaster.model.layers import Params
from dual_level_forecaster.objectives import losses

LOCAL = 'dl'
GLOBAL = 'dg'


@dataclass
class DiscriminatorConfig:
  layers:int = 2
  d_model:int = 64
  heads:int = 4
  ff_dim:int = 128

  def __post_init__(self):
    if min(self.layers, self.d_model, self.heads, self.ff_dim) < 1:
      raise ConfigError(msg="discriminator sizes must be positive", key='discriminator')
    if self.d_model % self.heads:
      raise ConfigError(msg=f"d_model {self.d_model} not divisible by heads {self.heads}", key='discriminator')

  @classmethod
  def from_dict(cls, data:dict) -> "DiscriminatorConfig":
    unknown = set(data) - set(cls.__dataclass_fields__)
    if unknown:
      raise ConfigError(msg=f"unknown keys {sorted(unknown)}", key='discriminator')
    return cls(**data)

  def to_dict(self) -> dict:
    return asdict(self)


def init_discriminators(config:DiscriminatorConfig, skel:SkeletonSpec, rng:np.random.Generator) -> Params:
  v = skel.joint_count
  d, f = config.d_model, config.ff_dim
  params: Params = {}
  layers.init_linear(params, f"{LOCAL}.in", v * 3 + len(skel.foot_indices) * 3, d, rng)
  for i in range(config.layers):
    layers.init_encoder_layer(params, f"{LOCAL}.enc{i}", d, f, rng)
  layers.init_layer_norm(params, f"{LOCAL}.ln_f", d)
  layers.init_linear(params, f"{LOCAL}.out", d, 1, rng)

  layers.init_linear(params, f"{GLOBAL}.in", v * 3, d, rng)
  for i in range(config.layers):
    layers.init_encoder_layer(params, f"{GLOBAL}.enc{i}", d, f, rng)
  layers.init_layer_norm(params, f"{GLOBAL}.ln_f", d)
  layers.init_linear(params, f"{GLOBAL}.out", d, 1, rng)
  return params


def _lift_tracks(tracks, rank:int, what:str) -> Tensor:
  tracks = as_tensor(tracks)
  if tracks.ndim == rank - 1:
    tracks = ops.reshape(tracks, (1,) + tracks.shape)
  if tracks.ndim != rank or tracks.shape[-1] != 3:
    raise ShapeError(msg=f"{what}: unexpected track shape {tracks.shape}")
  return tracks


def local_features(tracks, skel:SkeletonSpec) -> Tensor:
  """(K, T, V, 3) -> (K, T, V*3 + F*3); foot velocity at frame 0 is zero."""
  tracks = _lift_tracks(tracks, 4, 'local_features')
  k, t, v, _ = tracks.shape
  root0 = ops.take(ops.take(tracks, [0], axis=1), [skel.root_index], axis=2)   # (K, 1, 1, 3)
  pose = ops.reshape(ops.sub(tracks, ops.expand(root0, tracks.shape)), (k, t, v * 3))
  feet = ops.take(tracks, list(skel.foot_indices), axis=2)                     # (K, T, F, 3)
  f = feet.shape[2]
  if t > 1:
    moved = ops.sub(ops.slice_(feet, (slice(None), slice(1, None))),
                    ops.slice_(feet, (slice(None), slice(None, -1))))
    velocity = ops.concat([Tensor(np.zeros((k, 1, f, 3))), moved], axis=1)
  else:
    velocity = Tensor(np.zeros((k, 1, f, 3)))
  return ops.concat([pose, ops.reshape(velocity, (k, t, f * 3))], axis=-1)


def _encode(x:Tensor, params:Params, prefix:str, config:DiscriminatorConfig, positions:np.ndarray) -> Tensor:
  h = layers.linear(x, params, f"{prefix}.in")
  h = ops.add(h, ops.expand(Tensor(layers.sinusoidal_encoding(positions, config.d_model)), h.shape))
  for i in range(config.layers):
    h = layers.encoder_layer(h, params, f"{prefix}.enc{i}", config.heads)
  return layers.layer_norm(h, params, f"{prefix}.ln_f")


def discriminator_local_forward(tracks, skel:SkeletonSpec, params:Params, config:DiscriminatorConfig) -> Tensor:
  """Per-frame realism scores (K, T) for K single-person tracks (K, T, V, 3)."""
  feats = local_features(tracks, skel)
  k, t = feats.shape[:2]
  h = _encode(feats, params, LOCAL, config, np.arange(t))
  return ops.reshape(layers.linear(h, params, f"{LOCAL}.out"), (k, t))


def discriminator_global_forward(tracks, skel:SkeletonSpec, params:Params, config:DiscriminatorConfig) -> Tensor:
  """One realism score per scene (B,) for scenes of shape (B, N, T, V, 3)."""
  tracks = _lift_tracks(tracks, 5, 'discriminator_global_forward')
  b, n, t, v, _ = tracks.shape
  roots = ops.take(ops.take(tracks, [0], axis=2), [skel.root_index], axis=3)   # (B, N, 1, 1, 3)
  origin = ops.mean(roots, axis=1, keepdims=True)                              # (B, 1, 1, 1, 3)
  rel = ops.sub(tracks, ops.expand(origin, tracks.shape))
  tokens = ops.reshape(rel, (b, n * t, v * 3))
  h = _encode(tokens, params, GLOBAL, config, np.tile(np.arange(t), n))
  pooled = ops.mean(h, axis=1)                                                 # (B, d)
  return ops.reshape(layers.linear(pooled, params, f"{GLOBAL}.out"), (b,))


def flatten_persons(pred_abs) -> Tensor:
  """(B, M, N, T, V, 3) -> (B*M*N, T, V, 3)"""
  pred = as_tensor(pred_abs)
  b, m, n, t, v, _ = pred.shape
  return ops.reshape(pred, (b * m * n, t, v, 3))


def flatten_scenes(pred_abs) -> Tensor:
  """(B, M, N, T, V, 3) -> (B*M, N, T, V, 3)"""
  pred = as_tensor(pred_abs)
  b, m, n, t, v, _ = pred.shape
  return ops.reshape(pred, (b * m, n, t, v, 3))


def loss_lgan(generated, real:np.ndarray, skel:SkeletonSpec, params:Params,
              config:DiscriminatorConfig) -> tuple[Tensor, Tensor]:
  """
    (generator term, discriminator term) of the local least-squares game.
    generated: (B, M, N, T, V, 3); real: (K, T, V, 3) single-person clips.
  """
  fake = discriminator_local_forward(flatten_persons(generated), skel, params, config)
  real_scores = discriminator_local_forward(Tensor(real), skel, params, config)
  return losses.lsgan_generator(fake), losses.lsgan_discriminator(fake, real_scores)


def loss_ggan(generated, real:np.ndarray, skel:SkeletonSpec, params:Params,
              config:DiscriminatorConfig) -> tuple[Tensor, Tensor]:
  """Scene-level counterpart of loss_lgan; real: (B, N, T, V, 3)."""
  fake = discriminator_global_forward(flatten_scenes(generated), skel, params, config)
  real_scores = discriminator_global_forward(Tensor(real), skel, params, config)
  return losses.lsgan_generator(fake), losses.lsgan_discriminator(fake, real_scores)
