"""
  Multi-person generator: per-person local encoder, scene-level global encoder,
  and a decoder that turns (local summary + intent code) into residual motion.

  Intent codes enter only after encoding, and the global memory is built from
  histories alone, so person n's prediction never depends on another person's code.
"""
import logging
from dataclasses import dataclass, asdict
from typing import Optional
import numpy as np
from dual_level_forecaster.mytypes import (GlobalVariant, ConfigError, ShapeError, UsageError,
                                           Scene, PredictionSet)
from dual_level_forecaster.gradcore import ops
from dual_level_forecaster.gradcore.tensor import Tensor
from dual_level_forecaster.model import layers
from dual_level_forecaster.model.layers import Params


@dataclass
class PredictorConfig:
  layers:int = 6
  d_model:int = 128
  heads:int = 8
  ff_dim:int = 256
  code_dim:Optional[int] = None
  global_variant:GlobalVariant = GlobalVariant.ATTENTION
  joint_count:int = 15
  future_len:int = 15

  def __post_init__(self):
    if isinstance(self.global_variant, str):
      try:
        self.global_variant = GlobalVariant(self.global_variant)
      except ValueError:
        raise ConfigError(msg=f"unknown global_variant {self.global_variant!r}", key='predictor')
    if self.code_dim is None:
      self.code_dim = self.d_model
    for name in ('layers', 'd_model', 'heads', 'ff_dim', 'joint_count', 'future_len'):
      if getattr(self, name) < 1:
        raise ConfigError(msg=f"{name} must be positive", key='predictor')
    if self.d_model % self.heads:
      raise ConfigError(msg=f"d_model {self.d_model} not divisible by heads {self.heads}", key='predictor')
    if self.code_dim != self.d_model:
      raise ConfigError(msg=f"code_dim {self.code_dim} must equal d_model {self.d_model}", key='predictor')

  @classmethod
  def from_dict(cls, data:dict) -> "PredictorConfig":
    unknown = set(data) - set(cls.__dataclass_fields__)
    if unknown:
      raise ConfigError(msg=f"unknown keys {sorted(unknown)}", key='predictor')
    return cls(**data)

  def to_dict(self) -> dict:
    out = asdict(self)
    out['global_variant'] = self.global_variant.value
    return out

  @property
  def feature_dim(self) -> int:
    return 2 * self.joint_count * 3


@dataclass
class EncodedScene:
  local_embeddings:Tensor   # (B, N, d)
  global_memory:Tensor      # (B, S, d)

  @property
  def person_count(self) -> int:
    return self.local_embeddings.shape[1]


def init_predictor(config:PredictorConfig, rng:np.random.Generator) -> Params:
  d, f = config.d_model, config.ff_dim
  params: Params = {}
  layers.init_linear(params, "local.in", config.feature_dim, d, rng)
  for i in range(config.layers):
    layers.init_encoder_layer(params, f"local.enc{i}", d, f, rng)
  layers.init_layer_norm(params, "local.ln_f", d)
  if config.global_variant is GlobalVariant.ATTENTION:
    layers.init_linear(params, "global.in", config.feature_dim, d, rng)
    for i in range(config.layers):
      layers.init_encoder_layer(params, f"global.enc{i}", d, f, rng)
    layers.init_layer_norm(params, "global.ln_f", d)
  for i in range(config.layers):
    layers.init_decoder_layer(params, f"dec{i}", d, f, rng)
  layers.init_layer_norm(params, "dec.ln_f", d)
  layers.init_linear(params, "dec.out", d, config.joint_count * 3, rng)
  logging.debug(f"Initialised predictor with {sum(t.size for t in params.values())} parameters")
  return params


def _check_history(history:np.ndarray, config:PredictorConfig) -> np.ndarray:
  history = np.asarray(history, dtype=np.float64)
  if history.ndim != 5 or history.shape[-2:] != (config.joint_count, 3) or history.shape[2] < 1:
    raise ShapeError(msg=f"encode: history must be (B, N, T_h, {config.joint_count}, 3), got {history.shape}")
  return history


def input_features(history:np.ndarray, origin:np.ndarray) -> np.ndarray:
  """Per-frame [pose - origin, residual] features, (B, N, T_h, 2*V*3)."""
  b, n, t, v, _ = history.shape
  centred = history - origin[:, :, None, None, :]
  deltas = np.diff(history, axis=2, prepend=history[:, :, :1])
  return np.concatenate([centred.reshape(b, n, t, v * 3), deltas.reshape(b, n, t, v * 3)], axis=-1)


def history_positions(t_h:int) -> np.ndarray:
  return np.arange(-(t_h - 1), 1)


def encode(history:np.ndarray, params:Params, config:PredictorConfig, root_index:int=0) -> EncodedScene:
  history = _check_history(history, config)
  b, n, t_h = history.shape[:3]
  d = config.d_model
  last_roots = history[:, :, -1, root_index]                       # (B, N, 3)
  pe = layers.sinusoidal_encoding(history_positions(t_h), d)       # (T_h, d)

  local_feats = input_features(history, last_roots).reshape(b * n, t_h, config.feature_dim)
  x = layers.linear(Tensor(local_feats), params, "local.in")
  x = ops.add(x, ops.expand(Tensor(pe), x.shape))
  for i in range(config.layers):
    x = layers.encoder_layer(x, params, f"local.enc{i}", config.heads)
  x = layers.layer_norm(x, params, "local.ln_f")
  local = ops.reshape(ops.mean(x, axis=1), (b, n, d))

  if config.global_variant is GlobalVariant.MAXPOOL:
    memory = ops.reshape(ops.max_reduce(local, axis=1), (b, 1, d))
    return EncodedScene(local, memory)

  scene_origin = np.broadcast_to(last_roots.mean(axis=1, keepdims=True), last_roots.shape)
  global_feats = input_features(history, scene_origin).reshape(b, n * t_h, config.feature_dim)
  g = layers.linear(Tensor(global_feats), params, "global.in")
  g = ops.add(g, ops.expand(Tensor(np.tile(pe, (n, 1))), g.shape))
  for i in range(config.layers):
    g = layers.encoder_layer(g, params, f"global.enc{i}", config.heads)
  memory = layers.layer_norm(g, params, "global.ln_f")
  return EncodedScene(local, memory)


def decode(encoded:EncodedScene, codes, params:Params, config:PredictorConfig) -> Tensor:
  """
    codes: (B, M, N, d). Returns residual motion (B, M, N, T_p, V, 3).
  """
  codes = codes if isinstance(codes, Tensor) else Tensor(codes)
  b, n, d = encoded.local_embeddings.shape
  if codes.ndim != 4 or codes.shape[0] != b or codes.shape[2] != n:
    raise UsageError(msg=f"decode: expected codes (B={b}, M, N={n}, {d}), got {codes.shape}")
  if codes.shape[3] != d:
    raise ShapeError(msg=f"decode: code_dim {codes.shape[3]} vs d_model {d}")
  m = codes.shape[1]
  t_p = config.future_len
  full = (b, m, n, t_p, d)
  local = ops.expand(ops.reshape(encoded.local_embeddings, (b, 1, n, 1, d)), full)
  z = ops.expand(ops.reshape(codes, (b, m, n, 1, d)), full)
  pe = ops.expand(Tensor(layers.sinusoidal_encoding(np.arange(1, t_p + 1), d)), full)
  q = ops.reshape(ops.add(ops.add(local, z), pe), (b, m * n, t_p, d))
  for i in range(config.layers):
    q = layers.decoder_layer(q, encoded.global_memory, params, f"dec{i}", config.heads)
  q = layers.layer_norm(q, params, "dec.ln_f")
  out = layers.linear(q, params, "dec.out")
  return ops.reshape(out, (b, m, n, t_p, config.joint_count, 3))


def integrate(last_pose:np.ndarray, deltas:Tensor) -> Tensor:
  """last_pose (B, N, V, 3) + cumulative residuals (B, M, N, T_p, V, 3)."""
  anchor = ops.expand(Tensor(last_pose[:, None, :, None]), deltas.shape)
  return ops.add(anchor, ops.cumsum(deltas, axis=3))


def forward_batch(history:np.ndarray, codes, params:Params, config:PredictorConfig,
                  root_index:int=0) -> tuple[Tensor, Tensor]:
  """(residuals, absolute poses), both (B, M, N, T_p, V, 3)."""
  history = _check_history(history, config)
  encoded = encode(history, params, config, root_index)
  deltas = decode(encoded, codes, params, config)
  return deltas, integrate(history[:, :, -1], deltas)


def forward(scene:Scene, combined_codes, params:Params, config:PredictorConfig,
            source_intents:Optional[tuple] = None, root_index:int = 0) -> PredictionSet:
  """
    One scene, M code sets (M, N, d) -> PredictionSet of absolute poses.
    Only the history part of the scene is read.
  """
  codes = combined_codes if isinstance(combined_codes, Tensor) else Tensor(combined_codes)
  if codes.ndim != 3:
    raise UsageError(msg=f"forward: expected codes (M, N, d), got {codes.shape}")
  if codes.shape[1] != scene.person_count:
    raise UsageError(msg=f"forward: {codes.shape[1]} codes for {scene.person_count} persons")
  _, absolute = forward_batch(scene.history[None], ops.reshape(codes, (1,) + codes.shape),
                              params, config, root_index)
  m = codes.shape[0]
  if source_intents is None:
    source_intents = tuple(() for _ in range(m))
  return PredictionSet(absolute.data[0], source_intents, scene.fps)
