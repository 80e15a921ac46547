"""
  Dual-level training.

  Every step runs a local pass (per-person codes) and a global pass (scene-shared
  discrete code) on the same batch, each with its own losses. The generator and
  codebook are updated from the summed loss; the critics are then updated on
  detached predictions.
"""
import json
import logging
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Callable, Optional, Sequence
import numpy as np
import pandas as pd
from dual_level_forecaster.mytypes import (ConfigError, NonFiniteError, Scene, TrainingVariant, SkeletonSpec)
from dual_level_forecaster.core.skeleton import CANONICAL_SKELETON
from dual_level_forecaster.gradcore import ops
from dual_level_forecaster.gradcore.tensor import Tensor, backward, first_non_finite
from dual_level_forecaster.gradcore.optim import AdamState, adam_step
from dual_level_forecaster.model import layers
from dual_level_forecaster.model.layers import Params
from dual_level_forecaster.model.predictor import PredictorConfig, init_predictor, forward_batch
from dual_level_forecaster.model.intents import Codebook, IntentBatch, sample_local, sample_global, stack_codes
from dual_level_forecaster.objectives import losses
from dual_level_forecaster.objectives.losses import LossConfig
from dual_level_forecaster.objectives.discriminators import (DiscriminatorConfig, init_discriminators,
                                                              discriminator_local_forward,
                                                              discriminator_global_forward,
                                                              flatten_persons, flatten_scenes)
from dual_level_forecaster.objectives.pseudo import PseudoFutureIndex
from dual_level_forecaster.training.data import WindowSampler, Batch, HISTORY_LENGTHS
from dual_level_forecaster.training.checkpoint import Checkpoint, save_checkpoint, rng_from_state
from dual_level_forecaster.utils.io import create_results_folder
from dual_level_forecaster.forecasting.rollout import forecast_window
from dual_level_forecaster.metrics.displacement import ade_fde, fpd

LOSS_KEYS = ('L_lR', 'L_L', 'L_mmR', 'L_D', 'L_lGAN_G', 'L_gR', 'L_gGAN_G',
             'L_local', 'L_global', 'L_total', 'D_local', 'D_global')

_LOCAL_PASS = {TrainingVariant.FULL, TrainingVariant.NO_SEPARATION, TrainingVariant.NO_SOCIAL,
               TrainingVariant.NO_DISCRETE, TrainingVariant.NO_CONTINUOUS}
_GLOBAL_PASS = {TrainingVariant.FULL, TrainingVariant.NO_INDIVIDUAL,
                TrainingVariant.NO_DISCRETE, TrainingVariant.NO_CONTINUOUS}


@dataclass
class TrainConfig:
  batch_size:int = 32
  epochs:int = 50
  examples_per_epoch:int = 6000
  M:int = 5
  codebook_size:Optional[int] = None
  lr_generator:float = 1e-4
  lr_discriminator:float = 1e-4
  lr_codebook:float = 1e-4
  rng_seed:int = 0
  future_len:int = 15
  history_lens:tuple[int, ...] = HISTORY_LENGTHS
  variant:TrainingVariant = TrainingVariant.FULL
  loss:LossConfig = field(default_factory=LossConfig)
  predictor:PredictorConfig = field(default_factory=PredictorConfig)
  discriminator:DiscriminatorConfig = field(default_factory=DiscriminatorConfig)

  def __post_init__(self):
    if isinstance(self.variant, str):
      try:
        self.variant = TrainingVariant(self.variant)
      except ValueError:
        raise ConfigError(msg=f"unknown training variant {self.variant!r}", key='training')
    self.history_lens = tuple(int(h) for h in self.history_lens)
    if self.codebook_size is None:
      self.codebook_size = self.M
    for name in ('batch_size', 'examples_per_epoch', 'M', 'codebook_size', 'future_len'):
      if getattr(self, name) < 1:
        raise ConfigError(msg=f"{name} must be positive", key='training')
    if self.epochs < 0:
      raise ConfigError(msg="epochs must be >= 0", key='training')
    if min(self.lr_generator, self.lr_discriminator, self.lr_codebook) <= 0:
      raise ConfigError(msg="learning rates must be positive", key='training')
    if self.M > self.codebook_size:
      raise ConfigError(msg=f"M={self.M} exceeds codebook_size={self.codebook_size}", key='training')
    if not self.history_lens or min(self.history_lens) < 1:
      raise ConfigError(msg="history_lens must be positive", key='training')
    if self.predictor.future_len != self.future_len:
      self.predictor.future_len = self.future_len

  @property
  def steps_per_epoch(self) -> int:
    return max(1, self.examples_per_epoch // self.batch_size)

  @classmethod
  def from_dict(cls, data:dict) -> "TrainConfig":
    """Build from a configuration dict with training/loss/predictor/discriminator blocks."""
    training = dict(data.get('training', {}))
    unknown = set(training) - (set(cls.__dataclass_fields__) - {'loss', 'predictor', 'discriminator'})
    if unknown:
      raise ConfigError(msg=f"unknown keys {sorted(unknown)}", key='training')
    try:
      return cls(**training,
                 loss=LossConfig.from_dict(data.get('loss', {})),
                 predictor=PredictorConfig.from_dict(data.get('predictor', {})),
                 discriminator=DiscriminatorConfig.from_dict(data.get('discriminator', {})))
    except TypeError as err:
      raise ConfigError(msg=str(err), key='training')

  def to_dict(self) -> dict:
    training = {k: v for k, v in asdict(self).items() if k not in ('loss', 'predictor', 'discriminator')}
    training['variant'] = self.variant.value
    training['history_lens'] = list(self.history_lens)
    return {"training": training, "loss": self.loss.to_dict(),
            "predictor": self.predictor.to_dict(), "discriminator": self.discriminator.to_dict()}


@dataclass
class TrainState:
  config:TrainConfig
  predictor:Params
  discriminators:Params
  codebook:Codebook
  rng:np.random.Generator
  epoch:int = 0
  adam:dict[str, AdamState] = field(default_factory=dict)
  skeleton:SkeletonSpec = CANONICAL_SKELETON
  epoch_metrics:list[dict] = field(default_factory=list)
  first_step:Optional[dict] = None

  def to_checkpoint(self) -> Checkpoint:
    return Checkpoint(predictor=layers.to_arrays(self.predictor),
                      discriminators=layers.to_arrays(self.discriminators),
                      codebook=self.codebook.entries.data,
                      config=self.config.to_dict(),
                      rng_state=self.rng.bit_generator.state,
                      epoch=self.epoch, adam=dict(self.adam))

  @classmethod
  def from_checkpoint(cls, checkpoint:Checkpoint) -> "TrainState":
    config = TrainConfig.from_dict(checkpoint.config)
    codebook = Codebook(Tensor(np.array(checkpoint.codebook), requires_grad=True, name='intent.codebook'))
    adam = dict(checkpoint.adam)
    for opt, lr in (('generator', config.lr_generator), ('discriminator', config.lr_discriminator),
                    ('codebook', config.lr_codebook)):
      adam.setdefault(opt, AdamState(lr=lr))
    return cls(config=config, predictor=layers.from_arrays(checkpoint.predictor),
               discriminators=layers.from_arrays(checkpoint.discriminators), codebook=codebook,
               rng=rng_from_state(checkpoint.rng_state), epoch=checkpoint.epoch, adam=adam)


def init_state(config:TrainConfig, skeleton:SkeletonSpec=CANONICAL_SKELETON) -> TrainState:
  init_rng = np.random.default_rng([config.rng_seed, 0])
  config.predictor.joint_count = skeleton.joint_count
  predictor = init_predictor(config.predictor, init_rng)
  discriminators = init_discriminators(config.discriminator, skeleton, init_rng)
  codebook = Codebook.initialise(config.codebook_size, config.predictor.code_dim, init_rng)
  adam = {'generator': AdamState(lr=config.lr_generator),
          'discriminator': AdamState(lr=config.lr_discriminator),
          'codebook': AdamState(lr=config.lr_codebook)}
  return TrainState(config=config, predictor=predictor, discriminators=discriminators,
                    codebook=codebook, rng=np.random.default_rng([config.rng_seed, 1]),
                    adam=adam, skeleton=skeleton)


def _weighted(weights:dict, parts:dict[str, Tensor]) -> Tensor:
  total = Tensor(0.0)
  for key, value in parts.items():
    if weights[key]:
      total = ops.add(total, ops.mul(value, weights[key]))
  return total


def _draw(state:TrainState, batch:Batch, sampler:Callable) -> list[IntentBatch]:
  variant = state.config.variant
  return [sampler(state.codebook, state.config.M, batch.person_count, state.rng,
                  use_discrete=variant is not TrainingVariant.NO_DISCRETE,
                  use_continuous=variant is not TrainingVariant.NO_CONTINUOUS)
          for _ in range(batch.size)]


def _check_finite(loss:Tensor, what:str):
  if np.all(np.isfinite(loss.data)):
    return
  culprit = first_non_finite(loss)
  op = culprit.node.op if culprit is not None and culprit.node is not None else 'input'
  raise NonFiniteError(msg=f"{what} is not finite; first non-finite tensor produced by '{op}'",
                       tensor_op=op)


def train_step(batch:Batch, state:TrainState, pseudo:PseudoFutureIndex) -> dict[str, float]:
  """One generator update and one critic update. Returns the loss breakdown."""
  cfg = state.config
  w = cfg.loss.weights
  skel = state.skeleton
  variant = cfg.variant
  target = batch.target_residuals()
  real_local = batch.future.reshape((-1,) + batch.future.shape[2:])
  real_global = batch.future
  values: dict[str, Tensor] = {}
  fakes_local: Optional[np.ndarray] = None
  fakes_global: Optional[np.ndarray] = None

  l_local = Tensor(0.0)
  if variant in _LOCAL_PASS:
    codes = stack_codes(_draw(state, batch, sample_local))
    deltas, absolute = forward_batch(batch.history, codes, state.predictor, cfg.predictor, skel.root_index)
    values['L_lR'] = losses.loss_local_recon(deltas, target)
    values['L_L'] = losses.loss_limb(absolute, skel, losses.limb_targets(batch.history, skel))
    if w['mmR']:
      stacks = [[pseudo.lookup(key) for key in person_keys] for person_keys in batch.pseudo_keys()]
      values['L_mmR'] = losses.loss_multimodal_recon(deltas, stacks)
    values['L_D'] = losses.loss_diversity(absolute, skel, cfg.loss.alpha, cfg.loss.beta)
    fake_scores = discriminator_local_forward(flatten_persons(absolute), skel, state.discriminators,
                                              cfg.discriminator)
    values['L_lGAN_G'] = losses.lsgan_generator(fake_scores)
    parts = {'lR': values['L_lR'], 'L': values['L_L'], 'D': values['L_D'], 'lGAN': values['L_lGAN_G']}
    if 'L_mmR' in values:
      parts['mmR'] = values['L_mmR']
    if variant is TrainingVariant.NO_SEPARATION:
      values['L_gR'] = losses.loss_global_recon(deltas, target)
      values['L_gGAN_G'] = losses.lsgan_generator(
        discriminator_global_forward(flatten_scenes(absolute), skel, state.discriminators, cfg.discriminator))
      parts.update({'gR': values['L_gR'], 'gGAN': values['L_gGAN_G']})
      fakes_global = absolute.data
    l_local = _weighted(w, parts)
    fakes_local = absolute.data

  l_global = Tensor(0.0)
  if variant in _GLOBAL_PASS:
    codes = stack_codes(_draw(state, batch, sample_global))
    deltas, absolute = forward_batch(batch.history, codes, state.predictor, cfg.predictor, skel.root_index)
    values['L_gR'] = losses.loss_global_recon(deltas, target)
    values['L_gGAN_G'] = losses.lsgan_generator(
      discriminator_global_forward(flatten_scenes(absolute), skel, state.discriminators, cfg.discriminator))
    l_global = _weighted(w, {'gR': values['L_gR'], 'gGAN': values['L_gGAN_G']})
    fakes_global = absolute.data

  total = ops.add(l_local, l_global)
  _check_finite(total, 'generator loss')

  grads = backward(total) if total.requires_grad else {}
  zeros = {name: np.zeros_like(t.data) for name, t in state.predictor.items()}
  gen_grads = {name: grads.get(t, zeros[name]) for name, t in state.predictor.items()}
  new_params, state.adam['generator'] = adam_step(layers.to_arrays(state.predictor), gen_grads,
                                                  state.adam['generator'])
  state.predictor = layers.from_arrays(new_params)
  entries = state.codebook.entries
  cb_grad = grads.get(entries, np.zeros_like(entries.data))
  new_cb, state.adam['codebook'] = adam_step({entries.name or 'intent.codebook': entries.data},
                                             {entries.name or 'intent.codebook': cb_grad},
                                             state.adam['codebook'])
  state.codebook = Codebook(Tensor(next(iter(new_cb.values())), requires_grad=True, name='intent.codebook'))

  d_local, d_global = _update_discriminators(state, fakes_local, real_local, fakes_global, real_global)

  breakdown = {key: float(t.data) for key, t in values.items()}
  breakdown.update({'L_local': float(l_local.data), 'L_global': float(l_global.data),
                    'L_total': float(total.data), 'D_local': d_local, 'D_global': d_global})
  return {key: breakdown.get(key, 0.0) for key in LOSS_KEYS}


def _update_discriminators(state:TrainState, fakes_local, real_local, fakes_global, real_global) -> tuple[float, float]:
  cfg = state.config
  skel = state.skeleton
  d_loss = Tensor(0.0)
  d_local = d_global = 0.0
  if fakes_local is not None:
    fake = discriminator_local_forward(Tensor(fakes_local.reshape((-1,) + fakes_local.shape[3:])),
                                       skel, state.discriminators, cfg.discriminator)
    real = discriminator_local_forward(Tensor(real_local), skel, state.discriminators, cfg.discriminator)
    term = losses.lsgan_discriminator(fake, real)
    d_local = float(term.data)
    d_loss = ops.add(d_loss, term)
  if fakes_global is not None:
    fake = discriminator_global_forward(Tensor(fakes_global.reshape((-1,) + fakes_global.shape[2:])),
                                        skel, state.discriminators, cfg.discriminator)
    real = discriminator_global_forward(Tensor(real_global), skel, state.discriminators, cfg.discriminator)
    term = losses.lsgan_discriminator(fake, real)
    d_global = float(term.data)
    d_loss = ops.add(d_loss, term)
  if not d_loss.requires_grad:
    return d_local, d_global
  _check_finite(d_loss, 'discriminator loss')
  grads = backward(d_loss)
  disc_grads = {name: grads.get(t, np.zeros_like(t.data)) for name, t in state.discriminators.items()}
  new_params, state.adam['discriminator'] = adam_step(layers.to_arrays(state.discriminators), disc_grads,
                                                      state.adam['discriminator'])
  state.discriminators = layers.from_arrays(new_params)
  return d_local, d_global


def build_pseudo_index(scenes:Sequence[Scene], config:TrainConfig, skel:SkeletonSpec=CANONICAL_SKELETON) -> PseudoFutureIndex:
  return PseudoFutureIndex([s.as_array() for s in scenes], config.future_len, config.loss.eps_pseudo,
                           root_index=skel.root_index, stride=config.loss.pseudo_stride,
                           max_pseudo=config.loss.max_pseudo)


def _append_metrics(path:Path, row:dict):
  create_results_folder(path.parent)
  with open(path, 'a', encoding='utf-8') as fh:
    fh.write(json.dumps(row, sort_keys=True) + "\n")


def train(scenes:Sequence[Scene], config:TrainConfig, out_dir:Optional[Path]=None,
          resume:Optional[Checkpoint]=None, stop_after_epoch:Optional[int]=None) -> TrainState:
  """
    Run config.epochs epochs (or continue a resumed checkpoint). With out_dir set, a
    checkpoint is written after each epoch (epoch_<k>.dmf and latest.dmf) and the epoch
    averages are appended to metrics.jsonl.
  """
  state = TrainState.from_checkpoint(resume) if resume is not None else init_state(config)
  if resume is not None:
    # resumed runs keep the checkpoint's config but may extend the epoch count
    state.config.epochs = config.epochs
  cfg = state.config
  sampler = WindowSampler(scenes, cfg.future_len, cfg.history_lens)
  pseudo = build_pseudo_index(scenes, cfg, state.skeleton)
  last_epoch = cfg.epochs if stop_after_epoch is None else min(cfg.epochs, stop_after_epoch)
  logging.info(f"Training variant={cfg.variant.value} epochs {state.epoch}->{last_epoch}, "
               f"{cfg.steps_per_epoch} steps/epoch, batch {cfg.batch_size}, M={cfg.M}")

  while state.epoch < last_epoch:
    totals = {key: 0.0 for key in LOSS_KEYS}
    for _ in range(cfg.steps_per_epoch):
      batch = sampler.sample(state.rng, cfg.batch_size)
      breakdown = train_step(batch, state, pseudo)
      if state.first_step is None:
        state.first_step = breakdown
      for key in LOSS_KEYS:
        totals[key] += breakdown[key]
    state.epoch += 1
    averages = {key: totals[key] / cfg.steps_per_epoch for key in LOSS_KEYS}
    state.epoch_metrics.append({"epoch": state.epoch, **averages})
    logging.info(f"epoch {state.epoch}: L_total={averages['L_total']:.6f} L_lR={averages['L_lR']:.6f} "
                 f"L_gR={averages['L_gR']:.6f}")
    if out_dir is not None:
      out_dir = Path(out_dir)
      _append_metrics(out_dir / "metrics.jsonl", {"epoch": state.epoch, **averages})
      checkpoint = state.to_checkpoint()
      save_checkpoint(out_dir / f"epoch_{state.epoch}.dmf", checkpoint)
      save_checkpoint(out_dir / "latest.dmf", checkpoint)
  return state


def compare_variants(train_scenes:Sequence[Scene], eval_scenes:Sequence[Scene], config:TrainConfig,
                     variants:Sequence[TrainingVariant], seeds:Sequence[int]) -> pd.DataFrame:
  """
    Train every (variant, seed) pair and score it on eval_scenes with global-mode
    forecasting of one window: Best-of-M ADE and FPD, averaged over scenes.
  """
  rows = []
  for variant in variants:
    for seed in seeds:
      run_cfg = TrainConfig.from_dict(config.to_dict())
      run_cfg.variant = TrainingVariant(variant)
      run_cfg.rng_seed = int(seed)
      state = train(train_scenes, run_cfg)
      checkpoint = state.to_checkpoint()
      ades, fpds = [], []
      for i, scene in enumerate(eval_scenes):
        rng = np.random.default_rng([int(seed), 7, i])
        preds = forecast_window(scene.history, checkpoint, run_cfg.M, rng, fps=scene.fps)
        gt = scene.future[:, :run_cfg.future_len]
        ade, _ = ade_fde(preds.predictions, gt)
        ades.append(ade)
        fpds.append(fpd(preds.predictions))
      row = {"variant": run_cfg.variant.value, "seed": int(seed),
             "ade": float(np.mean(ades)), "fpd": float(np.mean(fpds))}
      logging.info(f"variant {row['variant']} seed {seed}: ade={row['ade']:.4f} fpd={row['fpd']:.4f}")
      rows.append(row)
  return pd.DataFrame(rows, columns=["variant", "seed", "ade", "fpd"])
