"""
  Finite-difference checks over every primitive, every training loss and the
  end-to-end generator loss. Shared by the test-suite and the `gradcheck` command.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence
import numpy as np
from dual_level_forecaster.gradcore import ops
from dual_level_forecaster.gradcore.tensor import Tensor
from dual_level_forecaster.gradcore.gradcheck import grad_check
from dual_level_forecaster.core.skeleton import CANONICAL_SKELETON, rest_pose
from dual_level_forecaster.model.layers import frozen
from dual_level_forecaster.model.predictor import PredictorConfig, init_predictor, forward_batch
from dual_level_forecaster.objectives import losses
from dual_level_forecaster.objectives.discriminators import (DiscriminatorConfig, init_discriminators,
                                                             loss_lgan, loss_ggan)

TOLERANCE = 1e-5
DEFAULT_SEEDS = (0, 1, 2)

Builder = Callable[[np.random.Generator], tuple[Callable[..., Tensor], list[Tensor]]]


@dataclass
class SuiteResult:
  name:str
  seed:int
  max_rel_error:float
  checked:int
  skipped:int
  tolerance:float = TOLERANCE

  @property
  def passed(self) -> bool:
    return self.checked > 0 and self.max_rel_error < self.tolerance

  def to_dict(self) -> dict:
    return {"name": self.name, "seed": self.seed, "max_rel_error": self.max_rel_error,
            "checked": self.checked, "skipped": self.skipped, "passed": self.passed}


def _t(rng:np.random.Generator, *shape, low:float=-1.0, high:float=1.0) -> Tensor:
  return Tensor(rng.uniform(low, high, size=shape))


def _weighted_sum(x:Tensor, weights:np.ndarray) -> Tensor:
  return ops.sum(ops.mul(x, Tensor(weights)))


def _unary(op:Callable, low:float=-1.0, high:float=1.0, shape=(2, 3)) -> Builder:
  def build(rng):
    w = rng.standard_normal(shape)
    return (lambda x: _weighted_sum(op(x), w)), [_t(rng, *shape, low=low, high=high)]
  return build


def _binary(op:Callable, low:float=-1.0, high:float=1.0) -> Builder:
  def build(rng):
    w = rng.standard_normal((2, 3))
    return (lambda a, b: _weighted_sum(op(a, b), w)), [_t(rng, 2, 3), _t(rng, 2, 3, low=low, high=high)]
  return build


def _matmul(rng):
  w = rng.standard_normal((2, 3, 2))
  return (lambda a, b: _weighted_sum(ops.matmul(a, b), w)), [_t(rng, 2, 3, 4), _t(rng, 2, 4, 2)]


def _matmul_shared(rng):
  w = rng.standard_normal((2, 3, 2))
  return (lambda a, b: _weighted_sum(ops.matmul(a, b), w)), [_t(rng, 2, 3, 4), _t(rng, 4, 2)]


def _structure(fn:Callable, shapes:Sequence[tuple], out_shape:tuple) -> Builder:
  def build(rng):
    w = rng.standard_normal(out_shape)
    return (lambda *xs: _weighted_sum(fn(*xs), w)), [_t(rng, *s) for s in shapes]
  return build


def _min_select(rng):
  w = rng.standard_normal(4)
  return (lambda x: _weighted_sum(ops.min_index_select(x, axis=0)[0], w)), [_t(rng, 3, 4)]


def _max_reduce(rng):
  w = rng.standard_normal(3)
  return (lambda x: _weighted_sum(ops.max_reduce(x, axis=1), w)), [_t(rng, 3, 4)]


def _linear(rng):
  w = rng.standard_normal((3, 2))
  return (lambda x, W, b: _weighted_sum(ops.linear(x, W, b), w)), [_t(rng, 3, 4), _t(rng, 4, 2), _t(rng, 2)]


def _attention(rng):
  d, heads = 4, 2
  names = [f"{kind}{proj}" for proj in 'qkvo' for kind in ('W', 'b')]
  shapes = [(d, d) if n[0] == 'W' else (d,) for n in names]
  w = rng.standard_normal((2, 3, d))

  def f(query, memory, *weights):
    return _weighted_sum(ops.multi_head_attention(query, memory, dict(zip(names, weights)), heads), w)
  return f, [_t(rng, 2, 3, d), _t(rng, 2, 5, d)] + [_t(rng, *s, low=-0.7, high=0.7) for s in shapes]


# ---------------------------------------------------------------- losses

def _motion(rng, *shape) -> Tensor:
  """Small random motion around the rest pose."""
  base = rest_pose()
  return Tensor(base + rng.normal(0.0, 0.1, size=shape + base.shape))


def _recon(kind:str) -> Builder:
  def build(rng):
    target = rng.normal(0.0, 0.1, size=(1, 2, 2, 15, 3))
    fn = losses.loss_local_recon if kind == 'local' else losses.loss_global_recon
    return (lambda pred: fn(pred, target)), [Tensor(rng.normal(0.0, 0.1, size=(1, 3, 2, 2, 15, 3)))]
  return build


def _limb(rng):
  history = _motion(rng, 1, 2, 2).data
  targets = losses.limb_targets(history, CANONICAL_SKELETON)
  return (lambda pred: losses.loss_limb(pred, CANONICAL_SKELETON, targets)), [_motion(rng, 1, 2, 2, 2)]


def _multimodal(rng):
  pseudo = [[rng.normal(0.0, 0.1, size=(2, 2, 15, 3)), rng.normal(0.0, 0.1, size=(1, 2, 15, 3))]]
  return (lambda pred: losses.loss_multimodal_recon(pred, pseudo)), \
    [Tensor(rng.normal(0.0, 0.1, size=(1, 3, 2, 2, 15, 3)))]


def _diversity(rng):
  return (lambda pred: losses.loss_diversity(pred, CANONICAL_SKELETON, 1.0, 2.0)), [_motion(rng, 1, 3, 2, 2)]


def _lsgan(rng):
  return (lambda fake, real: ops.add(losses.lsgan_generator(fake), losses.lsgan_discriminator(fake, real))), \
    [_t(rng, 4, 3), _t(rng, 4, 3)]


def _small_discriminators(rng):
  config = DiscriminatorConfig(layers=1, d_model=8, heads=2, ff_dim=8)
  return config, frozen(init_discriminators(config, CANONICAL_SKELETON, rng))


def _gan(kind:str) -> Builder:
  def build(rng):
    config, params = _small_discriminators(rng)
    if kind == 'local':
      real = _motion(rng, 2, 3).data

      def f(generated):
        gen, disc = loss_lgan(generated, real, CANONICAL_SKELETON, params, config)
        return ops.add(gen, disc)
    else:
      real = _motion(rng, 1, 2, 3).data

      def f(generated):
        gen, disc = loss_ggan(generated, real, CANONICAL_SKELETON, params, config)
        return ops.add(gen, disc)
    return f, [_motion(rng, 1, 2, 2, 3)]
  return build


def _end_to_end(rng):
  """Generator loss of a one-layer predictor w.r.t. the intent codes and the output bias."""
  config = PredictorConfig(layers=1, d_model=8, heads=2, ff_dim=8, future_len=2)
  params = frozen(init_predictor(config, rng))
  history = _motion(rng, 1, 2, 3).data
  target = rng.normal(0.0, 0.05, size=(1, 2, 2, 15, 3))
  limbs = losses.limb_targets(history, CANONICAL_SKELETON)
  pseudo = [[target[0, n][None] for n in range(2)]]

  def f(codes, out_bias):
    local = dict(params)
    local["dec.out.b"] = out_bias
    deltas, absolute = forward_batch(history, codes, local, config)
    parts = [losses.loss_local_recon(deltas, target),
             losses.loss_limb(absolute, CANONICAL_SKELETON, limbs),
             losses.loss_multimodal_recon(deltas, pseudo),
             losses.loss_diversity(absolute, CANONICAL_SKELETON, 50.0, 100.0),
             losses.loss_global_recon(deltas, target)]
    total = parts[0]
    for part in parts[1:]:
      total = ops.add(total, part)
    return total
  return f, [_t(rng, 1, 2, 2, 8), _t(rng, 45, low=-0.1, high=0.1)]


CASES: dict[str, Builder] = {
  "add": _binary(ops.add),
  "sub": _binary(ops.sub),
  "mul": _binary(ops.mul),
  "div": _binary(ops.div, low=0.5, high=2.0),
  "scalar_ops": _unary(lambda x: ops.add(ops.mul(x, 2.5), -0.5)),
  "neg": _unary(ops.neg),
  "exp": _unary(ops.exp),
  "sqrt": _unary(ops.sqrt, low=0.5, high=2.0),
  "square": _unary(ops.square),
  "squared_error": _binary(ops.squared_error),
  "relu": _unary(ops.relu),
  "gelu": _unary(ops.gelu),
  "softmax": _unary(lambda x: ops.softmax(x, axis=1)),
  "layer_norm": _unary(lambda x: ops.layer_norm(x, axis=1), shape=(2, 4)),
  "matmul": _matmul,
  "matmul_shared": _matmul_shared,
  "concat": _structure(lambda a, b: ops.concat([a, b], axis=1), [(2, 3), (2, 2)], (2, 5)),
  "stack": _structure(lambda a, b: ops.stack([a, b], axis=0), [(2, 3), (2, 3)], (2, 2, 3)),
  "slice": _structure(lambda x: ops.slice_(x, (slice(None), slice(1, 3))), [(2, 4)], (2, 2)),
  "take": _structure(lambda x: ops.take(x, [2, 0, 2], axis=1), [(2, 3)], (2, 3)),
  "reshape": _structure(lambda x: ops.reshape(x, (3, 2)), [(2, 3)], (3, 2)),
  "transpose": _structure(lambda x: ops.transpose(x, (1, 0, 2)), [(2, 3, 2)], (3, 2, 2)),
  "expand": _structure(lambda x: ops.expand(x, (2, 3, 4)), [(3, 1)], (2, 3, 4)),
  "sum": _structure(lambda x: ops.sum(x, axis=(0, 2)), [(2, 3, 2)], (3,)),
  "mean": _structure(lambda x: ops.mean(x, axis=1, keepdims=True), [(2, 3)], (2, 1)),
  "cumsum": _structure(lambda x: ops.cumsum(x, axis=1), [(2, 4)], (2, 4)),
  "max_reduce": _max_reduce,
  "min_index_select": _min_select,
  "linear": _linear,
  "multi_head_attention": _attention,
  "loss_local_recon": _recon('local'),
  "loss_global_recon": _recon('global'),
  "loss_limb": _limb,
  "loss_multimodal_recon": _multimodal,
  "loss_diversity": _diversity,
  "lsgan": _lsgan,
  "loss_lgan": _gan('local'),
  "loss_ggan": _gan('global'),
  "generator_end_to_end": _end_to_end,
}


def run_case(name:str, seed:int, tolerance:float=TOLERANCE, h:float=1e-5) -> SuiteResult:
  rng = np.random.default_rng([seed, len(name)] + [ord(c) for c in name])
  f, inputs = CASES[name](rng)
  report = grad_check(f, inputs, h=h)
  return SuiteResult(name, seed, report.max_rel_error, report.checked, len(report.skipped), tolerance)


def run_suite(seeds:Iterable[int]=DEFAULT_SEEDS, tolerance:float=TOLERANCE,
              only:Optional[Sequence[str]]=None) -> list[SuiteResult]:
  names = list(only) if only else list(CASES)
  results = []
  for seed in seeds:
    for name in names:
      result = run_case(name, seed, tolerance)
      level = logging.DEBUG if result.passed else logging.ERROR
      logging.log(level, f"gradcheck {name} seed={seed}: max rel error {result.max_rel_error:.2e} "
                         f"({result.checked} checked, {result.skipped} skipped)")
      results.append(result)
  failed = [r for r in results if not r.passed]
  logging.info(f"gradcheck: {len(results) - len(failed)}/{len(results)} cases passed")
  return results
