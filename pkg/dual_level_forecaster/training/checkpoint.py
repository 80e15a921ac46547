"""
  Checkpoints as tensor tables.

  Record names:
    predictor.<param>            generator weights
    discriminator.<param>        local and global critic weights
    intent.codebook              discrete intent codes
    adam.<opt>.m.<param> / adam.<opt>.v.<param>   optimiser moments
    checkpoint.meta              JSON: config snapshot, rng state, epoch, optimiser scalars
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any
import numpy as np
from dual_level_forecaster.mytypes import CheckpointError
from dual_level_forecaster.gradcore.optim import AdamState
from dual_level_forecaster.gradcore.table import encode_table, decode_table, save_table, load_table, \
  pack_meta, unpack_meta, META_KEY
from dual_level_forecaster.model.intents import CODEBOOK_KEY
from dual_level_forecaster.version import FORMAT_VERSION

PREDICTOR = 'predictor.'
DISCRIMINATOR = 'discriminator.'
ADAM = 'adam.'
OPTIMISERS = ('generator', 'discriminator', 'codebook')


@dataclass
class Checkpoint:
  predictor:dict[str, np.ndarray]
  discriminators:dict[str, np.ndarray]
  codebook:np.ndarray
  config:dict[str, Any]
  rng_state:dict[str, Any]
  epoch:int = 0
  adam:dict[str, AdamState] = field(default_factory=dict)

  def to_table(self) -> dict[str, np.ndarray]:
    table: dict[str, np.ndarray] = {}
    table.update({PREDICTOR + k: v for k, v in self.predictor.items()})
    table.update({DISCRIMINATOR + k: v for k, v in self.discriminators.items()})
    table[CODEBOOK_KEY] = self.codebook
    adam_meta = {}
    for opt, state in sorted(self.adam.items()):
      adam_meta[opt] = {"lr": state.lr, "beta1": state.beta1, "beta2": state.beta2,
                        "eps": state.eps, "step": state.step}
      table.update({f"{ADAM}{opt}.m.{k}": v for k, v in state.m.items()})
      table.update({f"{ADAM}{opt}.v.{k}": v for k, v in state.v.items()})
    meta = {"format": FORMAT_VERSION, "config": self.config, "rng_state": self.rng_state,
            "epoch": self.epoch, "adam": adam_meta}
    table[META_KEY] = pack_meta(meta)
    return table

  @classmethod
  def from_table(cls, table:dict[str, np.ndarray], source:str="<table>") -> "Checkpoint":
    if META_KEY not in table:
      raise CheckpointError(msg="tensor table has no checkpoint metadata", key=source)
    if CODEBOOK_KEY not in table:
      raise CheckpointError(msg=f"tensor table has no {CODEBOOK_KEY}", key=source)
    meta = unpack_meta(table[META_KEY])
    for required in ("config", "rng_state", "epoch", "adam"):
      if required not in meta:
        raise CheckpointError(msg=f"checkpoint metadata lacks '{required}'", key=source)
    predictor = {k[len(PREDICTOR):]: v for k, v in table.items() if k.startswith(PREDICTOR)}
    discriminators = {k[len(DISCRIMINATOR):]: v for k, v in table.items() if k.startswith(DISCRIMINATOR)}
    adam = {}
    for opt, scalars in meta["adam"].items():
      prefix_m, prefix_v = f"{ADAM}{opt}.m.", f"{ADAM}{opt}.v."
      adam[opt] = AdamState(lr=scalars["lr"], beta1=scalars["beta1"], beta2=scalars["beta2"],
                            eps=scalars["eps"], step=scalars["step"],
                            m={k[len(prefix_m):]: v for k, v in table.items() if k.startswith(prefix_m)},
                            v={k[len(prefix_v):]: v for k, v in table.items() if k.startswith(prefix_v)})
    return cls(predictor=predictor, discriminators=discriminators, codebook=table[CODEBOOK_KEY],
               config=meta["config"], rng_state=meta["rng_state"], epoch=int(meta["epoch"]), adam=adam)

  def to_bytes(self) -> bytes:
    return encode_table(self.to_table())

  @classmethod
  def from_bytes(cls, blob:bytes) -> "Checkpoint":
    return cls.from_table(decode_table(blob))


def save_checkpoint(path:Path, checkpoint:Checkpoint):
  save_table(Path(path), checkpoint.to_table())
  logging.info(f"Saved checkpoint (epoch {checkpoint.epoch}) to {path}")


def load_checkpoint(path:Path) -> Checkpoint:
  return Checkpoint.from_table(load_table(Path(path)), str(path))


def rng_from_state(state:dict) -> np.random.Generator:
  rng = np.random.default_rng()
  try:
    rng.bit_generator.state = state
  except (TypeError, ValueError, KeyError) as err:
    raise CheckpointError(msg=f"cannot restore rng state: {err}", key='rng_state')
  return rng
