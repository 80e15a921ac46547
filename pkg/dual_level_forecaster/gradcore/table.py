"""
  Named tensor table, the on-disk format for checkpoints.

  Layout (all integers unsigned 64-bit little-endian unless noted):
    b"DMF1" | count | count x record
    record = name_len | utf-8 name | rank | dims (int64 LE, rank of them) | data (float64 LE)
  Records are written in sorted name order so equal tables give equal bytes.
"""
import json
import struct
from pathlib import Path
from typing import Any
import numpy as np
from dual_level_forecaster.mytypes import CheckpointError
from dual_level_forecaster.version import FORMAT_VERSION
from dual_level_forecaster.utils.io import write_bytes_atomic

MAGIC = FORMAT_VERSION.encode('ascii')
META_KEY = 'checkpoint.meta'

_U64 = struct.Struct('<Q')


def encode_table(tensors:dict[str, np.ndarray]) -> bytes:
  chunks = [MAGIC, _U64.pack(len(tensors))]
  for name in sorted(tensors):
    arr = np.ascontiguousarray(tensors[name], dtype='<f8')
    raw_name = name.encode('utf-8')
    chunks.append(_U64.pack(len(raw_name)))
    chunks.append(raw_name)
    chunks.append(_U64.pack(arr.ndim))
    chunks.append(np.asarray(arr.shape, dtype='<i8').tobytes())
    chunks.append(arr.tobytes())
  return b''.join(chunks)


class _Reader:
  def __init__(self, blob:bytes, source:str):
    self.blob = blob
    self.pos = 0
    self.source = source

  def take(self, size:int) -> bytes:
    if self.pos + size > len(self.blob):
      raise CheckpointError(msg=f"truncated tensor table at byte {self.pos}", key=self.source)
    out = self.blob[self.pos:self.pos + size]
    self.pos += size
    return out

  def u64(self) -> int:
    return _U64.unpack(self.take(8))[0]


def decode_table(blob:bytes, source:str = "<bytes>") -> dict[str, np.ndarray]:
  if blob[:4] != MAGIC:
    raise CheckpointError(msg=f"bad magic {blob[:4]!r}, expected {MAGIC!r}", key=source)
  reader = _Reader(blob, source)
  reader.take(4)
  count = reader.u64()
  tensors: dict[str, np.ndarray] = {}
  for _ in range(count):
    try:
      name = reader.take(reader.u64()).decode('utf-8')
    except UnicodeDecodeError as err:
      raise CheckpointError(msg=f"tensor name is not utf-8: {err}", key=source)
    rank = reader.u64()
    dims = tuple(int(d) for d in np.frombuffer(reader.take(8 * rank), dtype='<i8'))
    if any(d < 0 for d in dims):
      raise CheckpointError(msg=f"negative dimension in {name}", key=source)
    size = int(np.prod(dims, dtype=np.int64)) if dims else 1
    data = np.frombuffer(reader.take(8 * size), dtype='<f8').astype(np.float64).reshape(dims)
    tensors[name] = data
  if reader.pos != len(blob):
    raise CheckpointError(msg=f"{len(blob) - reader.pos} trailing bytes after tensor table", key=source)
  return tensors


def save_table(path:Path, tensors:dict[str, np.ndarray]):
  write_bytes_atomic(Path(path), encode_table(tensors))


def load_table(path:Path) -> dict[str, np.ndarray]:
  path = Path(path)
  if not path.is_file():
    raise CheckpointError(msg="checkpoint file not found", key=str(path))
  return decode_table(path.read_bytes(), str(path))


def pack_meta(meta:dict[str, Any]) -> np.ndarray:
  """JSON metadata as a float64 vector of byte values, for storage under META_KEY."""
  raw = json.dumps(meta, sort_keys=True).encode('utf-8')
  return np.frombuffer(raw, dtype=np.uint8).astype(np.float64)


def unpack_meta(vector:np.ndarray) -> dict[str, Any]:
  try:
    return json.loads(np.asarray(vector, dtype=np.uint8).tobytes().decode('utf-8'))
  except (UnicodeDecodeError, json.JSONDecodeError) as err:
    raise CheckpointError(msg=f"unreadable checkpoint metadata: {err}", key=META_KEY)
