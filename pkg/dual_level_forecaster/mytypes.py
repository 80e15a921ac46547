from enum import Enum, auto
from dataclasses import dataclass, field
from typing import Optional
import numpy as np


Pose = np.ndarray  # (V, 3) joint coordinates in meters


class IntentMode(Enum):
  LOCAL = 'local'
  GLOBAL = 'global'


class GlobalVariant(Enum):
  ATTENTION = 'attention'
  MAXPOOL = 'maxpool'


class TrainingVariant(Enum):
  FULL = 'full'
  NO_SEPARATION = 'no_separation'
  NO_SOCIAL = 'no_social'
  NO_INDIVIDUAL = 'no_individual'
  NO_DISCRETE = 'no_discrete'
  NO_CONTINUOUS = 'no_continuous'


class IssueType(Enum):
  SHAPE = auto()
  USAGE = auto()
  PARSE = auto()
  SEMANTIC = auto()
  CONFIG = auto()
  SYNTHESIS = auto()
  CHECKPOINT = auto()
  NON_FINITE = auto()
  GRADCHECK = auto()


@dataclass()
class ForecastIssue(Exception):
  msg:str
  issue_type:IssueType
  key:Optional[str] = None

  def __str__(self):
    if self.key:
      return f"{self.key}: {self.msg}"
    return self.msg


@dataclass(kw_only=True)
class ShapeError(ForecastIssue):
  issue_type:IssueType = IssueType.SHAPE


@dataclass(kw_only=True)
class UsageError(ForecastIssue):
  issue_type:IssueType = IssueType.USAGE


@dataclass(kw_only=True)
class ParseError(ForecastIssue):
  issue_type:IssueType = IssueType.PARSE
  line:Optional[int] = None

  def __str__(self):
    where = f" (line {self.line})" if self.line is not None else ""
    prefix = f"{self.key}: " if self.key else ""
    return f"{prefix}{self.msg}{where}"


@dataclass(kw_only=True)
class SemanticError(ForecastIssue):
  issue_type:IssueType = IssueType.SEMANTIC


@dataclass(kw_only=True)
class ConfigError(ForecastIssue):
  issue_type:IssueType = IssueType.CONFIG


@dataclass(kw_only=True)
class SynthesisError(ForecastIssue):
  issue_type:IssueType = IssueType.SYNTHESIS


@dataclass(kw_only=True)
class CheckpointError(ForecastIssue):
  issue_type:IssueType = IssueType.CHECKPOINT


@dataclass(kw_only=True)
class NonFiniteError(ForecastIssue):
  issue_type:IssueType = IssueType.NON_FINITE
  tensor_op:Optional[str] = None


@dataclass(kw_only=True)
class GradCheckError(ForecastIssue):
  issue_type:IssueType = IssueType.GRADCHECK


# usage/config problems exit with 2, everything else with 1
USAGE_ISSUES = (IssueType.USAGE, IssueType.CONFIG)


def _frozen_array(data) -> np.ndarray:
  arr = np.array(data, dtype=np.float64)
  arr.setflags(write=False)
  return arr


@dataclass(frozen=True)
class SkeletonSpec:
  joint_names:tuple[str, ...]
  edges:tuple[tuple[int, int], ...]
  root_index:int = 0
  foot_indices:tuple[int, int] = (0, 0)
  unit_scale:float = 1.0
  up_axis:int = 1

  def __post_init__(self):
    v = len(self.joint_names)
    if v < 2:
      raise ShapeError(msg=f"skeleton needs at least 2 joints, got {v}")
    if not (0 <= self.root_index < v) or any(not (0 <= f < v) for f in self.foot_indices):
      raise ShapeError(msg="root/foot index out of range for skeleton")
    if len(self.edges) != v - 1:
      raise ShapeError(msg=f"skeleton edges must form a tree: {len(self.edges)} edges for {v} joints")
    # union-find over the edges; a tree with V-1 edges is connected iff no cycle
    parent = list(range(v))

    def find(i):
      while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
      return i

    for a, b in self.edges:
      if not (0 <= a < v and 0 <= b < v):
        raise ShapeError(msg=f"edge ({a}, {b}) out of range")
      ra, rb = find(a), find(b)
      if ra == rb:
        raise ShapeError(msg=f"edge ({a}, {b}) closes a cycle")
      parent[ra] = rb

  @property
  def joint_count(self) -> int:
    return len(self.joint_names)

  @property
  def edge_array(self) -> np.ndarray:
    return np.array(self.edges, dtype=np.int64)


@dataclass(frozen=True)
class Track:
  frames:np.ndarray   # (T, V, 3)
  fps:float

  def __post_init__(self):
    arr = _frozen_array(self.frames)
    if arr.ndim != 3 or arr.shape[-1] != 3:
      raise ShapeError(msg=f"track frames must be (T, V, 3), got {arr.shape}")
    if arr.shape[0] == 0:
      raise ShapeError(msg="track must have at least one frame")
    if not np.all(np.isfinite(arr)):
      raise ShapeError(msg="track contains non-finite coordinates")
    if not self.fps > 0:
      raise ShapeError(msg=f"fps must be positive, got {self.fps}")
    object.__setattr__(self, 'frames', arr)
    object.__setattr__(self, 'fps', float(self.fps))

  def __len__(self):
    return self.frames.shape[0]

  @property
  def joint_count(self) -> int:
    return self.frames.shape[1]


@dataclass(frozen=True)
class Scene:
  persons:tuple[Track, ...]
  history_len:int
  future_len:int
  ids:tuple[str, ...] = ()

  def __post_init__(self):
    persons = tuple(self.persons)
    if not persons:
      raise ShapeError(msg="scene needs at least one person")
    length = self.history_len + self.future_len
    if self.history_len < 1 or self.future_len < 0:
      raise ShapeError(msg=f"invalid history/future split {self.history_len}/{self.future_len}")
    for n, track in enumerate(persons):
      if len(track) != length:
        raise ShapeError(msg=f"person {n} has {len(track)} frames, expected {length}")
      if track.fps != persons[0].fps:
        raise ShapeError(msg=f"person {n} fps {track.fps} differs from {persons[0].fps}")
      if track.joint_count != persons[0].joint_count:
        raise ShapeError(msg=f"person {n} has {track.joint_count} joints")
    ids = tuple(self.ids) or tuple(f"p{n}" for n in range(len(persons)))
    if len(ids) != len(persons):
      raise ShapeError(msg="one id per person required")
    object.__setattr__(self, 'persons', persons)
    object.__setattr__(self, 'ids', ids)

  @property
  def fps(self) -> float:
    return self.persons[0].fps

  @property
  def person_count(self) -> int:
    return len(self.persons)

  def as_array(self) -> np.ndarray:
    """(N, T, V, 3) stacked copy of all tracks."""
    return np.stack([t.frames for t in self.persons])

  @property
  def history(self) -> np.ndarray:
    return self.as_array()[:, :self.history_len]

  @property
  def future(self) -> np.ndarray:
    return self.as_array()[:, self.history_len:]


@dataclass(frozen=True)
class PredictionSet:
  predictions:np.ndarray      # (M, N, T_p, V, 3)
  source_intents:tuple[tuple[int, ...], ...]
  fps:float

  def __post_init__(self):
    arr = _frozen_array(self.predictions)
    if arr.ndim != 5 or arr.shape[0] < 1:
      raise ShapeError(msg=f"predictions must be (M, N, T_p, V, 3) with M >= 1, got {arr.shape}")
    if len(self.source_intents) != arr.shape[0]:
      raise ShapeError(msg="one intent record per prediction required")
    object.__setattr__(self, 'predictions', arr)
    object.__setattr__(self, 'source_intents', tuple(tuple(int(i) for i in s) for s in self.source_intents))

  @property
  def count(self) -> int:
    return self.predictions.shape[0]

  def track(self, m:int, n:int) -> Track:
    return Track(self.predictions[m, n], self.fps)


@dataclass
class RunManifest:
  command:str
  config_hash:str
  rng_seed:Optional[int]
  input_digests:dict[str, str]
  tool_version:str
  started_at:str
  finished_at:str = ""
  outputs:list[str] = field(default_factory=list)
