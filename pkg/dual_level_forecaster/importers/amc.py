"""
  Acclaim motion (AMC) parser. Values are validated against the bone
  channel lists of an already parsed ASF skeleton.
"""
import logging
from dataclasses import dataclass, field
import numpy as np
from dual_level_forecaster.mytypes import ParseError
from dual_level_forecaster.importers.asf import AsfSkeleton, ROOT

AMC_FPS = 120.0


@dataclass
class AmcClip:
  frames:list[dict[str, np.ndarray]] = field(default_factory=list)
  fps:float = AMC_FPS
  degrees:bool = True

  def __len__(self):
    return len(self.frames)


def _channel_count(skel:AsfSkeleton, bone:str) -> int:
  return len(skel.root.order) if bone == ROOT else len(skel.bones[bone].dof)


def _close_frame(number, values:dict, skel:AsfSkeleton, lineno:int):
  expected = [ROOT] + [b for b in skel.traversal() if skel.bones[b].dof]
  missing = [b for b in expected if b not in values]
  if missing:
    raise ParseError(msg=f"frame {number}: no values for bone '{missing[0]}'", line=lineno)


def parse_amc(text:str, skel:AsfSkeleton, fps:float=AMC_FPS) -> AmcClip:
  clip = AmcClip(fps=fps, degrees=skel.units.angle == 'deg')
  number, values, last_line = None, {}, 0
  for i, raw in enumerate(text.splitlines()):
    lineno, line = i + 1, raw.strip()
    if not line or line.startswith('#'):
      continue
    if line.startswith(':'):
      flag = line[1:].upper()
      if flag == 'DEGREES':
        clip.degrees = True
      elif flag == 'RADIANS':
        clip.degrees = False
      continue
    tokens = line.split()
    if len(tokens) == 1 and tokens[0].isdigit():
      if number is not None:
        _close_frame(number, values, skel, lineno)
        clip.frames.append(values)
      number, values = int(tokens[0]), {}
      last_line = lineno
      continue
    if number is None:
      raise ParseError(msg=f"channel data before the first frame number: {line!r}", line=lineno)
    bone, rest = tokens[0], tokens[1:]
    if bone != ROOT and bone not in skel.bones:
      raise ParseError(msg=f"frame {number}: unknown bone '{bone}'", line=lineno)
    expected = _channel_count(skel, bone)
    if len(rest) != expected:
      raise ParseError(msg=f"frame {number}, bone '{bone}': expected {expected} channels, got {len(rest)}",
                       line=lineno)
    try:
      values[bone] = np.array([float(t) for t in rest], dtype=np.float64)
    except ValueError:
      raise ParseError(msg=f"frame {number}, bone '{bone}': non-numeric channel value", line=lineno)
    last_line = lineno
  if number is None:
    raise ParseError(msg="AMC document has no frames", line=max(last_line, 1))
  _close_frame(number, values, skel, last_line)
  clip.frames.append(values)
  logging.debug(f"parsed {len(clip)} AMC frames")
  return clip


def read_amc(path, skel:AsfSkeleton, fps:float=AMC_FPS) -> AmcClip:
  with open(path, 'r', encoding='utf-8') as fh:
    text = fh.read()
  try:
    return parse_amc(text, skel, fps)
  except ParseError as err:
    err.key = str(path)
    raise
