"""
  Acclaim skeleton (ASF) parser.

  Sections handled: :units, :root, :bonedata, :hierarchy. Other sections
  (:version, :name, :documentation) are skipped. Angles are stored in radians.
"""
from dataclasses import dataclass, field
import numpy as np
from dual_level_forecaster.mytypes import ParseError, SemanticError

ROOT = 'root'
ROTATION_DOFS = ('rx', 'ry', 'rz')
KNOWN_DOFS = ('rx', 'ry', 'rz', 'tx', 'ty', 'tz', 'l')


@dataclass
class AsfUnits:
  length:float = 1.0
  angle:str = 'deg'
  mass:float = 1.0

  def to_radians(self, values) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    return np.deg2rad(values) if self.angle == 'deg' else values


@dataclass
class AsfRoot:
  order:tuple[str, ...] = ('tx', 'ty', 'tz', 'rx', 'ry', 'rz')
  axis_order:str = 'xyz'
  position:np.ndarray = field(default_factory=lambda: np.zeros(3))
  orientation:np.ndarray = field(default_factory=lambda: np.zeros(3))   # radians


@dataclass
class AsfBone:
  name:str
  direction:np.ndarray          # unit vector
  length:float                  # file units
  axis:np.ndarray               # radians
  axis_order:str = 'xyz'
  dof:tuple[str, ...] = ()


@dataclass
class AsfSkeleton:
  units:AsfUnits
  root:AsfRoot
  bones:dict[str, AsfBone]
  children:dict[str, list[str]]
  parents:dict[str, str]

  def traversal(self) -> list[str]:
    """Bone names parent-before-child, siblings in file order."""
    order, queue = [], list(self.children.get(ROOT, []))
    while queue:
      name = queue.pop(0)
      order.append(name)
      queue.extend(self.children.get(name, []))
    return order

  def depth(self) -> int:
    def walk(name:str) -> int:
      return 1 + max((walk(c) for c in self.children.get(name, [])), default=0)
    return max((walk(c) for c in self.children.get(ROOT, [])), default=0)


def _floats(tokens:list[str], count:int, lineno:int, what:str) -> np.ndarray:
  if len(tokens) < count:
    raise ParseError(msg=f"{what}: expected {count} numbers, got {len(tokens)}", line=lineno)
  try:
    return np.array([float(t) for t in tokens[:count]], dtype=np.float64)
  except ValueError:
    raise ParseError(msg=f"{what}: non-numeric value in {tokens[:count]}", line=lineno)


def _sections(lines:list[tuple[int, str]]) -> dict[str, tuple[int, list[tuple[int, str]]]]:
  sections: dict[str, tuple[int, list]] = {}
  current = None
  for lineno, line in lines:
    if line.startswith(':'):
      head = line.split()
      current = head[0][1:].lower()
      body = [(lineno, ' '.join(head[1:]))] if len(head) > 1 else []
      sections[current] = (lineno, body)
    elif current is None:
      raise ParseError(msg=f"content before the first section: {line!r}", line=lineno)
    else:
      sections[current][1].append((lineno, line))
  return sections


def _parse_units(body, units:AsfUnits):
  for lineno, line in body:
    tokens = line.split()
    if len(tokens) != 2:
      raise ParseError(msg=f":units entry must be 'key value', got {line!r}", line=lineno)
    key, value = tokens[0].lower(), tokens[1]
    if key == 'angle':
      if value.lower() not in ('deg', 'rad'):
        raise ParseError(msg=f"unknown angle unit {value!r}", line=lineno)
      units.angle = value.lower()
    elif key in ('length', 'mass'):
      number = _floats([value], 1, lineno, f":units {key}")[0]
      if key == 'length' and not number > 0:
        raise ParseError(msg="length unit must be positive", line=lineno)
      setattr(units, key, float(number))


def _parse_root(body, units:AsfUnits) -> AsfRoot:
  root = AsfRoot()
  for lineno, line in body:
    tokens = line.split()
    key, rest = tokens[0].lower(), tokens[1:]
    if key == 'order':
      order = tuple(t.lower() for t in rest)
      if sorted(order) != sorted(('tx', 'ty', 'tz', 'rx', 'ry', 'rz')):
        raise ParseError(msg=f"root order must name tx ty tz rx ry rz once each, got {rest}", line=lineno)
      root.order = order
    elif key == 'axis':
      if len(rest) != 1 or sorted(rest[0].lower()) != ['x', 'y', 'z']:
        raise ParseError(msg=f"root axis must be a permutation of XYZ, got {rest}", line=lineno)
      root.axis_order = rest[0].lower()
    elif key == 'position':
      root.position = _floats(rest, 3, lineno, "root position")
    elif key == 'orientation':
      root.orientation = units.to_radians(_floats(rest, 3, lineno, "root orientation"))
    else:
      raise ParseError(msg=f"unknown :root entry {tokens[0]!r}", line=lineno)
  return root


def _parse_bone(block:list[tuple[int, str]], units:AsfUnits, end_line:int) -> AsfBone:
  fields: dict = {}
  for lineno, line in block:
    tokens = line.split()
    key, rest = tokens[0].lower(), tokens[1:]
    if key == 'id':
      continue
    if key == 'name':
      if len(rest) != 1:
        raise ParseError(msg="bone name must be a single token", line=lineno)
      fields['name'] = rest[0]
    elif key == 'direction':
      fields['direction'] = _floats(rest, 3, lineno, "direction")
    elif key == 'length':
      fields['length'] = float(_floats(rest, 1, lineno, "length")[0])
    elif key == 'axis':
      fields['axis'] = units.to_radians(_floats(rest, 3, lineno, "axis"))
      order = rest[3].lower() if len(rest) > 3 else 'xyz'
      if sorted(order) != ['x', 'y', 'z']:
        raise ParseError(msg=f"axis order must be a permutation of XYZ, got {rest[3]!r}", line=lineno)
      fields['axis_order'] = order
    elif key == 'dof':
      dof = tuple(t.lower() for t in rest)
      bad = [d for d in dof if d not in KNOWN_DOFS]
      if bad:
        raise ParseError(msg=f"unknown degrees of freedom {bad}", line=lineno)
      fields['dof'] = dof
    elif key == 'limits' or key.startswith('('):
      continue
    else:
      raise ParseError(msg=f"unknown bone entry {tokens[0]!r}", line=lineno)
  for required in ('name', 'direction', 'length'):
    if required not in fields:
      raise ParseError(msg=f"bone block lacks '{required}'", line=end_line)
  norm = np.linalg.norm(fields['direction'])
  if norm > 0:
    fields['direction'] = fields['direction'] / norm
  fields.setdefault('axis', np.zeros(3))
  return AsfBone(**fields)


def _blocks(body, section:str, start_line:int) -> list[tuple[list[tuple[int, str]], int]]:
  blocks, current = [], None
  for lineno, line in body:
    word = line.split()[0].lower()
    if word == 'begin':
      if current is not None:
        raise ParseError(msg=f"nested 'begin' in {section}", line=lineno)
      current = []
    elif word == 'end':
      if current is None:
        raise ParseError(msg=f"'end' without 'begin' in {section}", line=lineno)
      blocks.append((current, lineno))
      current = None
    elif current is None:
      raise ParseError(msg=f"entry outside begin/end in {section}: {line!r}", line=lineno)
    else:
      current.append((lineno, line))
  if current is not None:
    raise ParseError(msg=f"unterminated 'begin' in {section}", line=body[-1][0] if body else start_line)
  return blocks


def _parse_hierarchy(body, bones:dict[str, AsfBone], start_line:int) -> tuple[dict, dict]:
  blocks = _blocks(body, ':hierarchy', start_line)
  children: dict[str, list[str]] = {}
  parents: dict[str, str] = {}
  for block, _ in blocks:
    for lineno, line in block:
      tokens = line.split()
      if len(tokens) < 2:
        raise ParseError(msg=f"hierarchy line needs a parent and at least one child: {line!r}", line=lineno)
      parent, kids = tokens[0], tokens[1:]
      for name in [parent] + kids:
        if name != ROOT and name not in bones:
          raise SemanticError(msg=f"hierarchy references undefined bone '{name}' (line {lineno})")
      for kid in kids:
        if kid == ROOT or kid in parents:
          raise SemanticError(msg=f"bone '{kid}' has more than one parent (line {lineno})")
        parents[kid] = parent
        children.setdefault(parent, []).append(kid)
  # every parent chain must end at root
  for name in parents:
    seen, cur = set(), name
    while cur != ROOT:
      if cur in seen or cur not in parents:
        raise SemanticError(msg=f"bone '{name}' is not connected to root")
      seen.add(cur)
      cur = parents[cur]
  return children, parents


def parse_asf(text:str) -> AsfSkeleton:
  lines = [(i + 1, raw.strip()) for i, raw in enumerate(text.splitlines())]
  lines = [(n, l) for n, l in lines if l and not l.startswith('#')]
  if not lines:
    raise ParseError(msg="empty ASF document", line=1)
  sections = _sections(lines)
  last_line = lines[-1][0]
  for required in ('root', 'bonedata', 'hierarchy'):
    if required not in sections:
      raise ParseError(msg=f"missing :{required} section", line=last_line)

  units = AsfUnits()
  if 'units' in sections:
    _parse_units(sections['units'][1], units)
  root = _parse_root(sections['root'][1], units)

  bone_start, bone_body = sections['bonedata']
  bones: dict[str, AsfBone] = {}
  for block, end_line in _blocks(bone_body, ':bonedata', bone_start):
    bone = _parse_bone(block, units, end_line)
    if bone.name in bones or bone.name == ROOT:
      raise ParseError(msg=f"duplicate bone '{bone.name}'", line=end_line)
    bones[bone.name] = bone

  hier_start, hier_body = sections['hierarchy']
  children, parents = _parse_hierarchy(hier_body, bones, hier_start)
  return AsfSkeleton(units, root, bones, children, parents)


def read_asf(path) -> AsfSkeleton:
  with open(path, 'r', encoding='utf-8') as fh:
    text = fh.read()
  try:
    return parse_asf(text)
  except (ParseError, SemanticError) as err:
    err.key = str(path)
    raise
