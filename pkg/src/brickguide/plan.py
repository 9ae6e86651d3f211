"""Brick catalog and assembly-plan handling.

A plan file is UTF-8, line based.  ``#`` starts a comment, blank lines are
ignored, and the first directive must be ``PLAN``::

    PLAN <name-token>
    GRID <pitch_mm> <layer_height_mm>                # optional, defaults apply
    BRICK <type_id> <width_studs> <depth_studs> [<height_layers>]
    PART <type_id> <cell_x> <cell_y> <layer> <rot>   # rot: 0|90|180|270

If no BRICK lines are present the default catalog applies; otherwise the
declared bricks replace it entirely.  Plans are validated for cell-volume
collisions and for the support rule (every raised placement needs at least
one occupied cell directly beneath its footprint).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

VALID_ROTATIONS = (0, 90, 180, 270)

DEFAULT_PITCH_MM = 8.0
DEFAULT_LAYER_HEIGHT_MM = 9.6


class PlanError(Exception):
    """Base class for plan parsing and validation failures."""


class PlanSyntaxError(PlanError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class UnknownBrickError(PlanError):
    def __init__(self, type_id: str, line: int):
        super().__init__(f"line {line}: unknown brick type {type_id!r}")
        self.type_id = type_id
        self.line = line


class DuplicateBrickError(PlanError):
    def __init__(self, type_id: str):
        super().__init__(f"duplicate brick type {type_id!r}")
        self.type_id = type_id


class CollisionError(PlanError):
    def __init__(self, first: int, second: int):
        super().__init__(f"placements {first} and {second} occupy the same cells")
        self.first = first
        self.second = second


class UnsupportedPlacementError(PlanError):
    def __init__(self, index: int):
        super().__init__(f"placement {index} has no support beneath it")
        self.index = index


class InvalidPlanError(PlanError):
    def __init__(self, violations: list["Violation"]):
        super().__init__(f"plan has {len(violations)} violation(s)")
        self.violations = violations


@dataclass(frozen=True)
class BrickType:
    """One catalog entry: a cuboid brick measured in studs and layers."""

    type_id: str
    name: str
    width_studs: int
    depth_studs: int
    height_layers: int = 1

    def __post_init__(self) -> None:
        if not self.type_id or any(c.isspace() for c in self.type_id):
            raise ValueError("type_id must be a non-empty token")
        if self.width_studs < 1 or self.depth_studs < 1 or self.height_layers < 1:
            raise ValueError("brick dimensions must be >= 1")


@dataclass(frozen=True)
class GridSpec:
    """Physical scaling of the stud grid."""

    pitch_mm: float = DEFAULT_PITCH_MM
    layer_height_mm: float = DEFAULT_LAYER_HEIGHT_MM

    def __post_init__(self) -> None:
        for v in (self.pitch_mm, self.layer_height_mm):
            if not (math.isfinite(v) and v > 0):
                raise ValueError("grid dimensions must be finite and positive")

    @property
    def pitch_m(self) -> float:
        return self.pitch_mm / 1000.0

    @property
    def layer_height_m(self) -> float:
        return self.layer_height_mm / 1000.0


@dataclass(frozen=True)
class Placement:
    """A brick instance anchored at the minimum corner of its rotated footprint."""

    type_id: str
    cell_x: int
    cell_y: int
    layer: int
    rotation: int = 0

    def __post_init__(self) -> None:
        if self.rotation not in VALID_ROTATIONS:
            raise ValueError(f"rotation must be one of {VALID_ROTATIONS}")
        if self.layer < 0:
            raise ValueError("layer must be non-negative")

    def footprint(self, brick: BrickType) -> tuple[int, int]:
        """Rotated (width, depth) in cells."""
        if self.rotation in (90, 270):
            return brick.depth_studs, brick.width_studs
        return brick.width_studs, brick.depth_studs


@dataclass(frozen=True)
class Violation:
    """One validation finding; ``kind`` is 'collision' or 'unsupported'."""

    kind: str
    first: int
    second: Optional[int] = None

    def describe(self) -> str:
        if self.kind == "collision":
            return f"collision: placements {self.first} and {self.second}"
        return f"unsupported: placement {self.first}"


def _default_name(w: int, d: int, h: int) -> str:
    dims = f"{w}x{d}" if h == 1 else f"{w}x{d}x{h}"
    return f"{dims} brick"


def default_catalog() -> tuple[BrickType, ...]:
    """The eight stock brick shapes used when a plan declares none."""
    shapes = [(1, 1), (1, 2), (1, 3), (1, 4), (2, 2), (2, 3), (2, 4), (2, 6)]
    return tuple(
        BrickType(f"{w}x{d}", _default_name(w, d, 1), w, d, 1) for w, d in shapes
    )


@dataclass(frozen=True)
class AssemblyPlan:
    name: str
    grid: GridSpec = field(default_factory=GridSpec)
    catalog: tuple[BrickType, ...] = field(default_factory=default_catalog)
    placements: tuple[Placement, ...] = ()

    def __post_init__(self) -> None:
        ids = [b.type_id for b in self.catalog]
        if len(ids) != len(set(ids)):
            dup = next(i for i in ids if ids.count(i) > 1)
            raise DuplicateBrickError(dup)
        by_id = {b.type_id: b for b in self.catalog}
        object.__setattr__(self, "_by_id", by_id)
        for i, p in enumerate(self.placements):
            if p.type_id not in by_id:
                raise UnknownBrickError(p.type_id, -1)

    def brick(self, type_id: str) -> BrickType:
        return self._by_id[type_id]  # type: ignore[attr-defined]


@dataclass(frozen=True)
class Step:
    """One compiled instruction: place ``placement`` as assembly step ``index``."""

    index: int
    placement: Placement
    layer: int


def occupied_cells(plan: AssemblyPlan, placement: Placement) -> set[tuple[int, int, int]]:
    """All (cell_x, cell_y, layer) cells filled by a placement's volume."""
    brick = plan.brick(placement.type_id)
    w, d = placement.footprint(brick)
    return {
        (placement.cell_x + dx, placement.cell_y + dy, placement.layer + dz)
        for dx in range(w)
        for dy in range(d)
        for dz in range(brick.height_layers)
    }


def validate_plan(plan: AssemblyPlan) -> list[Violation]:
    """Every collision pair and unsupported placement, or [] when valid.

    Collisions come first, sorted by placement-index pair; unsupported
    placements follow, sorted by index.
    """
    cell_owner: dict[tuple[int, int, int], list[int]] = {}
    volumes: list[set[tuple[int, int, int]]] = []
    for i, p in enumerate(plan.placements):
        cells = occupied_cells(plan, p)
        volumes.append(cells)
        for c in cells:
            cell_owner.setdefault(c, []).append(i)

    collision_pairs: set[tuple[int, int]] = set()
    for owners in cell_owner.values():
        if len(owners) > 1:
            for a in range(len(owners)):
                for b in range(a + 1, len(owners)):
                    collision_pairs.add((owners[a], owners[b]))

    occupied = set(cell_owner)
    unsupported: list[int] = []
    for i, p in enumerate(plan.placements):
        if p.layer == 0:
            continue
        brick = plan.brick(p.type_id)
        w, d = p.footprint(brick)
        below = (
            (p.cell_x + dx, p.cell_y + dy, p.layer - 1)
            for dx in range(w)
            for dy in range(d)
        )
        if not any(c in occupied for c in below):
            unsupported.append(i)

    report = [Violation("collision", a, b) for a, b in sorted(collision_pairs)]
    report.extend(Violation("unsupported", i) for i in sorted(unsupported))
    return report


def compile_steps(plan: AssemblyPlan) -> list[Step]:
    """Order placements layer by layer (scanline within a layer) into steps."""
    violations = validate_plan(plan)
    if violations:
        raise InvalidPlanError(violations)
    order = sorted(
        range(len(plan.placements)),
        key=lambda i: (
            plan.placements[i].layer,
            plan.placements[i].cell_y,
            plan.placements[i].cell_x,
            i,
        ),
    )
    return [
        Step(index=k, placement=plan.placements[i], layer=plan.placements[i].layer)
        for k, i in enumerate(order)
    ]


def _parse_int(token: str, line: int, what: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise PlanSyntaxError(line, f"{what} must be an integer, got {token!r}") from None


def _parse_float(token: str, line: int, what: str) -> float:
    try:
        return float(token)
    except ValueError:
        raise PlanSyntaxError(line, f"{what} must be a number, got {token!r}") from None


def parse_plan_structure(text: str) -> AssemblyPlan:
    """Parse the line grammar without semantic validation.

    The returned plan may still contain collisions or unsupported placements;
    run :func:`validate_plan` to find them.  Raises PlanSyntaxError,
    UnknownBrickError, or DuplicateBrickError on structural problems.
    """
    name: Optional[str] = None
    grid: Optional[GridSpec] = None
    bricks: list[BrickType] = []
    parts: list[tuple[int, str, Placement]] = []

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        directive, args = tokens[0], tokens[1:]

        if name is None and directive != "PLAN":
            raise PlanSyntaxError(line_no, "first directive must be PLAN")

        if directive == "PLAN":
            if name is not None:
                raise PlanSyntaxError(line_no, "duplicate PLAN directive")
            if len(args) != 1:
                raise PlanSyntaxError(line_no, "PLAN takes exactly one name token")
            name = args[0]
        elif directive == "GRID":
            if grid is not None:
                raise PlanSyntaxError(line_no, "duplicate GRID directive")
            if len(args) != 2:
                raise PlanSyntaxError(line_no, "GRID takes <pitch_mm> <layer_height_mm>")
            pitch = _parse_float(args[0], line_no, "pitch_mm")
            layer_h = _parse_float(args[1], line_no, "layer_height_mm")
            try:
                grid = GridSpec(pitch, layer_h)
            except ValueError as e:
                raise PlanSyntaxError(line_no, str(e)) from None
        elif directive == "BRICK":
            if len(args) not in (3, 4):
                raise PlanSyntaxError(
                    line_no, "BRICK takes <type_id> <width> <depth> [<height>]"
                )
            type_id = args[0]
            w = _parse_int(args[1], line_no, "width_studs")
            d = _parse_int(args[2], line_no, "depth_studs")
            h = _parse_int(args[3], line_no, "height_layers") if len(args) == 4 else 1
            if any(b.type_id == type_id for b in bricks):
                raise DuplicateBrickError(type_id)
            try:
                bricks.append(BrickType(type_id, _default_name(w, d, h), w, d, h))
            except ValueError as e:
                raise PlanSyntaxError(line_no, str(e)) from None
        elif directive == "PART":
            if len(args) != 5:
                raise PlanSyntaxError(
                    line_no, "PART takes <type_id> <cell_x> <cell_y> <layer> <rot>"
                )
            rot = _parse_int(args[4], line_no, "rotation")
            layer = _parse_int(args[3], line_no, "layer")
            if rot not in VALID_ROTATIONS:
                raise PlanSyntaxError(line_no, f"rotation must be one of {VALID_ROTATIONS}")
            if layer < 0:
                raise PlanSyntaxError(line_no, "layer must be non-negative")
            placement = Placement(
                type_id=args[0],
                cell_x=_parse_int(args[1], line_no, "cell_x"),
                cell_y=_parse_int(args[2], line_no, "cell_y"),
                layer=layer,
                rotation=rot,
            )
            parts.append((line_no, args[0], placement))
        else:
            raise PlanSyntaxError(line_no, f"unknown directive {directive!r}")

    if name is None:
        raise PlanSyntaxError(1, "empty document: missing PLAN directive")

    catalog = tuple(bricks) if bricks else default_catalog()
    known = {b.type_id for b in catalog}
    for line_no, type_id, _ in parts:
        if type_id not in known:
            raise UnknownBrickError(type_id, line_no)

    return AssemblyPlan(
        name=name,
        grid=grid if grid is not None else GridSpec(),
        catalog=catalog,
        placements=tuple(p for _, _, p in parts),
    )


def parse_plan(text: str) -> AssemblyPlan:
    """Parse and fully validate a plan document.

    The first semantic violation is raised as CollisionError or
    UnsupportedPlacementError; structural problems raise the parse errors
    from :func:`parse_plan_structure`.
    """
    plan = parse_plan_structure(text)
    for v in validate_plan(plan):
        if v.kind == "collision":
            raise CollisionError(v.first, v.second)  # type: ignore[arg-type]
        raise UnsupportedPlacementError(v.first)
    return plan


def serialize_plan(plan: AssemblyPlan) -> str:
    """Canonical document for a plan; parse_plan_structure(serialize(p)) == p.

    Brick display names are derived from dimensions, so the round trip is
    exact for plans whose catalog uses the derived names (all parsed plans
    do).  GRID and BRICK lines are omitted when they equal the defaults, so
    an all-default empty plan serializes to the PLAN header alone.
    """
    lines = [f"PLAN {plan.name}"]
    if plan.grid != GridSpec():
        lines.append(f"GRID {plan.grid.pitch_mm!r} {plan.grid.layer_height_mm!r}")
    if plan.catalog != default_catalog():
        for b in plan.catalog:
            suffix = f" {b.height_layers}" if b.height_layers != 1 else ""
            lines.append(f"BRICK {b.type_id} {b.width_studs} {b.depth_studs}{suffix}")
    for p in plan.placements:
        lines.append(
            f"PART {p.type_id} {p.cell_x} {p.cell_y} {p.layer} {p.rotation}"
        )
    return "\n".join(lines) + "\n"
