"""Simulated workspace and synthetic detector.

The workspace mirrors the guided-assembly bench: loose parts wait on a
supply grid in the right half (x > 0), the model grows in the build area in
the left half (x < 0).  Actions teleport parts between supply, hand, and
placed states; the renderer projects every visible part's top face through
the camera and corrupts the resulting boxes with configurable detector
noise.  All randomness comes from a generator seeded with (seed, frame),
so a frame's detections are a pure function of scene state and config.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Union

import numpy as np

from .geometry import BBox2D, CameraModel, Pose, _project_points
from .plan import AssemblyPlan, Placement, Step, compile_steps

IN_SUPPLY = "in_supply"
IN_HAND = "in_hand"
PLACED = "placed"


class SceneError(Exception):
    """Base class for scene failures."""


class LayoutOverflow(SceneError):
    """Parts do not fit the supply grid, or the build crosses the midline."""


class IllegalTransition(SceneError):
    def __init__(self, instance_id: int, from_status: Optional[str], action: str):
        super().__init__(
            f"part {instance_id}: cannot {action} from {from_status or 'nowhere'}"
        )
        self.instance_id = instance_id
        self.from_status = from_status
        self.action = action


class ScriptSyntaxError(SceneError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


@dataclass(frozen=True)
class LayoutConfig:
    """Where supply slots and the build grid sit in the workspace."""

    supply_origin: tuple[float, float] = (0.08, -0.25)
    build_origin: tuple[float, float] = (-0.45, -0.15)
    supply_spacing_m: float = 0.07
    supply_columns: int = 8
    supply_max_rows: int = 8

    def __post_init__(self) -> None:
        if self.supply_origin[0] <= 0:
            raise ValueError("supply_origin must lie in the right half (x > 0)")
        if self.build_origin[0] >= 0:
            raise ValueError("build_origin must lie in the left half (x < 0)")
        if self.supply_spacing_m <= 0:
            raise ValueError("supply_spacing_m must be positive")
        if self.supply_columns < 1 or self.supply_max_rows < 1:
            raise ValueError("supply grid must have at least one slot")

    def supply_slot(self, index: int) -> tuple[float, float]:
        col = index % self.supply_columns
        row = index // self.supply_columns
        return (
            self.supply_origin[0] + col * self.supply_spacing_m,
            self.supply_origin[1] + row * self.supply_spacing_m,
        )


@dataclass(frozen=True)
class NoiseConfig:
    """Detector imperfection model; all draws derive from (seed, frame)."""

    jitter_sigma_px: float = 0.0
    miss_prob: float = 0.0
    false_positive_rate: float = 0.0
    class_confusion_prob: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.jitter_sigma_px < 0:
            raise ValueError("jitter_sigma_px must be >= 0")
        if not 0.0 <= self.miss_prob < 1.0:
            raise ValueError("miss_prob must be in [0, 1)")
        if self.false_positive_rate < 0:
            raise ValueError("false_positive_rate must be >= 0")
        if not 0.0 <= self.class_confusion_prob < 1.0:
            raise ValueError("class_confusion_prob must be in [0, 1)")


NOISE_ZERO = NoiseConfig()
NOISE_DEFAULT = NoiseConfig(
    jitter_sigma_px=2.0,
    miss_prob=0.05,
    false_positive_rate=0.02,
    class_confusion_prob=0.01,
)
NOISE_HEAVY = NoiseConfig(
    jitter_sigma_px=4.0,
    miss_prob=0.15,
    false_positive_rate=0.5,
    class_confusion_prob=0.05,
)


@dataclass(frozen=True)
class ScenePart:
    """One physical brick: its class, where it is, and how it got there.

    plane_pose is (x_m, y_m, yaw_deg) of the footprint center; supply_xy
    remembers the home slot so a removed part returns to it; placement and
    placed_step are set only while the part is placed (placed_step is the
    matching compiled step, if the placement corresponds to one).
    """

    instance_id: int
    type_id: str
    plane_pose: tuple[float, float, int]
    status: str
    supply_xy: tuple[float, float]
    placement: Optional[Placement] = None
    placed_step: Optional[int] = None


@dataclass(frozen=True)
class SceneState:
    plan: AssemblyPlan
    steps: tuple[Step, ...]
    layout: LayoutConfig
    parts: tuple[ScenePart, ...]
    frame_counter: int = 0


@dataclass(frozen=True)
class Pick:
    instance_id: int


@dataclass(frozen=True)
class Place:
    instance_id: int
    cell_x: int
    cell_y: int
    layer: int
    rotation: int


@dataclass(frozen=True)
class Remove:
    instance_id: int


@dataclass(frozen=True)
class Tick:
    """Script-only command: advance n frames between actions."""

    frames: int


Action = Union[Pick, Place, Remove]


def _placement_center(
    plan: AssemblyPlan, layout: LayoutConfig, placement: Placement
) -> tuple[float, float]:
    brick = plan.brick(placement.type_id)
    w, d = placement.footprint(brick)
    pitch = plan.grid.pitch_m
    return (
        layout.build_origin[0] + (placement.cell_x + w / 2.0) * pitch,
        layout.build_origin[1] + (placement.cell_y + d / 2.0) * pitch,
    )


def init_scene(plan: AssemblyPlan, layout: LayoutConfig) -> SceneState:
    """One supply part per compiled step, on the supply grid in step order.

    Raises LayoutOverflow when the parts outgrow the supply grid or any
    planned placement would cross into the supply half.
    """
    steps = compile_steps(plan)
    capacity = layout.supply_columns * layout.supply_max_rows
    if len(steps) > capacity:
        raise LayoutOverflow(
            f"{len(steps)} parts exceed {capacity} supply slots"
        )
    pitch = plan.grid.pitch_m
    for step in steps:
        brick = plan.brick(step.placement.type_id)
        w, _ = step.placement.footprint(brick)
        right_edge = layout.build_origin[0] + (step.placement.cell_x + w) * pitch
        if right_edge >= 0:
            raise LayoutOverflow(
                f"step {step.index} placement reaches x = {right_edge:.3f} m"
            )
    parts = []
    for step in steps:
        slot = layout.supply_slot(step.index)
        parts.append(
            ScenePart(
                instance_id=step.index,
                type_id=step.placement.type_id,
                plane_pose=(slot[0], slot[1], 0),
                status=IN_SUPPLY,
                supply_xy=slot,
            )
        )
    return SceneState(
        plan=plan, steps=tuple(steps), layout=layout, parts=tuple(parts)
    )


def apply_action(scene: SceneState, action: Action) -> SceneState:
    """Apply one pick/place/remove transition, returning the new scene."""
    index = next(
        (
            k
            for k, p in enumerate(scene.parts)
            if p.instance_id == action.instance_id
        ),
        None,
    )
    if index is None:
        raise IllegalTransition(action.instance_id, None, type(action).__name__)
    part = scene.parts[index]

    if isinstance(action, Pick):
        if part.status != IN_SUPPLY:
            raise IllegalTransition(part.instance_id, part.status, "Pick")
        new_part = replace(part, status=IN_HAND, placement=None, placed_step=None)
    elif isinstance(action, Place):
        if part.status != IN_HAND:
            raise IllegalTransition(part.instance_id, part.status, "Place")
        placement = Placement(
            type_id=part.type_id,
            cell_x=action.cell_x,
            cell_y=action.cell_y,
            layer=action.layer,
            rotation=action.rotation,
        )
        cx, cy = _placement_center(scene.plan, scene.layout, placement)
        matched = next(
            (s.index for s in scene.steps if s.placement == placement), None
        )
        new_part = replace(
            part,
            status=PLACED,
            plane_pose=(cx, cy, action.rotation),
            placement=placement,
            placed_step=matched,
        )
    elif isinstance(action, Remove):
        if part.status != PLACED:
            raise IllegalTransition(part.instance_id, part.status, "Remove")
        new_part = replace(
            part,
            status=IN_SUPPLY,
            plane_pose=(part.supply_xy[0], part.supply_xy[1], 0),
            placement=None,
            placed_step=None,
        )
    else:
        raise IllegalTransition(action.instance_id, part.status, str(action))

    parts = scene.parts[:index] + (new_part,) + scene.parts[index + 1 :]
    return replace(scene, parts=parts)


def advance_frame(scene: SceneState, frames: int = 1) -> SceneState:
    return replace(scene, frame_counter=scene.frame_counter + frames)


def part_top_rect(
    scene: SceneState, part: ScenePart
) -> tuple[float, float, float, float, float]:
    """(center_x, center_y, extent_x, extent_y, top_z) of a part's top face."""
    brick = scene.plan.brick(part.type_id)
    layer_h = scene.plan.grid.layer_height_m
    pitch = scene.plan.grid.pitch_m
    if part.placement is not None:
        w, d = part.placement.footprint(brick)
        top_z = (part.placement.layer + brick.height_layers) * layer_h
    else:
        w, d = brick.width_studs, brick.depth_studs
        top_z = brick.height_layers * layer_h
    return (
        part.plane_pose[0],
        part.plane_pose[1],
        w * pitch,
        d * pitch,
        top_z,
    )


def _intersects_image(
    camera: CameraModel, x0: float, y0: float, x1: float, y1: float
) -> bool:
    return (
        x1 > 0.0
        and y1 > 0.0
        and x0 < camera.image_width_px
        and y0 < camera.image_height_px
    )


def render_detections(
    scene: SceneState, camera: CameraModel, pose: Pose, noise: NoiseConfig
) -> list[BBox2D]:
    """Synthesize one frame of detector output.

    Every part that is not in hand projects its top-face footprint to a
    pixel box, which is then edge-jittered, possibly dropped, possibly
    relabelled; Poisson-many spurious boxes follow.  The draw order per
    part is fixed (jitter, miss, confusion, confidence) so the stream, and
    therefore the whole frame, is reproducible from (seed, frame).
    """
    rng = np.random.default_rng([noise.seed & 0xFFFFFFFFFFFFFFFF, scene.frame_counter])
    out: list[BBox2D] = []
    type_ids = [b.type_id for b in scene.plan.catalog]

    # Draw first, project second: the noise stream stays a fixed function
    # of part order while every corner goes through one batched projection.
    staged = []
    corners: list[tuple[float, float, float]] = []
    for part in scene.parts:
        if part.status == IN_HAND:
            continue
        cx, cy, ex, ey, top_z = part_top_rect(scene, part)
        corners += [
            (cx - ex / 2, cy - ey / 2, top_z),
            (cx + ex / 2, cy - ey / 2, top_z),
            (cx + ex / 2, cy + ey / 2, top_z),
            (cx - ex / 2, cy + ey / 2, top_z),
        ]
        jitter = rng.normal(0.0, noise.jitter_sigma_px, size=4)
        missed = rng.uniform() < noise.miss_prob
        confused = rng.uniform() < noise.class_confusion_prob
        confusion_pick = int(rng.integers(0, max(len(type_ids) - 1, 1)))
        confidence = 1.0 - float(rng.uniform(0.0, 0.05))
        staged.append((part, jitter, missed, confused, confusion_pick, confidence))

    if staged:
        uv, ok = _project_points(camera, pose, np.asarray(corners))
        for k, (part, jitter, missed, confused, pick, confidence) in enumerate(staged):
            if not ok[4 * k : 4 * k + 4].all():
                continue
            quad = uv[4 * k : 4 * k + 4]
            x0 = quad[:, 0].min() + jitter[0]
            x1 = quad[:, 0].max() + jitter[1]
            y0 = quad[:, 1].min() + jitter[2]
            y1 = quad[:, 1].max() + jitter[3]
            if missed or x0 >= x1 or y0 >= y1:
                continue
            if not _intersects_image(camera, x0, y0, x1, y1):
                continue
            label = part.type_id
            if confused and len(type_ids) > 1:
                others = [t for t in type_ids if t != part.type_id]
                label = others[pick % len(others)]
            out.append(BBox2D(x0, y0, x1, y1, label, confidence))

    n_spurious = int(rng.poisson(noise.false_positive_rate))
    for _ in range(n_spurious):
        cx = float(rng.uniform(0, camera.image_width_px))
        cy = float(rng.uniform(0, camera.image_height_px))
        w = float(rng.uniform(8.0, 100.0))
        h = float(rng.uniform(8.0, 100.0))
        label = type_ids[int(rng.integers(0, len(type_ids)))]
        conf = float(rng.uniform(0.3, 0.9))
        out.append(BBox2D(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2, label, conf))
    return out


def parse_action_script(text: str) -> list[Union[Tick, Pick, Place, Remove]]:
    """Parse the headless action-script format.

    TICK <n> | PICK <id> | PLACE <id> <x> <y> <layer> <rot> | REMOVE <id>,
    with ``#`` comments and blank lines ignored.
    """
    commands: list[Union[Tick, Pick, Place, Remove]] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        op, args = tokens[0], tokens[1:]

        def as_int(token: str, what: str) -> int:
            try:
                return int(token)
            except ValueError:
                raise ScriptSyntaxError(
                    line_no, f"{what} must be an integer, got {token!r}"
                ) from None

        if op == "TICK":
            if len(args) != 1:
                raise ScriptSyntaxError(line_no, "TICK takes <n>")
            n = as_int(args[0], "frame count")
            if n < 1:
                raise ScriptSyntaxError(line_no, "TICK count must be >= 1")
            commands.append(Tick(n))
        elif op == "PICK":
            if len(args) != 1:
                raise ScriptSyntaxError(line_no, "PICK takes <instance_id>")
            commands.append(Pick(as_int(args[0], "instance_id")))
        elif op == "REMOVE":
            if len(args) != 1:
                raise ScriptSyntaxError(line_no, "REMOVE takes <instance_id>")
            commands.append(Remove(as_int(args[0], "instance_id")))
        elif op == "PLACE":
            if len(args) != 5:
                raise ScriptSyntaxError(
                    line_no, "PLACE takes <instance_id> <x> <y> <layer> <rot>"
                )
            rot = as_int(args[4], "rotation")
            if rot not in (0, 90, 180, 270):
                raise ScriptSyntaxError(line_no, "rotation must be 0|90|180|270")
            commands.append(
                Place(
                    as_int(args[0], "instance_id"),
                    as_int(args[1], "cell_x"),
                    as_int(args[2], "cell_y"),
                    as_int(args[3], "layer"),
                    rot,
                )
            )
        else:
            raise ScriptSyntaxError(line_no, f"unknown command {op!r}")
    return commands


def serialize_action_script(commands) -> str:
    lines = []
    for cmd in commands:
        if isinstance(cmd, Tick):
            lines.append(f"TICK {cmd.frames}")
        elif isinstance(cmd, Pick):
            lines.append(f"PICK {cmd.instance_id}")
        elif isinstance(cmd, Remove):
            lines.append(f"REMOVE {cmd.instance_id}")
        elif isinstance(cmd, Place):
            lines.append(
                f"PLACE {cmd.instance_id} {cmd.cell_x} {cmd.cell_y} "
                f"{cmd.layer} {cmd.rotation}"
            )
        else:
            raise TypeError(f"not a script command: {cmd!r}")
    return "\n".join(lines) + "\n" if lines else ""


def build_perfect_script(
    plan: AssemblyPlan, confirm_frames: int = 5, settle_frames: int = 4,
    drain_frames: int = 60,
) -> str:
    """A script that executes every step in order and waits for confirmation.

    Each step picks its part, lets one frame of hand travel pass, places at
    the planned cells, then idles long enough for completion hysteresis to
    fire with margin.  The trailing drain window lets confirmations that
    lagged behind the per-step window (dropped detection frames reset the
    consecutive-hit count) finish before the script ends.
    """
    commands: list[Union[Tick, Pick, Place, Remove]] = [Tick(2)]
    for step in compile_steps(plan):
        p = step.placement
        commands.append(Pick(step.index))
        commands.append(Tick(1))
        commands.append(Place(step.index, p.cell_x, p.cell_y, p.layer, p.rotation))
        commands.append(Tick(confirm_frames + settle_frames))
    commands.append(Tick(drain_frames))
    return serialize_action_script(commands)
