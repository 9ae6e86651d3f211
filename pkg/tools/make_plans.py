"""Generate and verify the bundled demonstration plans.

Two models ship with the package:

* ``egg``: six stacked hollow square rings whose outer widths follow an
  egg profile (10, 12, 12, 10, 8, 6 studs).  Each ring is built from a
  single brick class, cycling 2x6, 2x4, 2x3, 2x2 up the shell, so rings
  near each other never share a class, and the two rings that do repeat
  one (layers 1 and 4, 2 and 5) keep their segments staggered far apart.
* ``twist``: an eight-layer weave.  Every placement on layer k carries
  rotation (90 + 90*k) % 360, so each layer turns a quarter turn past
  the one below, alternating horizontal and vertical ranks.  Classes
  cycle 2x6, 2x3, 2x4, 2x2 twice, with the second cycle laterally offset
  from the first.

Detections carry no height, so evidence near one step's target must
never be confusable with another step's brick.  Two rules keep the
plans unambiguous under default noise:

* Same-class placements keep footprint centers more than 25 mm apart,
  just over the 24 mm association gate.  A track then never alternates
  between two bricks, so it cannot smear into a phantom box partway
  between them, and every settled track stays well clear of the 12 mm
  completion tolerance of any step but its own.
* Back-projection resolves height by testing step planes, so a brick
  lifted onto another same-class step's plane must still miss that
  step's target.  The lift scales ground positions about the camera
  axis by the plane-height ratio, roughly 4 mm of radial shift per
  layer of height error at the build radius.

This script checks both rules for every pair, then replays scripted
sessions (one clean, twenty noisy) and fails if any step ever completes
before its scripted placement.
"""

from __future__ import annotations

import dataclasses
import sys
import time
from pathlib import Path

from brickguide.association import placement_target_box
from brickguide.geometry import project_point
from brickguide.guidance import (
    SESSION_COMPLETED,
    SESSION_STARTED,
    STEP_COMPLETED,
    STEP_REGRESSED,
    STEP_STARTED,
)
from brickguide.plan import AssemblyPlan, parse_plan, serialize_plan
from brickguide.scene import (
    NOISE_DEFAULT,
    LayoutConfig,
    Place,
    Tick,
    build_perfect_script,
    parse_action_script,
)
from brickguide.session import (
    SessionConfig,
    SessionCore,
    default_camera,
    default_pose,
    run_script,
)

SEP_MIN_M = 0.025
LIFT_DIST_M = 0.018
LIFT_OVERLAP = 0.40
VIEW_MARGIN_PX = 15.0
NOISE_SEEDS = 20

OUT_DIR = Path(__file__).resolve().parent.parent / "src" / "brickguide" / "plans"

Row = tuple[str, int, int, int, int]


def egg_placements() -> list[Row]:
    """Hollow ring tower with an egg profile, 34 parts over 6 layers.

    Ring k has outer width ``s`` and corner inset ``o = (12 - s) / 2``;
    south and north walls are horizontal segments, west and east walls
    vertical ones, with open corners between them.  One class per ring,
    cycling up the shell; the repeats (2x4 on layers 1/4, 2x3 on layers
    2/5) sit with at least 25.3 mm between same-class centers.
    """
    return [
        # layer 0: ring 10, all 2x6
        ("2x6", 3, 1, 0, 90), ("2x6", 3, 9, 0, 90),
        ("2x6", 1, 3, 0, 0), ("2x6", 9, 3, 0, 0),
        # layer 1: ring 12, all 2x4
        ("2x4", 1, 0, 1, 90), ("2x4", 7, 0, 1, 90),
        ("2x4", 1, 10, 1, 90), ("2x4", 7, 10, 1, 90),
        ("2x4", 0, 2, 1, 0), ("2x4", 0, 6, 1, 0),
        ("2x4", 10, 2, 1, 0), ("2x4", 10, 6, 1, 0),
        # layer 2: ring 12, all 2x3
        ("2x3", 1, 0, 2, 90), ("2x3", 5, 0, 2, 90), ("2x3", 9, 0, 2, 90),
        ("2x3", 1, 10, 2, 90), ("2x3", 5, 10, 2, 90), ("2x3", 9, 10, 2, 90),
        ("2x3", 0, 4, 2, 0), ("2x3", 10, 4, 2, 0),
        # layer 3: ring 10, all 2x2
        ("2x2", 1, 1, 3, 0), ("2x2", 5, 1, 3, 0), ("2x2", 9, 1, 3, 0),
        ("2x2", 1, 9, 3, 0), ("2x2", 5, 9, 3, 0), ("2x2", 9, 9, 3, 0),
        ("2x2", 1, 5, 3, 0), ("2x2", 9, 5, 3, 0),
        # layer 4: ring 8, 2x4 walls with 1x4 sides
        ("2x4", 4, 2, 4, 90), ("2x4", 4, 8, 4, 90),
        ("1x4", 2, 4, 4, 0), ("1x4", 9, 4, 4, 0),
        # layer 5: ring 6, 2x3 walls
        ("2x3", 4, 3, 5, 90), ("2x3", 4, 7, 5, 90),
    ]


def twist_placements() -> list[Row]:
    """Quarter-turn weave, 32 parts over 8 layers.

    Layers alternate horizontal and vertical bricks with one rotation
    per layer, (90 + 90*k) % 360.  The first class cycle (layers 0-3)
    lays four corner blocks plus one center brick per layer; the second
    cycle (layers 4-7) bridges between them, offset so every same-class
    pair sits at least 32 mm apart.
    """
    rows: list[Row] = []
    tables: list[tuple[str, list[tuple[int, int]]]] = [
        ("2x6", [(2, 2), (12, 2), (2, 12), (12, 12), (7, 7)]),
        ("2x3", [(3, 1), (13, 1), (3, 11), (13, 11), (8, 6)]),
        ("2x4", [(1, 2), (11, 2), (1, 12), (11, 12), (6, 7)]),
        ("2x2", [(2, 2), (12, 2), (2, 12), (12, 12), (8, 7)]),
        ("2x6", [(7, 3), (7, 11), (3, 7)]),
        ("2x3", [(8, 2), (4, 6), (8, 10)]),
        ("2x4", [(6, 3), (2, 6), (6, 11)]),
        ("2x2", [(6, 3), (3, 6), (8, 11)]),
    ]
    for layer, (type_id, spots) in enumerate(tables):
        rot = (90 + 90 * layer) % 360
        for x, y in spots:
            rows.append((type_id, x, y, layer, rot))
    return rows


def to_plan_text(name: str, rows: list[Row]) -> str:
    ordered = sorted(rows, key=lambda r: (r[3], r[2], r[1]))
    lines = [f"PLAN {name}"]
    lines += [f"PART {t} {x} {y} {layer} {rot}" for t, x, y, layer, rot in ordered]
    return "\n".join(lines) + "\n"


def _overlap_vs_target(box, target) -> float:
    """Intersection area as a fraction of the target box area."""
    ox = min(box.center_x + box.extent_x / 2, target.center_x + target.extent_x / 2) - max(
        box.center_x - box.extent_x / 2, target.center_x - target.extent_x / 2
    )
    oy = min(box.center_y + box.extent_y / 2, target.center_y + target.extent_y / 2) - max(
        box.center_y - box.extent_y / 2, target.center_y - target.extent_y / 2
    )
    if ox <= 0 or oy <= 0:
        return 0.0
    return (ox * oy) / (target.extent_x * target.extent_y)


def check_separation(name: str, plan: AssemblyPlan) -> list[str]:
    """Same-class footprint centers must clear the association gate."""
    problems = []
    origin = LayoutConfig().build_origin
    boxes = [placement_target_box(plan, p, origin) for p in plan.placements]
    for i in range(len(boxes)):
        for j in range(i + 1, len(boxes)):
            a, b = boxes[i], boxes[j]
            if a.label != b.label:
                continue
            dist = ((a.center_x - b.center_x) ** 2 + (a.center_y - b.center_y) ** 2) ** 0.5
            if dist <= SEP_MIN_M:
                problems.append(
                    f"{name}: placements {i} and {j} ({a.label}) separated by "
                    f"only {dist * 1000:.1f} mm"
                )
    return problems


def check_lift_aliases(name: str, plan: AssemblyPlan) -> list[str]:
    """No brick may alias another step's target via a wrong-plane lift."""
    problems = []
    layout = LayoutConfig()
    cam_x, cam_y, cam_z = default_pose().position
    boxes = [placement_target_box(plan, p, layout.build_origin) for p in plan.placements]
    planes = [
        (p.layer + plan.brick(p.type_id).height_layers) * plan.grid.layer_height_m
        for p in plan.placements
    ]
    for j, brick in enumerate(boxes):
        for i, target in enumerate(boxes):
            if i == j or brick.label != target.label or planes[i] == planes[j]:
                continue
            scale = (cam_z - planes[i]) / (cam_z - planes[j])
            lifted = dataclasses.replace(
                brick,
                center_x=cam_x + (brick.center_x - cam_x) * scale,
                center_y=cam_y + (brick.center_y - cam_y) * scale,
                extent_x=brick.extent_x * scale,
                extent_y=brick.extent_y * scale,
            )
            dist = (
                (lifted.center_x - target.center_x) ** 2
                + (lifted.center_y - target.center_y) ** 2
            ) ** 0.5
            ratio = _overlap_vs_target(lifted, target)
            if dist <= LIFT_DIST_M and ratio >= LIFT_OVERLAP:
                problems.append(
                    f"{name}: placement {j} lifted to step {i}'s plane lands "
                    f"{dist * 1000:.1f} mm from its target with overlap {ratio:.2f}"
                )
    return problems


def check_layout(name: str, plan: AssemblyPlan) -> list[str]:
    """Build stays left of the midline, everything projects inside view."""
    problems = []
    layout = LayoutConfig()
    camera = default_camera()
    pose = default_pose()
    capacity = layout.supply_columns * layout.supply_max_rows
    if len(plan.placements) > capacity:
        problems.append(
            f"{name}: {len(plan.placements)} parts exceed the "
            f"{capacity}-slot supply grid"
        )

    def in_view(x: float, y: float, z: float) -> bool:
        u, v = project_point(camera, pose, (x, y, z))
        return (
            VIEW_MARGIN_PX <= u <= camera.image_width_px - VIEW_MARGIN_PX
            and VIEW_MARGIN_PX <= v <= camera.image_height_px - VIEW_MARGIN_PX
        )

    for i, p in enumerate(plan.placements):
        box = placement_target_box(plan, p, layout.build_origin)
        top = (p.layer + plan.brick(p.type_id).height_layers) * plan.grid.layer_height_m
        x_max = box.center_x + box.extent_x / 2
        if x_max >= -0.01:
            problems.append(f"{name}: placement {i} crosses the midline (x={x_max:.3f})")
        for sx in (-0.5, 0.5):
            for sy in (-0.5, 0.5):
                x = box.center_x + sx * box.extent_x
                y = box.center_y + sy * box.extent_y
                if not in_view(x, y, top):
                    problems.append(f"{name}: placement {i} corner leaves the view")
    for i in range(len(plan.placements)):
        sx, sy = layout.supply_slot(i)
        if sx <= 0.01:
            problems.append(f"{name}: supply slot {i} crosses the midline")
        if not in_view(sx, sy, 0.0):
            problems.append(f"{name}: supply slot {i} leaves the view")
    return sorted(set(problems))


def place_ticks(commands) -> dict[int, int]:
    """Tick index at which each scripted placement takes effect."""
    placed: dict[int, int] = {}
    step = 0
    tick = 0
    pending = 0
    for cmd in commands:
        if isinstance(cmd, Tick):
            for _ in range(cmd.frames):
                while pending:
                    placed[step] = tick
                    step += 1
                    pending -= 1
                tick += 1
        elif isinstance(cmd, Place):
            pending += 1
    while pending:
        placed[step] = tick
        step += 1
        pending -= 1
    return placed


def check_runs(name: str, plan: AssemblyPlan) -> list[str]:
    """Scripted sessions must complete, in order, without false steps."""
    problems = []
    commands = parse_action_script(build_perfect_script(plan))
    placed = place_ticks(commands)
    n_steps = len(plan.placements)

    t0 = time.perf_counter()
    core = SessionCore(plan, SessionConfig())
    result = run_script(core, commands)
    elapsed = time.perf_counter() - t0
    print(f"  {name}: zero-noise run {elapsed:.2f}s, {n_steps} parts")
    expected = [SESSION_STARTED, STEP_STARTED]
    for i in range(n_steps):
        expected += [STEP_COMPLETED, STEP_STARTED] if i < n_steps - 1 else [STEP_COMPLETED]
    expected.append(SESSION_COMPLETED)
    kinds = [e.kind for e in result.events]
    if not result.completed:
        problems.append(f"{name}: zero-noise run did not complete")
    elif kinds != expected:
        problems.append(f"{name}: zero-noise event order is not the canonical ladder")

    for seed in range(NOISE_SEEDS):
        noise = dataclasses.replace(NOISE_DEFAULT, seed=seed)
        core = SessionCore(plan, SessionConfig(noise=noise))
        result = run_script(core, commands)
        if not result.completed:
            problems.append(f"{name} [noise seed {seed}]: run did not complete")
            continue
        done = set()
        for e in result.events:
            if e.kind == STEP_REGRESSED:
                problems.append(f"{name} [noise seed {seed}]: step {e.step_index} regressed")
            if e.kind == STEP_COMPLETED:
                done.add(e.step_index)
                if e.frame < placed[e.step_index]:
                    problems.append(
                        f"{name} [noise seed {seed}]: step {e.step_index} completed "
                        f"at frame {e.frame}, before its placement at tick "
                        f"{placed[e.step_index]}"
                    )
        if done != set(range(n_steps)):
            problems.append(f"{name} [noise seed {seed}]: not every step completed")
    return problems


def check_rotation_offset(name: str, plan: AssemblyPlan) -> list[str]:
    """Each layer carries one rotation, a quarter turn past the layer below."""
    problems = []
    by_layer: dict[int, set[int]] = {}
    for p in plan.placements:
        by_layer.setdefault(p.layer, set()).add(p.rotation)
    layers = sorted(by_layer)
    for k in layers:
        if len(by_layer[k]) != 1:
            problems.append(f"{name}: layer {k} mixes rotations {sorted(by_layer[k])}")
    if not problems:
        for a, b in zip(layers, layers[1:]):
            (ra,), (rb,) = by_layer[a], by_layer[b]
            if (rb - ra) % 360 != 90:
                problems.append(
                    f"{name}: layers {a}->{b} rotate by {(rb - ra) % 360}, not 90"
                )
    return problems


def build(name: str, rows: list[Row], min_layers: int, extra_checks=()) -> int:
    text = to_plan_text(name, rows)
    plan = parse_plan(text)
    n_layers = max(p.layer for p in plan.placements) + 1
    problems = []
    if n_layers < min_layers:
        problems.append(f"{name}: only {n_layers} layers, need {min_layers}")
    if len(plan.placements) < 30:
        problems.append(f"{name}: only {len(plan.placements)} parts, need 30")
    problems += check_separation(name, plan)
    problems += check_lift_aliases(name, plan)
    problems += check_layout(name, plan)
    for check in extra_checks:
        problems += check(name, plan)
    if not problems:
        problems += check_runs(name, plan)
    if problems:
        print(f"FAIL {name}:")
        for p in problems:
            print(f"  {p}")
        return 1

    OUT_DIR.mkdir(parents=True, exist_ok=True)
    (OUT_DIR / f"{name}.plan").write_text(serialize_plan(plan))
    (OUT_DIR / f"{name}.script").write_text(build_perfect_script(plan))
    print(f"OK {name}: {len(plan.placements)} parts, {n_layers} layers")
    return 0


def main() -> int:
    status = build("egg", egg_placements(), min_layers=5)
    status |= build(
        "twist", twist_placements(), min_layers=8, extra_checks=[check_rotation_offset]
    )
    return status


if __name__ == "__main__":
    sys.exit(main())
