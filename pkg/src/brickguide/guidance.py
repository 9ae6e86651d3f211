"""Step-by-step guidance: advancement, highlighting, and regression.

The session walks the compiled step list.  Completion of the active step
is decided by association.step_complete over the current track list; a
completed placement that structurally supports the active step and stays
unseen for a full regression window reverts the session to that step.
After the last step completes the session is done and inert.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

from .association import (
    CompletionConfig,
    Track,
    placement_target_box,
    step_complete,
)
from .geometry import GroundBox3D
from .plan import AssemblyPlan, Placement, Step, compile_steps, occupied_cells

PENDING = "pending"
ACTIVE = "active"
COMPLETED = "completed"

SESSION_STARTED = "SESSION_STARTED"
STEP_STARTED = "STEP_STARTED"
STEP_COMPLETED = "STEP_COMPLETED"
STEP_REGRESSED = "STEP_REGRESSED"
SESSION_COMPLETED = "SESSION_COMPLETED"


class SessionDone(Exception):
    """Raised when highlights are requested after the last step completed."""


@dataclass(frozen=True)
class GuidanceEvent:
    kind: str
    step_index: Optional[int]
    frame: int


@dataclass(frozen=True)
class Highlights:
    """What the display should draw for the active step.

    source_box tracks the required part in the supply half when one is
    visible; target_box is the placement footprint extruded to the brick
    height; layer_geometry shows the already-reached placements of the
    active layer only.
    """

    source_box: Optional[GroundBox3D]
    target_box: GroundBox3D
    label: str
    layer_geometry: tuple[GroundBox3D, ...]


@dataclass(frozen=True)
class GuidanceState:
    plan: AssemblyPlan
    steps: tuple[Step, ...]
    current: Optional[int]
    step_status: tuple[str, ...]
    completion_streak: int
    regression_streak: tuple[int, ...]
    origin_xy: tuple[float, float]


def start_session(
    plan: AssemblyPlan,
    cfg: CompletionConfig,
    origin_xy: tuple[float, float] = (0.0, 0.0),
    frame: int = 0,
) -> tuple[GuidanceState, list[GuidanceEvent]]:
    """Compile the plan and activate its first step.

    An empty plan completes immediately.  Raises InvalidPlanError when the
    plan does not validate.
    """
    steps = tuple(compile_steps(plan))
    events = [GuidanceEvent(SESSION_STARTED, None, frame)]
    if not steps:
        state = GuidanceState(
            plan=plan,
            steps=steps,
            current=None,
            step_status=(),
            completion_streak=0,
            regression_streak=(),
            origin_xy=tuple(origin_xy),
        )
        events.append(GuidanceEvent(SESSION_COMPLETED, None, frame))
        return state, events
    state = GuidanceState(
        plan=plan,
        steps=steps,
        current=0,
        step_status=(ACTIVE,) + (PENDING,) * (len(steps) - 1),
        completion_streak=0,
        regression_streak=(0,) * len(steps),
        origin_xy=tuple(origin_xy),
    )
    events.append(GuidanceEvent(STEP_STARTED, 0, frame))
    return state, events


def _depends_on(plan: AssemblyPlan, active: Placement, other: Placement) -> bool:
    """Whether ``other`` occupies any cell below the active footprint."""
    if active.layer == 0:
        return False
    brick = plan.brick(active.type_id)
    w, d = active.footprint(brick)
    columns = {
        (active.cell_x + dx, active.cell_y + dy)
        for dx in range(w)
        for dy in range(d)
    }
    return any(
        (x, y) in columns and layer < active.layer
        for (x, y, layer) in occupied_cells(plan, other)
    )


def _supporting_track_present(
    plan: AssemblyPlan,
    placement: Placement,
    tracks: Sequence[Track],
    cfg: CompletionConfig,
    origin_xy: tuple[float, float],
) -> bool:
    """A currently matched track still showing the completed placement.

    Unlike completion this ignores hits (any fresh sighting counts) but
    requires zero misses, so one occluded frame starts the regression
    clock and any reappearance resets it.
    """
    target = placement_target_box(plan, placement, origin_xy)
    for trk in tracks:
        if trk.class_id != placement.type_id or trk.misses != 0:
            continue
        dx = trk.ground_box.center_x - target.center_x
        dy = trk.ground_box.center_y - target.center_y
        if dx * dx + dy * dy <= cfg.center_tolerance_m**2:
            return True
    return False


def _candidate_streak(
    state: GuidanceState, tracks: Sequence[Track], cfg: CompletionConfig
) -> int:
    """Progress toward confirmation: best candidate hits, capped at K."""
    if state.current is None:
        return 0
    step = state.steps[state.current]
    relaxed = replace(cfg, confirm_frames=1)
    best = 0
    for trk in tracks:
        if trk.hits <= best:
            continue
        if step_complete(step, state.plan, [trk], relaxed, state.origin_xy):
            best = trk.hits
    return min(best, cfg.confirm_frames)


def on_frame(
    state: GuidanceState,
    tracks: Sequence[Track],
    cfg: CompletionConfig,
    frame: int = 0,
) -> tuple[GuidanceState, list[GuidanceEvent]]:
    """Advance the state machine by one frame of track evidence.

    At most one step transition happens per call: either the active step
    completes (possibly finishing the session) or the earliest structurally
    required completed placement that has been missing for
    cfg.lapse_frames consecutive frames regresses the session to itself.
    """
    if state.current is None:
        return state, []

    active_step = state.steps[state.current]
    events: list[GuidanceEvent] = []

    if step_complete(active_step, state.plan, tracks, cfg, state.origin_xy):
        status = list(state.step_status)
        status[state.current] = COMPLETED
        streaks = list(state.regression_streak)
        streaks[state.current] = 0
        events.append(GuidanceEvent(STEP_COMPLETED, state.current, frame))
        nxt: Optional[int] = state.current + 1
        if nxt == len(state.steps):
            nxt = None
            events.append(GuidanceEvent(SESSION_COMPLETED, None, frame))
        else:
            status[nxt] = ACTIVE
            events.append(GuidanceEvent(STEP_STARTED, nxt, frame))
        state = replace(
            state,
            current=nxt,
            step_status=tuple(status),
            regression_streak=tuple(streaks),
        )
        return replace(
            state, completion_streak=_candidate_streak(state, tracks, cfg)
        ), events

    streaks = list(state.regression_streak)
    regress_to: Optional[int] = None
    for i, step in enumerate(state.steps):
        if state.step_status[i] != COMPLETED:
            continue
        if not _depends_on(state.plan, active_step.placement, step.placement):
            continue
        if _supporting_track_present(
            state.plan, step.placement, tracks, cfg, state.origin_xy
        ):
            streaks[i] = 0
            continue
        streaks[i] += 1
        if streaks[i] >= cfg.lapse_frames and regress_to is None:
            regress_to = i

    if regress_to is not None:
        status = [
            PENDING if k >= regress_to else state.step_status[k]
            for k in range(len(state.steps))
        ]
        status[regress_to] = ACTIVE
        for k in range(regress_to, len(streaks)):
            streaks[k] = 0
        events.append(GuidanceEvent(STEP_REGRESSED, regress_to, frame))
        state = replace(
            state,
            current=regress_to,
            step_status=tuple(status),
            regression_streak=tuple(streaks),
        )
        return replace(
            state, completion_streak=_candidate_streak(state, tracks, cfg)
        ), events

    state = replace(state, regression_streak=tuple(streaks))
    return replace(
        state, completion_streak=_candidate_streak(state, tracks, cfg)
    ), events


def highlights(state: GuidanceState, tracks: Sequence[Track]) -> Highlights:
    """Boxes for the display: source part, placement target, current layer.

    Raises SessionDone once every step is completed.
    """
    if state.current is None:
        raise SessionDone("all steps completed")
    step = state.steps[state.current]
    cls = step.placement.type_id

    supply = [
        t
        for t in tracks
        if t.class_id == cls and t.ground_box.center_x > 0.0
    ]
    supply.sort(key=lambda t: (-t.hits, t.track_id))
    source = supply[0].ground_box if supply else None

    target = placement_target_box(state.plan, step.placement, state.origin_xy)
    layer_boxes = tuple(
        placement_target_box(state.plan, s.placement, state.origin_xy)
        for s in state.steps[: state.current + 1]
        if s.layer == step.layer
    )
    return Highlights(
        source_box=source,
        target_box=target,
        label=cls,
        layer_geometry=layer_boxes,
    )
