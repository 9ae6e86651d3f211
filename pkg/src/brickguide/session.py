"""Realtime guidance session.

Ties the simulated scene, the perception pipeline, and the guidance state
machine into a single deterministic per-tick pipeline.  Both the CLI
simulator and the WebSocket server drive sessions exclusively through
:class:`SessionCore`, which is what makes a scripted run and a served run
on the same action schedule produce identical transcripts.

Per tick, in order: queued actions have already been applied by the caller
at the tick boundary; the scene renders (sim mode) or the latest ingested
frame is taken (external mode); detections are lifted onto workspace
planes; tracks are matched and updated; the guidance state machine is
stepped; highlights are recomputed.  The tick result serializes to one
NDJSON transcript line.

Detections are 2D boxes; lifting them onto a plane requires knowing which
horizontal plane the detected top face lies on.  Lifting everything onto
the table plane would skew the recovered centers of stacked bricks by
parallax (the error grows with height and distance from the camera axis),
so each box is lifted onto the best consistent hypothesis plane: the
active step's top face, a completed placement's top face, or the table
resting plane for its class.  A placement hypothesis is accepted only when
the lifted center lands within the completion tolerance of that
placement's target, which keeps the choice stable under detection noise.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .association import (
    DEFAULT_SMOOTHING_ALPHA,
    DEFAULT_SUPPLY_GATE_M,
    CompletionConfig,
    Track,
    match_tracks,
    placement_target_box,
    update_tracks,
)
from .geometry import BBox2D, CameraModel, GeometryError, Pose, pixel_to_plane, bbox_to_groundbox
from .guidance import (
    COMPLETED,
    GuidanceEvent,
    GuidanceState,
    Highlights,
    SessionDone,
    highlights,
    on_frame,
    start_session,
)
from .plan import AssemblyPlan
from .scene import (
    LayoutConfig,
    NoiseConfig,
    NOISE_ZERO,
    Pick,
    Place,
    Remove,
    SceneState,
    Tick,
    advance_frame,
    apply_action,
    init_scene,
    render_detections,
)

__all__ = [
    "MODE_SIM",
    "MODE_EXTERNAL",
    "SessionConfig",
    "SessionCore",
    "TickResult",
    "ScriptRunResult",
    "default_camera",
    "default_pose",
    "run_script",
    "transcript_line",
]

MODE_SIM = "sim"
MODE_EXTERNAL = "external"

_MODES = (MODE_SIM, MODE_EXTERNAL)


def default_camera() -> CameraModel:
    """The reference overhead camera: VGA at 90 degrees horizontal FOV."""
    return CameraModel(640, 480, math.radians(90.0))


def default_pose() -> Pose:
    """Top-down view from one metre above the workspace origin."""
    return Pose.top_down((0.0, 0.0, 1.0))


@dataclass(frozen=True)
class SessionConfig:
    """Everything about a session that is not the plan itself."""

    mode: str = MODE_SIM
    tick_hz: int = 15
    camera: CameraModel = field(default_factory=default_camera)
    pose: Pose = field(default_factory=default_pose)
    noise: NoiseConfig = NOISE_ZERO
    completion: CompletionConfig = field(default_factory=CompletionConfig)
    layout: LayoutConfig = field(default_factory=LayoutConfig)

    def __post_init__(self) -> None:
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}, got {self.mode!r}")
        if not isinstance(self.tick_hz, int) or not 1 <= self.tick_hz <= 120:
            raise ValueError(f"tick_hz must be an integer in [1, 120], got {self.tick_hz!r}")


@dataclass(frozen=True)
class TickResult:
    """Everything one tick produced; serializes to one transcript line."""

    tick: int
    frame: int
    events: tuple[GuidanceEvent, ...]
    highlights: Optional[Highlights]
    detections: tuple[BBox2D, ...]


class SessionCore:
    """Mutable session state with a deterministic tick pipeline.

    The caller owns action scheduling: actions are applied via
    :meth:`apply` at tick boundaries (before the tick that should first
    observe them), in arrival order.  In external mode, detector frames
    are ingested via :meth:`submit_detections`; a tick with no fresh frame
    leaves perception and guidance untouched.
    """

    def __init__(self, plan: AssemblyPlan, config: SessionConfig = SessionConfig()):
        self.plan = plan
        self.config = config
        self.scene: SceneState = init_scene(plan, config.layout)
        state, boot = start_session(
            plan, config.completion, origin_xy=config.layout.build_origin, frame=0
        )
        self.guidance: GuidanceState = state
        self.tracks: tuple[Track, ...] = ()
        # Session/step start events surface in the first tick's result and
        # enter events_log there, keeping the log aligned with transcripts.
        self.events_log: list[GuidanceEvent] = []
        self.tick_index = 0
        self._boot_events: tuple[GuidanceEvent, ...] = tuple(boot)
        self._next_track_id = 0
        self._brick_by_id = {b.type_id: b for b in plan.catalog}
        # External-mode ingestion buffer: latest frame wins, stale frames drop.
        self._external_frame: Optional[tuple[int, tuple[BBox2D, ...]]] = None
        self._last_external_frame = -1

    @property
    def done(self) -> bool:
        return self.guidance.current is None

    def apply(self, action) -> None:
        """Apply one scene action (sim mode only).  Raises on illegal moves."""
        if self.config.mode != MODE_SIM:
            raise ValueError("actions are only valid in sim mode")
        self.scene = apply_action(self.scene, action)

    def submit_detections(self, frame: int, boxes: Sequence[BBox2D]) -> bool:
        """Ingest a detector frame (external mode only).

        Returns False when the frame is stale (not newer than the last
        frame already consumed or buffered) and was dropped.
        """
        if self.config.mode != MODE_EXTERNAL:
            raise ValueError("detector frames are only valid in external mode")
        if frame <= self._last_external_frame:
            return False
        if self._external_frame is not None and frame <= self._external_frame[0]:
            return False
        self._external_frame = (frame, tuple(boxes))
        return True

    def tick(self) -> TickResult:
        """Run one tick of the pipeline and return what it produced."""
        boot, self._boot_events = self._boot_events, ()
        if self.config.mode == MODE_SIM:
            frame = self.scene.frame_counter
            boxes = render_detections(
                self.scene, self.config.camera, self.config.pose, self.config.noise
            )
            result = self._perceive(frame, boxes, boot)
            self.scene = advance_frame(self.scene)
        else:
            if self._external_frame is None:
                result = self._idle(boot)
            else:
                frame, boxes = self._external_frame
                self._external_frame = None
                self._last_external_frame = frame
                result = self._perceive(frame, boxes, boot)
        self.tick_index += 1
        return result

    def _idle(self, boot: tuple[GuidanceEvent, ...]) -> TickResult:
        """External tick with no fresh frame: state is left untouched."""
        self.events_log.extend(boot)
        return TickResult(
            tick=self.tick_index,
            frame=self._last_external_frame,
            events=boot,
            highlights=self._highlights(),
            detections=(),
        )

    def _perceive(
        self, frame: int, boxes: Sequence[BBox2D], boot: tuple[GuidanceEvent, ...]
    ) -> TickResult:
        lifted = self._lift(boxes)
        matched = match_tracks(self.tracks, lifted, DEFAULT_SUPPLY_GATE_M)
        self.tracks = update_tracks(
            self.tracks,
            lifted,
            matched,
            frame,
            smoothing_alpha=DEFAULT_SMOOTHING_ALPHA,
            lapse_frames=self.config.completion.lapse_frames,
            id_start=self._next_track_id,
        )
        self._next_track_id += len(matched.unmatched_detections)
        self.guidance, stepped = on_frame(
            self.guidance, self.tracks, self.config.completion, frame=frame
        )
        events = boot + tuple(stepped)
        self.events_log.extend(events)
        return TickResult(
            tick=self.tick_index,
            frame=frame,
            events=events,
            highlights=self._highlights(),
            detections=tuple(boxes),
        )

    def _highlights(self) -> Optional[Highlights]:
        try:
            return highlights(self.guidance, self.tracks)
        except SessionDone:
            return None

    def _lift(self, boxes: Sequence[BBox2D]):
        """Lift 2D boxes to ground boxes on per-box hypothesis planes."""
        cam, pose = self.config.camera, self.config.pose
        layer_h = self.plan.grid.layer_height_m
        tol = self.config.completion.center_tolerance_m
        origin = self.config.layout.build_origin

        # Placement hypotheses, active step first then completed steps in
        # step order; the first hypothesis wins distance ties.
        hyps: list[tuple[str, float, float, float]] = []
        state = self.guidance
        order = []
        if state.current is not None:
            order.append(state.current)
        order.extend(
            i for i, st in enumerate(state.step_status) if st == COMPLETED
        )
        for i in order:
            p = state.steps[i].placement
            brick = self._brick_by_id[p.type_id]
            top_z = (p.layer + brick.height_layers) * layer_h
            target = placement_target_box(self.plan, p, origin_xy=origin)
            hyps.append((p.type_id, top_z, target.center_x, target.center_y))

        out = []
        for box in boxes:
            brick = self._brick_by_id.get(box.class_id)
            if brick is None:
                continue
            resting_z = brick.height_layers * layer_h
            plane_z = resting_z
            best = math.inf
            pixel = ((box.x_min + box.x_max) / 2.0, (box.y_min + box.y_max) / 2.0)
            for type_id, top_z, cx, cy in hyps:
                if type_id != box.class_id:
                    continue
                try:
                    x, y = pixel_to_plane(cam, pose, pixel, plane_z=top_z)
                except GeometryError:
                    continue
                d = math.hypot(x - cx, y - cy)
                if d <= tol and d < best:
                    best, plane_z = d, top_z
            try:
                out.append(
                    bbox_to_groundbox(
                        cam, pose, box, brick.height_layers * layer_h, plane_z=plane_z
                    )
                )
            except GeometryError:
                continue
        return out

    def snapshot(self) -> dict:
        """JSON-ready summary of the full authoritative state."""
        state = self.guidance
        return {
            "plan": self.plan.name,
            "mode": self.config.mode,
            "tick": self.tick_index,
            "frame": self.scene.frame_counter if self.config.mode == MODE_SIM else self._last_external_frame,
            "done": self.done,
            "current_step": state.current,
            "step_status": list(state.step_status),
            "steps": [
                {
                    "index": s.index,
                    "type_id": s.placement.type_id,
                    "x": s.placement.cell_x,
                    "y": s.placement.cell_y,
                    "layer": s.placement.layer,
                    "rot": s.placement.rotation,
                }
                for s in state.steps
            ],
            "parts": [
                {
                    "id": p.instance_id,
                    "type_id": p.type_id,
                    "status": p.status,
                    "x": p.plane_pose[0],
                    "y": p.plane_pose[1],
                    "yaw": p.plane_pose[2],
                }
                for p in self.scene.parts
            ],
        }


def _box_fields(box) -> list:
    return [box.center_x, box.center_y, box.extent_x, box.extent_y, box.height, box.label]


def _highlights_fields(hl: Optional[Highlights]) -> Optional[dict]:
    if hl is None:
        return None
    return {
        "label": hl.label,
        "source": None if hl.source_box is None else _box_fields(hl.source_box),
        "target": _box_fields(hl.target_box),
        "layer": [_box_fields(b) for b in hl.layer_geometry],
    }


def transcript_line(result: TickResult) -> str:
    """Serialize one tick to a canonical single-line JSON record."""
    row = {
        "tick": result.tick,
        "frame": result.frame,
        "events": [
            {"kind": e.kind, "step": e.step_index, "frame": e.frame} for e in result.events
        ],
        "highlights": _highlights_fields(result.highlights),
        "detections": [
            [b.x_min, b.y_min, b.x_max, b.y_max, b.class_id, b.confidence]
            for b in result.detections
        ],
    }
    return json.dumps(row, sort_keys=True, separators=(",", ":"))


@dataclass(frozen=True)
class ScriptRunResult:
    """Outcome of driving a session with a parsed action script."""

    results: tuple[TickResult, ...]
    events: tuple[GuidanceEvent, ...]
    completed: bool


def run_script(core: SessionCore, commands: Sequence) -> ScriptRunResult:
    """Drive a sim session with script commands.

    Pick/place/remove commands queue and are applied at the next tick
    boundary in script order, matching how the server applies queued
    ACTION messages; TICK n runs n ticks.  Illegal transitions propagate.
    """
    results: list[TickResult] = []
    pending: list = []
    for cmd in commands:
        if isinstance(cmd, Tick):
            for _ in range(cmd.frames):
                for action in pending:
                    core.apply(action)
                pending.clear()
                results.append(core.tick())
        elif isinstance(cmd, (Pick, Place, Remove)):
            pending.append(cmd)
        else:
            raise TypeError(f"unknown script command: {cmd!r}")
    for action in pending:
        core.apply(action)
    return ScriptRunResult(
        results=tuple(results),
        events=tuple(core.events_log),
        completed=core.done,
    )
