"""Shared test helpers: cameras, pose sampling, and small oracles."""

import math

import numpy as np

from brickguide.geometry import CameraModel, Pose
from brickguide.guidance import (
    SESSION_COMPLETED,
    SESSION_STARTED,
    STEP_COMPLETED,
    STEP_REGRESSED,
    STEP_STARTED,
)

VGA_90 = CameraModel(640, 480, math.radians(90.0))


def validate_event_log(events, n_steps):
    """Replay a log against the legal transitions; raise on violation.

    STARTED i requires no active step and i next in order; COMPLETED i
    requires i active; REGRESSED i requires i completed, evicts completed
    steps at or above i and re-activates i; SESSION_COMPLETED requires
    every step completed.  Returns True when the log ends completed.
    """
    assert events and events[0].kind == SESSION_STARTED
    active = None
    completed = set()
    done = False
    expect_start_of = 0
    for e in events[1:]:
        assert not done, "events after SESSION_COMPLETED"
        if e.kind == STEP_STARTED:
            assert active is None
            assert e.step_index == expect_start_of
            active = e.step_index
        elif e.kind == STEP_COMPLETED:
            assert active == e.step_index
            completed.add(e.step_index)
            active = None
            expect_start_of = e.step_index + 1
        elif e.kind == STEP_REGRESSED:
            assert e.step_index in completed
            completed = {i for i in completed if i < e.step_index}
            active = e.step_index
        elif e.kind == SESSION_COMPLETED:
            assert active is None
            assert completed == set(range(n_steps))
            done = True
        else:
            raise AssertionError(f"unknown event kind {e.kind}")
    return done


def random_tilted_pose(rng, max_tilt_deg=60.0, height_range=(0.3, 2.0)):
    """Camera above the table, optical axis within max_tilt_deg of vertical."""
    px = rng.uniform(-0.5, 0.5)
    py = rng.uniform(-0.5, 0.5)
    h = rng.uniform(*height_range)
    tilt = math.radians(rng.uniform(0.0, max_tilt_deg))
    azimuth = rng.uniform(0.0, 2.0 * math.pi)
    target = (
        px + h * math.tan(tilt) * math.cos(azimuth),
        py + h * math.tan(tilt) * math.sin(azimuth),
        0.0,
    )
    return Pose.look_at((px, py, h), target)


def random_plane_point_in_view(rng, camera, pose, margin_px=10.0):
    """A z=0 point whose projection lands inside the image rectangle.

    Steep tilts put the top image rows above the horizon, so sampling
    rejects pixels whose rays miss the table (the center pixel always
    hits for tilts below 90 degrees, so this terminates).
    """
    from brickguide.geometry import NoIntersection, pixel_to_plane

    while True:
        u = rng.uniform(margin_px, camera.image_width_px - margin_px)
        v = rng.uniform(margin_px, camera.image_height_px - margin_px)
        try:
            return pixel_to_plane(camera, pose, (u, v))
        except NoIntersection:
            continue
