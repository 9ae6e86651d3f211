"""Planar vision geometry: pinhole projection and plane back-projection.

Conventions, fixed once so signed examples are decidable:

- Workspace frame is right-handed, z-up; the table plane is z = 0.
- Camera local frame: +Z forward (optical axis), +X right, +Y down, so the
  camera axes align with image axes (origin top-left, +y down).
- Intrinsics derive from the horizontal FOV with square pixels and the
  principal point at the image center.

All positions are meters, all pixel coordinates sub-pixel floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


class GeometryError(Exception):
    """Base class for projection failures."""


class BehindCamera(GeometryError):
    """World point has non-positive depth along the optical axis."""


class DegeneratePose(GeometryError):
    """Camera on the plane or optical axis parallel to it."""


class NoIntersection(GeometryError):
    """Back-projected ray misses the plane."""


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera defined by image size and horizontal field of view."""

    image_width_px: int
    image_height_px: int
    horizontal_fov_rad: float

    def __post_init__(self) -> None:
        if self.image_width_px < 1 or self.image_height_px < 1:
            raise ValueError("image dimensions must be positive")
        if not 0.0 < self.horizontal_fov_rad < math.pi:
            raise ValueError("horizontal FOV must be in (0, pi)")

    @property
    def focal_px(self) -> float:
        return (self.image_width_px / 2.0) / math.tan(self.horizontal_fov_rad / 2.0)

    @property
    def principal_point(self) -> tuple[float, float]:
        return self.image_width_px / 2.0, self.image_height_px / 2.0

    def intrinsic_matrix(self) -> np.ndarray:
        f = self.focal_px
        cx, cy = self.principal_point
        return np.array([[f, 0.0, cx], [0.0, f, cy], [0.0, 0.0, 1.0]])


@lru_cache(maxsize=64)
def _quat_to_matrix(q: tuple[float, float, float, float]) -> np.ndarray:
    # Cached per quaternion (sessions reproject thousands of points from
    # one fixed pose); the result is frozen so cache hits stay pristine.
    w, x, y, z = q
    m = np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )
    m.flags.writeable = False
    return m


def _matrix_to_quat(r: np.ndarray) -> tuple[float, float, float, float]:
    # Shepperd's method: pick the largest diagonal combination for stability.
    t = np.trace(r)
    if t > 0:
        s = math.sqrt(t + 1.0) * 2
        w = 0.25 * s
        x = (r[2, 1] - r[1, 2]) / s
        y = (r[0, 2] - r[2, 0]) / s
        z = (r[1, 0] - r[0, 1]) / s
    elif r[0, 0] > r[1, 1] and r[0, 0] > r[2, 2]:
        s = math.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2
        w = (r[2, 1] - r[1, 2]) / s
        x = 0.25 * s
        y = (r[0, 1] + r[1, 0]) / s
        z = (r[0, 2] + r[2, 0]) / s
    elif r[1, 1] > r[2, 2]:
        s = math.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2]) * 2
        w = (r[0, 2] - r[2, 0]) / s
        x = (r[0, 1] + r[1, 0]) / s
        y = 0.25 * s
        z = (r[1, 2] + r[2, 1]) / s
    else:
        s = math.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1]) * 2
        w = (r[1, 0] - r[0, 1]) / s
        x = (r[0, 2] + r[2, 0]) / s
        y = (r[1, 2] + r[2, 1]) / s
        z = 0.25 * s
    n = math.sqrt(w * w + x * x + y * y + z * z)
    return w / n, x / n, y / n, z / n


@dataclass(frozen=True)
class Pose:
    """Camera pose: position in the workspace and camera-to-workspace rotation.

    The orientation quaternion is (w, x, y, z) and must be unit length.
    Whether the camera actually faces the table is a property of how the
    pose is used, so it is checked by the projection operations, not here.
    """

    position: tuple[float, float, float]
    orientation: tuple[float, float, float, float]

    def __post_init__(self) -> None:
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        object.__setattr__(
            self, "orientation", tuple(float(v) for v in self.orientation)
        )
        if len(self.position) != 3 or len(self.orientation) != 4:
            raise ValueError("position must be 3-vector, orientation quaternion")
        norm = math.sqrt(sum(v * v for v in self.orientation))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError("orientation quaternion must be unit length")

    def rotation_matrix(self) -> np.ndarray:
        """3x3 matrix taking camera-frame vectors to workspace-frame vectors."""
        return _quat_to_matrix(self.orientation)

    @classmethod
    def top_down(cls, position: tuple[float, float, float]) -> "Pose":
        """Camera looking straight down with image +x along workspace +x."""
        return cls(position=position, orientation=(0.0, 1.0, 0.0, 0.0))

    @classmethod
    def look_at(
        cls,
        position: tuple[float, float, float],
        target: tuple[float, float, float],
        up: tuple[float, float, float] = (0.0, 0.0, 1.0),
    ) -> "Pose":
        """Pose with the optical axis through ``target``.

        ``up`` picks the roll; when the axis is parallel to ``up`` the hint
        falls back to +y so an exact top-down view stays well defined.
        """
        pos = np.asarray(position, dtype=float)
        fwd = np.asarray(target, dtype=float) - pos
        n = np.linalg.norm(fwd)
        if n < 1e-12:
            raise ValueError("target coincides with camera position")
        fwd = fwd / n
        hint = np.asarray(up, dtype=float)
        right = np.cross(fwd, hint)
        if np.linalg.norm(right) < 1e-9:
            right = np.cross(fwd, np.array([0.0, 1.0, 0.0]))
        right = right / np.linalg.norm(right)
        down = np.cross(fwd, right)
        r = np.column_stack([right, down, fwd])
        return cls(position=tuple(pos), orientation=_matrix_to_quat(r))


@dataclass(frozen=True)
class BBox2D:
    """Axis-aligned detection box in image coordinates (+y down).

    Intersection with the image rectangle is a use-site concern (the
    detector drops boxes fully outside the frame); only ordering and the
    confidence range are enforced here.
    """

    x_min: float
    y_min: float
    x_max: float
    y_max: float
    class_id: str
    confidence: float

    def __post_init__(self) -> None:
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError("box must have positive width and height")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must be in [0, 1]")

    def corners(self) -> list[tuple[float, float]]:
        return [
            (self.x_min, self.y_min),
            (self.x_max, self.y_min),
            (self.x_max, self.y_max),
            (self.x_min, self.y_max),
        ]


@dataclass(frozen=True)
class GroundBox3D:
    """Axis-aligned box on the table plane with a catalog-derived height."""

    center_x: float
    center_y: float
    extent_x: float
    extent_y: float
    height: float
    label: str

    def __post_init__(self) -> None:
        if self.extent_x <= 0 or self.extent_y <= 0:
            raise ValueError("extents must be positive")
        if self.height < 0:
            raise ValueError("height must be non-negative")


@dataclass(frozen=True, eq=False)
class Homography:
    """Invertible 3x3 map from plane coordinates (X, Y, 1) to pixels (u, v, 1)."""

    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (3, 3):
            raise ValueError("homography must be 3x3")
        if abs(np.linalg.det(m)) < 1e-15:
            raise ValueError("homography must be invertible")
        object.__setattr__(self, "matrix", m)

    def apply(self, x: float, y: float) -> np.ndarray:
        u, v, w = self.matrix @ np.array([x, y, 1.0])
        return np.array([u / w, v / w])

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.matrix))


def project_point(camera: CameraModel, pose: Pose, world) -> np.ndarray:
    """Pinhole-project a workspace point to sub-pixel image coordinates.

    The result may lie outside the image rectangle.  Raises BehindCamera
    when the point's depth along the optical axis is <= 1e-9 m.
    """
    r = pose.rotation_matrix()
    p_cam = r.T @ (np.asarray(world, dtype=float) - np.asarray(pose.position))
    if p_cam[2] <= 1e-9:
        raise BehindCamera(f"depth {p_cam[2]:.3g} m")
    f = camera.focal_px
    cx, cy = camera.principal_point
    return np.array(
        [cx + f * p_cam[0] / p_cam[2], cy + f * p_cam[1] / p_cam[2]]
    )


def _project_points(
    camera: CameraModel, pose: Pose, points: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Batched project_point over an (N, 3) world array.

    Returns (pixels, ok) where ok flags rows with depth > 1e-9 m; invalid
    rows hold garbage instead of raising so callers can skip per point.
    """
    r = pose.rotation_matrix()
    p_cam = (np.asarray(points, dtype=float) - np.asarray(pose.position)) @ r
    z = p_cam[:, 2]
    ok = z > 1e-9
    safe_z = np.where(ok, z, 1.0)
    f = camera.focal_px
    cx, cy = camera.principal_point
    uv = np.empty((p_cam.shape[0], 2))
    uv[:, 0] = cx + f * p_cam[:, 0] / safe_z
    uv[:, 1] = cy + f * p_cam[:, 1] / safe_z
    return uv, ok


def plane_homography(camera: CameraModel, pose: Pose) -> Homography:
    """Homography sending table-plane points (X, Y) to their projections.

    Equivalent to project_point restricted to z = 0.  Raises DegeneratePose
    when the camera center lies on the plane or the optical axis is
    parallel to it.
    """
    r = pose.rotation_matrix()
    c = np.asarray(pose.position)
    forward_z = r[2, 2]
    if abs(c[2]) <= 1e-9 or abs(forward_z) <= 1e-9:
        raise DegeneratePose("camera on plane or axis parallel to plane")
    m = r.T
    t = -m @ c
    h = camera.intrinsic_matrix() @ np.column_stack([m[:, 0], m[:, 1], t])
    return Homography(h)


def pixel_to_plane(
    camera: CameraModel, pose: Pose, pixel, plane_z: float = 0.0
) -> np.ndarray:
    """Back-project a pixel onto the horizontal plane z = plane_z.

    Casts the camera ray through the pixel and intersects it with the
    plane; raises NoIntersection when the ray is parallel to the plane or
    the hit lies behind the camera.
    """
    f = camera.focal_px
    cx, cy = camera.principal_point
    u, v = float(pixel[0]), float(pixel[1])
    d_cam = np.array([(u - cx) / f, (v - cy) / f, 1.0])
    d_world = pose.rotation_matrix() @ d_cam
    if abs(d_world[2]) <= 1e-12:
        raise NoIntersection("ray parallel to plane")
    t = (plane_z - pose.position[2]) / d_world[2]
    if t <= 1e-9:
        raise NoIntersection("plane behind camera")
    hit = np.asarray(pose.position) + t * d_world
    return hit[:2]


def _pixels_to_plane(
    camera: CameraModel, pose: Pose, pixels: np.ndarray, plane_z: float
) -> np.ndarray:
    """Batched pixel_to_plane over an (N, 2) pixel array."""
    f = camera.focal_px
    cx, cy = camera.principal_point
    uv = np.asarray(pixels, dtype=float)
    d_cam = np.empty((uv.shape[0], 3))
    d_cam[:, 0] = (uv[:, 0] - cx) / f
    d_cam[:, 1] = (uv[:, 1] - cy) / f
    d_cam[:, 2] = 1.0
    d_world = d_cam @ pose.rotation_matrix().T
    dz = d_world[:, 2]
    if (np.abs(dz) <= 1e-12).any():
        raise NoIntersection("ray parallel to plane")
    t = (plane_z - pose.position[2]) / dz
    if (t <= 1e-9).any():
        raise NoIntersection("plane behind camera")
    return np.asarray(pose.position)[:2] + t[:, None] * d_world[:, :2]


def bbox_to_groundbox(
    camera: CameraModel,
    pose: Pose,
    box: BBox2D,
    brick_height_m: float,
    plane_z: float = 0.0,
) -> GroundBox3D:
    """Lift a detection box to the axis-aligned hull of its plane footprint.

    The four pixel corners are back-projected onto z = plane_z and the
    bounding rectangle of the hits becomes the ground box, labelled with
    the detection class.  Height comes from the catalog, not from vision.
    """
    pts = _pixels_to_plane(camera, pose, np.array(box.corners()), plane_z)
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    center = (lo + hi) / 2.0
    extent = hi - lo
    return GroundBox3D(
        center_x=float(center[0]),
        center_y=float(center[1]),
        extent_x=float(extent[0]),
        extent_y=float(extent[1]),
        height=float(brick_height_m),
        label=box.class_id,
    )
