"""From one object detection to one scale-correction observation.

The chain: collect the map points whose projections fall inside the detection
rectangle, average them into a representative surface point with rank-based
gamma weights (so background and occlusion points count less), cast the
vertical 3D line through that point, intersect its image with the rectangle's
boundary to get the object's top and bottom pixels, back-project those to
measure the object's vertical extent in SLAM units, and divide the prior mean
height by that extent. The observation noise follows from the weighted spread
of the contributing point distances by first-order propagation.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.stats import gamma as gamma_dist

from .errors import DegenerateGeometry, InvalidObservation, MissingPrior, TooFewPoints
from .scene import (
    CameraIntrinsics,
    Detection,
    HeightPrior,
    LocalMapView,
    MapPoint,
    Pose,
    Rect,
    WorldConfig,
)

__all__ = [
    "SurfaceEstimate",
    "ScaleObservation",
    "NoObservation",
    "ObservationFailure",
    "points_in_detection",
    "surface_point",
    "vertical_extremities",
    "vertical_line_points",
    "object_height",
    "scale_observation",
    "observe_detection",
]


@dataclass(frozen=True)
class SurfaceEstimate:
    """Representative object-surface point in the camera frame.

    `depth` is the norm of `point_cam`; `depth_std` the gamma-weighted std of
    the contributing point distances, both in SLAM units.
    """

    point_cam: np.ndarray
    depth: float
    depth_std: float
    n_points: int

    def __post_init__(self):
        pt = np.array(self.point_cam, dtype=float).reshape(3)
        pt.flags.writeable = False
        object.__setattr__(self, "point_cam", pt)


@dataclass(frozen=True)
class ScaleObservation:
    """One measurement of the scale correction with its noise level.

    `scale` multiplies SLAM-unit distances into meters; `height_slam` is the
    measured object extent in SLAM units that produced it.
    """

    scale: float
    noise_std: float
    frame_index: int
    class_label: str
    height_slam: float

    def __post_init__(self):
        values = (self.scale, self.noise_std, self.height_slam)
        if not all(np.isfinite(v) and v > 0 for v in values):
            raise InvalidObservation(f"non-finite or non-positive observation: {values}")


class ObservationFailure(enum.Enum):
    TOO_FEW_POINTS = "too_few_points"
    DEGENERATE_GEOMETRY = "degenerate_geometry"
    INVALID_OBSERVATION = "invalid_observation"


@dataclass(frozen=True)
class NoObservation:
    """Why a detection produced no scale observation."""

    reason: ObservationFailure
    message: str = ""


def points_in_detection(
    points: Mapping[int, MapPoint],
    local_view: LocalMapView,
    pose: Pose,
    intrinsics: CameraIntrinsics,
    rect: Rect,
) -> np.ndarray:
    """Camera-frame positions of local-map points projecting inside `rect`.

    Keeps points with strictly positive depth whose pinhole projection falls
    inside the rectangle (inclusive bounds). Returns an (m, 3) array, possibly
    empty. Points are ordered by id for determinism.
    """
    ids = sorted(local_view.point_ids)
    if not ids:
        return np.empty((0, 3))
    world = np.stack([points[i].position_world for i in ids])
    cam = pose.world_to_camera(world)
    front = cam[:, 2] > 0
    cam = cam[front]
    if len(cam) == 0:
        return np.empty((0, 3))
    px = intrinsics.project(cam)
    inside = (
        (px[:, 0] >= rect.x_min)
        & (px[:, 0] <= rect.x_max)
        & (px[:, 1] >= rect.y_min)
        & (px[:, 1] <= rect.y_max)
    )
    return cam[inside]


def surface_point(
    points_cam: np.ndarray,
    up: np.ndarray,
    gamma_alpha: float = 1.5,
    gamma_beta: float = 0.2,
    min_points: int = 5,
) -> SurfaceEstimate:
    """Gamma-weighted representative of in-rectangle points.

    Each point is first flattened onto the horizontal plane through the camera
    origin (component along `up` removed). The flattened points are sorted by
    distance to the camera, and averaged with weights g(i/m) where g is the
    gamma density with shape `gamma_alpha` and scale `gamma_beta` and i is the
    1-based rank. With the defaults the weight peaks at the 10th-percentile
    nearest point, which suppresses both foreground occluders (nearest ranks)
    and background clutter (far ranks).

    Raises TooFewPoints below `min_points` and DegenerateGeometry when all
    points flatten onto the camera origin.
    """
    pts = np.atleast_2d(np.asarray(points_cam, dtype=float))
    m = len(pts)
    if m < min_points:
        raise TooFewPoints(f"{m} points inside detection, need at least {min_points}")
    up = np.asarray(up, dtype=float).reshape(3)
    flat = pts - np.outer(pts @ up, up)
    dists = np.linalg.norm(flat, axis=1)
    if np.all(dists < 1e-12):
        raise DegenerateGeometry("all points project onto the camera origin")
    order = np.argsort(dists, kind="stable")
    flat = flat[order]
    dists = dists[order]
    ranks = np.arange(1, m + 1) / m
    weights = gamma_dist.pdf(ranks, a=gamma_alpha, scale=gamma_beta)
    total = weights.sum()
    if total <= 0:
        raise DegenerateGeometry("gamma weights underflowed to zero")
    weights = weights / total
    point = weights @ flat
    depth = float(np.linalg.norm(point))
    if depth <= 0:
        raise DegenerateGeometry("weighted surface point coincides with the camera origin")
    mean_dist = float(weights @ dists)
    depth_std = float(np.sqrt(weights @ (dists - mean_dist) ** 2))
    return SurfaceEstimate(point, depth, depth_std, m)


def _homogeneous_pixel(point_cam: np.ndarray, k: CameraIntrinsics) -> np.ndarray:
    x, y, z = point_cam
    return np.array([k.fx * x + k.cx * z, k.fy * y + k.cy * z, z])


def vertical_extremities(
    surface_cam: np.ndarray,
    rect: Rect,
    intrinsics: CameraIntrinsics,
    up_cam: np.ndarray,
):
    """Top and bottom pixels of the object along the vertical through the surface point.

    Projects the 3D vertical line through `surface_cam` into the image (the
    line through the projections of the point and the point displaced by
    `up_cam`) and intersects it with the rectangle boundary. Returns
    (top_px, bottom_px) where the top is the intersection whose back-projected
    ray points toward +up.

    Raises DegenerateGeometry when the vertical projects to a single image
    point (viewing ray parallel to up) or the image line is tangent to or
    misses the rectangle.
    """
    p = np.asarray(surface_cam, dtype=float).reshape(3)
    up = np.asarray(up_cam, dtype=float).reshape(3)
    h1 = _homogeneous_pixel(p, intrinsics)
    h2 = _homogeneous_pixel(p + up, intrinsics)
    line = np.cross(h1, h2)
    direction = float(np.hypot(line[0], line[1]))
    if direction <= 1e-12 * max(1.0, float(np.abs(line).max())):
        raise DegenerateGeometry("vertical line projects to a single image point")
    line = line / direction  # now a*u + b*v + c is a signed pixel distance

    span = max(1.0, rect.width, rect.height, abs(rect.x_max), abs(rect.y_max))
    eps = 1e-9 * span

    # Exact overlap with a rectangle edge: fall back to the top/bottom edge midpoints.
    mid_u = 0.5 * (rect.x_min + rect.x_max)
    for edge_pts in (
        ((rect.x_min, rect.y_min), (rect.x_min, rect.y_max)),
        ((rect.x_max, rect.y_min), (rect.x_max, rect.y_max)),
        ((rect.x_min, rect.y_min), (rect.x_max, rect.y_min)),
        ((rect.x_min, rect.y_max), (rect.x_max, rect.y_max)),
    ):
        f1 = line[0] * edge_pts[0][0] + line[1] * edge_pts[0][1] + line[2]
        f2 = line[0] * edge_pts[1][0] + line[1] * edge_pts[1][1] + line[2]
        if abs(f1) <= eps and abs(f2) <= eps:
            top = np.array([mid_u, rect.y_min])
            bottom = np.array([mid_u, rect.y_max])
            return _order_extremities(top, bottom, intrinsics, up)

    corners = [
        np.array([rect.x_min, rect.y_min]),
        np.array([rect.x_max, rect.y_min]),
        np.array([rect.x_max, rect.y_max]),
        np.array([rect.x_min, rect.y_max]),
    ]
    values = [line[0] * c[0] + line[1] * c[1] + line[2] for c in corners]
    hits = []
    for i in range(4):
        c1, c2 = corners[i], corners[(i + 1) % 4]
        f1, f2 = values[i], values[(i + 1) % 4]
        if abs(f1) <= eps:
            hits.append(c1)  # corner on the line counts once (deduped below)
        if (f1 < -eps and f2 > eps) or (f1 > eps and f2 < -eps):
            t = f1 / (f1 - f2)
            hits.append(c1 + t * (c2 - c1))
    unique = []
    for h in hits:
        if not any(np.abs(h - u).max() <= eps for u in unique):
            unique.append(h)
    if len(unique) != 2:
        raise DegenerateGeometry(
            f"image vertical intersects the rect boundary at {len(unique)} points, need 2"
        )
    return _order_extremities(unique[0], unique[1], intrinsics, up)


def _order_extremities(a, b, intrinsics, up_cam):
    ra = intrinsics.ray(a)
    rb = intrinsics.ray(b)
    da = float(ra @ up_cam) / float(np.linalg.norm(ra))
    db = float(rb @ up_cam) / float(np.linalg.norm(rb))
    return (a, b) if da >= db else (b, a)


def _intersect_ray_with_vertical(ray, anchor, up):
    """Point on the vertical line {anchor + t*up} closest to the camera ray."""
    rr = float(ray @ ray)
    ur = float(up @ ray)
    pu = float(anchor @ up)
    pr = float(anchor @ ray)
    denom = rr - ur * ur  # up is unit, so uu == 1
    if denom <= 1e-12 * rr:
        raise DegenerateGeometry("back-projected ray is parallel to the vertical line")
    t = (pr * ur - pu * rr) / denom
    return anchor + t * up


def vertical_line_points(
    top_px, bottom_px, surface_cam, intrinsics: CameraIntrinsics, up_cam
):
    """3D extremities: closest points on the vertical line to the two pixel rays."""
    p = np.asarray(surface_cam, dtype=float).reshape(3)
    up = np.asarray(up_cam, dtype=float).reshape(3)
    top = _intersect_ray_with_vertical(intrinsics.ray(top_px), p, up)
    bottom = _intersect_ray_with_vertical(intrinsics.ray(bottom_px), p, up)
    return top, bottom


def object_height(
    top_px, bottom_px, surface_cam, intrinsics: CameraIntrinsics, up_cam
) -> float:
    """Object vertical extent in SLAM units between two boundary pixels.

    Back-projects each pixel to a camera ray and intersects it with the
    vertical line through the surface point (as closest point on the line,
    exact here up to floating point because ray, line and camera origin are
    coplanar by construction).
    """
    top, bottom = vertical_line_points(top_px, bottom_px, surface_cam, intrinsics, up_cam)
    return float(np.linalg.norm(top - bottom))


def scale_observation(
    height_slam: float,
    depth: float,
    depth_std: float,
    prior: HeightPrior,
    frame_index: int = 0,
    noise_floor: float = 1e-3,
    min_height: float = 1e-6,
) -> ScaleObservation:
    """Scale correction from a measured extent: prior mean height over extent.

    The noise std propagates the surface-depth spread through the measurement:
    scale * depth_std / depth, floored at `noise_floor` so that coincident
    points cannot produce a zero-variance observation that would lock the
    filter.
    """
    if height_slam <= min_height:
        raise InvalidObservation(
            f"measured extent {height_slam:g} below minimum {min_height:g}"
        )
    scale = prior.mean / height_slam
    noise = max(scale * depth_std / depth, noise_floor)
    return ScaleObservation(scale, noise, frame_index, prior.class_label, height_slam)


def observe_detection(
    detection: Detection,
    points: Mapping[int, MapPoint],
    local_view: LocalMapView,
    pose: Pose,
    intrinsics: CameraIntrinsics,
    priors: Mapping[str, HeightPrior],
    config: WorldConfig,
) -> ScaleObservation | NoObservation:
    """Full per-detection pipeline; geometric failures become NoObservation.

    A missing prior raises MissingPrior instead: that is a configuration gap,
    not a property of the scene.
    """
    prior = priors.get(detection.class_label)
    if prior is None:
        raise MissingPrior(detection.class_label)

    cam_points = points_in_detection(points, local_view, pose, intrinsics, detection.rect)
    if len(cam_points) < config.min_points_per_detection:
        return NoObservation(
            ObservationFailure.TOO_FEW_POINTS,
            f"{len(cam_points)} of {config.min_points_per_detection} required points in rect",
        )

    up_cam = pose.rotation.T @ config.up_world
    try:
        surface = surface_point(
            cam_points,
            up_cam,
            config.gamma_alpha,
            config.gamma_beta,
            config.min_points_per_detection,
        )
        top_px, bottom_px = vertical_extremities(
            surface.point_cam, detection.rect, intrinsics, up_cam
        )
        height = object_height(top_px, bottom_px, surface.point_cam, intrinsics, up_cam)
        return scale_observation(
            height,
            surface.depth,
            surface.depth_std,
            prior,
            frame_index=detection.frame_index,
            noise_floor=config.noise_floor,
            min_height=config.min_height,
        )
    except DegenerateGeometry as exc:
        return NoObservation(ObservationFailure.DEGENERATE_GEOMETRY, str(exc))
    except InvalidObservation as exc:
        return NoObservation(ObservationFailure.INVALID_OBSERVATION, str(exc))
