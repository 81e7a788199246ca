"""Core domain types: camera model, poses, map points, detections, priors.

All types are immutable value objects. Construction only coerces and freezes
the underlying arrays; consistency of a whole dataset is checked by
`validate_dataset`, which reports every violation instead of raising on the
first one, so broken inputs can be diagnosed in a single pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import ConfigError

__all__ = [
    "Rect",
    "CameraIntrinsics",
    "Pose",
    "MapPoint",
    "Detection",
    "LocalMapView",
    "HeightPrior",
    "WorldConfig",
    "ValidationIssue",
    "ValidationReport",
    "validate_dataset",
]

ROTATION_TOL = 1e-9


def _frozen(values, shape) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(shape)
    arr.flags.writeable = False
    return arr


class Rect(NamedTuple):
    """Axis-aligned image rectangle with inclusive pixel bounds."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    def contains(self, u: float, v: float) -> bool:
        return self.x_min <= u <= self.x_max and self.y_min <= v <= self.y_max


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole camera: focal lengths, principal point, image size, all in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def project(self, points_cam) -> np.ndarray:
        """Project camera-frame points (n, 3) to pixels (n, 2).

        No depth check is performed; callers filter non-positive depths first.
        """
        pts = np.atleast_2d(np.asarray(points_cam, dtype=float))
        z = pts[:, 2]
        out = np.empty((len(pts), 2))
        out[:, 0] = self.fx * pts[:, 0] / z + self.cx
        out[:, 1] = self.fy * pts[:, 1] / z + self.cy
        return out

    def ray(self, pixel) -> np.ndarray:
        """Back-project a pixel to its camera-frame viewing ray, scaled to unit depth."""
        u, v = float(pixel[0]), float(pixel[1])
        return np.array([(u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0])


@dataclass(frozen=True)
class Pose:
    """Camera-to-world rigid transform: p_world = rotation @ p_cam + translation.

    Matches the KITTI odometry ground-truth convention so pose files can be
    exchanged with that toolchain directly.
    """

    rotation: np.ndarray
    translation: np.ndarray
    frame_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "rotation", _frozen(self.rotation, (3, 3)))
        object.__setattr__(self, "translation", _frozen(self.translation, (3,)))

    @classmethod
    def identity(cls, frame_index: int = 0) -> "Pose":
        return cls(np.eye(3), np.zeros(3), frame_index)

    def compose(self, other: "Pose") -> "Pose":
        """Chain transforms: (a.compose(b))(p) == a(b(p)). Keeps `other`'s frame index."""
        return Pose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
            other.frame_index,
        )

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation, self.frame_index)

    def relative_to(self, prev: "Pose") -> "Pose":
        """Motion from `prev` to this pose, expressed in `prev`'s camera frame."""
        return prev.inverse().compose(self)

    def world_to_camera(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return (pts - self.translation) @ self.rotation

    def camera_to_world(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation.T + self.translation

    def rotation_defect(self) -> float:
        """Max absolute entry of rotationᵀ·rotation − I."""
        return float(np.abs(self.rotation.T @ self.rotation - np.eye(3)).max())

    def is_valid(self, tol: float = ROTATION_TOL) -> bool:
        return (
            self.rotation_defect() <= tol
            and abs(float(np.linalg.det(self.rotation)) - 1.0) <= tol
            and bool(np.isfinite(self.translation).all())
        )


@dataclass(frozen=True)
class MapPoint:
    """Sparse reconstructed 3D point, world frame, SLAM units."""

    id: int
    position_world: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position_world", _frozen(self.position_world, (3,)))


@dataclass(frozen=True)
class Detection:
    """One detected object instance in one frame."""

    frame_index: int
    class_label: str
    confidence: float
    rect: Rect

    def __post_init__(self):
        if not isinstance(self.rect, Rect):
            object.__setattr__(self, "rect", Rect(*self.rect))


@dataclass(frozen=True)
class LocalMapView:
    """Ids of the map points associated with one frame's tracking."""

    frame_index: int
    point_ids: frozenset

    def __post_init__(self):
        object.__setattr__(self, "point_ids", frozenset(self.point_ids))


@dataclass(frozen=True)
class HeightPrior:
    """Distribution over the true metric height of one object class.

    Either Gaussian (mean, std) or a normalized histogram over positive height
    bins. `mean` is always populated; for histograms it is the bin-center
    average. Scale observations divide the measured extent by this mean.
    """

    class_label: str
    mean: float
    std: float = 0.0
    bin_edges: np.ndarray | None = None
    bin_weights: np.ndarray | None = None

    def __post_init__(self):
        if self.bin_edges is None:
            if not (self.mean > 0 and self.std > 0):
                raise ConfigError(
                    f"gaussian prior for {self.class_label!r} needs mean > 0 and std > 0"
                )
        else:
            edges = np.array(self.bin_edges, dtype=float).reshape(-1)
            weights = np.array(self.bin_weights, dtype=float).reshape(-1)
            if len(edges) < 2 or len(weights) != len(edges) - 1:
                raise ConfigError("histogram prior needs n+1 edges for n weights")
            if edges[0] <= 0 or np.any(np.diff(edges) <= 0):
                raise ConfigError("histogram prior edges must be increasing and positive")
            if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
                raise ConfigError("histogram prior weights must be >= 0 and sum to 1")
            edges.flags.writeable = False
            weights.flags.writeable = False
            object.__setattr__(self, "bin_edges", edges)
            object.__setattr__(self, "bin_weights", weights)

    @property
    def is_gaussian(self) -> bool:
        return self.bin_edges is None

    @classmethod
    def gaussian(cls, class_label: str, mean: float, std: float) -> "HeightPrior":
        return cls(class_label, float(mean), float(std))

    @classmethod
    def histogram(cls, class_label: str, bin_edges, weights) -> "HeightPrior":
        edges = np.asarray(bin_edges, dtype=float)
        w = np.asarray(weights, dtype=float)
        total = w.sum()
        if total <= 0:
            raise ConfigError("histogram prior weights must have positive mass")
        w = w / total
        centers = 0.5 * (edges[:-1] + edges[1:])
        mean = float((centers * w).sum())
        return cls(class_label, mean, 0.0, edges, w)

    def height_grid(self, bins: int = 256, span_sigmas: float = 5.0):
        """Discrete (centers, weights) support used to marginalize over height."""
        if self.is_gaussian:
            lo = max(self.mean - span_sigmas * self.std, 1e-12)
            hi = self.mean + span_sigmas * self.std
            centers = np.linspace(lo, hi, bins)
            w = np.exp(-0.5 * ((centers - self.mean) / self.std) ** 2)
            return centers, w / w.sum()
        centers = 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])
        return centers, self.bin_weights.copy()


@dataclass(frozen=True)
class WorldConfig:
    """Scene-level knobs shared by the observation pipeline."""

    # Worlds anchored to the first camera have image-y pointing down (KITTI).
    up_world: np.ndarray = (0.0, -1.0, 0.0)
    min_points_per_detection: int = 5
    gamma_alpha: float = 1.5
    gamma_beta: float = 0.2
    confidence_threshold: float = 0.45
    noise_floor: float = 1e-3  # lower bound on a scale observation's std
    min_height: float = 1e-6  # reject detections with smaller measured extent

    def __post_init__(self):
        up = np.array(self.up_world, dtype=float).reshape(3)
        if abs(float(np.linalg.norm(up)) - 1.0) > 1e-9:
            raise ConfigError("up_world must be a unit vector")
        up.flags.writeable = False
        object.__setattr__(self, "up_world", up)
        if self.min_points_per_detection < 1:
            raise ConfigError("min_points_per_detection must be >= 1")
        if not (self.gamma_alpha > 0 and self.gamma_beta > 0):
            raise ConfigError("gamma weighting parameters must be positive")
        if not 0.0 <= self.confidence_threshold <= 1.0:
            raise ConfigError("confidence_threshold must be in [0, 1]")
        if self.noise_floor <= 0 or self.min_height <= 0:
            raise ConfigError("noise_floor and min_height must be positive")


@dataclass(frozen=True)
class ValidationIssue:
    where: str
    message: str


@dataclass
class ValidationReport:
    """Accumulated invariant violations; empty means the dataset is consistent."""

    issues: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def add(self, where: str, message: str) -> None:
        self.issues.append(ValidationIssue(where, message))

    def __len__(self) -> int:
        return len(self.issues)


def validate_dataset(
    poses: Sequence[Pose],
    points: Mapping[int, MapPoint] | Iterable[MapPoint],
    detections: Sequence[Detection],
    intrinsics: CameraIntrinsics | None,
    local_views: Mapping[int, LocalMapView] | None = None,
) -> ValidationReport:
    """Check every dataset invariant and report all violations.

    Pure and idempotent: nothing is mutated, violations become report entries,
    and an empty report means the dataset is consistent.
    """
    report = ValidationReport()

    if intrinsics is not None:
        where = "intrinsics"
        if not (intrinsics.fx > 0 and intrinsics.fy > 0):
            report.add(where, "focal lengths must be positive")
        if not (intrinsics.width > 0 and intrinsics.height > 0):
            report.add(where, "image size must be positive")
        if not (0 <= intrinsics.cx < intrinsics.width):
            report.add(where, "cx outside [0, width)")
        if not (0 <= intrinsics.cy < intrinsics.height):
            report.add(where, "cy outside [0, height)")

    prev_frame = None
    for pose in poses:
        where = f"pose frame {pose.frame_index}"
        if prev_frame is not None and pose.frame_index <= prev_frame:
            report.add(where, "frame indices not strictly increasing")
        prev_frame = pose.frame_index
        if pose.rotation_defect() > ROTATION_TOL:
            report.add(where, f"rotation not orthonormal at frame {pose.frame_index}")
        elif abs(float(np.linalg.det(pose.rotation)) - 1.0) > ROTATION_TOL:
            report.add(where, "rotation determinant is not +1")
        if not np.isfinite(pose.translation).all():
            report.add(where, "translation has non-finite values")

    if isinstance(points, Mapping):
        point_items = points.items()
        known_ids = set(points.keys())
    else:
        point_items = [(p.id, p) for p in points]
        known_ids = {pid for pid, _ in point_items}
    seen_ids = set()
    for pid, point in point_items:
        where = f"map point {pid}"
        if pid in seen_ids:
            report.add(where, "duplicate point id")
        seen_ids.add(pid)
        if not np.isfinite(point.position_world).all():
            report.add(where, "position has non-finite values")

    frame_set = {p.frame_index for p in poses}
    for i, det in enumerate(detections):
        where = f"detection {i} (frame {det.frame_index})"
        r = det.rect
        if not (r.x_min < r.x_max and r.y_min < r.y_max):
            report.add(where, "degenerate rect")
        elif intrinsics is not None and (
            r.x_max < 0
            or r.y_max < 0
            or r.x_min > intrinsics.width
            or r.y_min > intrinsics.height
        ):
            report.add(where, "rect does not intersect the image bounds")
        if not 0.0 <= det.confidence <= 1.0:
            report.add(where, "confidence outside [0, 1]")
        if not all(np.isfinite(v) for v in r):
            report.add(where, "rect has non-finite values")
        if poses and det.frame_index not in frame_set:
            report.add(where, "frame index has no pose")

    if local_views is not None:
        for frame, view in sorted(local_views.items()):
            missing = set(view.point_ids) - known_ids
            if missing:
                shown = sorted(missing)[:3]
                report.add(
                    f"local view frame {frame}",
                    f"references unknown point ids {shown}"
                    + ("..." if len(missing) > 3 else ""),
                )

    return report
