"""
Camera Geometry

Pinhole camera model used throughout the toolkit: projection, back-projection, depth to XYZ
conversion and point-cloud re-rendering. Camera frame convention is X right, Y down, Z forward.
Depth values of 0 mark invalid pixels.
"""
from dataclasses import dataclass, field
from typing import Dict, Sequence, Tuple, Union

import numpy as np

from nowcast.exceptions import BehindCameraError, InvalidArgumentError


DEFAULT_MAX_RANGE = 8.0

INVALID_DEPTH = 0.0


@dataclass(frozen=True)
class CameraIntrinsics:
    """
    Pinhole intrinsics in pixel units
    """
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidArgumentError(f"focal lengths must be positive, got fx={self.fx} fy={self.fy}")

        if self.width < 1 or self.height < 1:
            raise InvalidArgumentError(f"resolution must be positive, got {self.width}x{self.height}")

        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InvalidArgumentError(
                f"principal point ({self.cx}, {self.cy}) outside the {self.width}x{self.height} sensor"
            )

    @property
    def shape(self) -> Tuple[int, int]:
        """(height, width) of the sensor grid"""
        return (self.height, self.width)

    @property
    def matrix(self) -> np.ndarray:
        """The 3x3 projection matrix K"""
        return np.array([
            [self.fx, 0.0, self.cx],
            [0.0, self.fy, self.cy],
            [0.0, 0.0, 1.0],
        ])

    def contains(self, u: float, v: float) -> bool:
        """
        Whether a continuous pixel coordinate lies inside the sensor

        Keyword arguments:
        u -- column coordinate in pixels
        v -- row coordinate in pixels
        """
        return 0 <= u < self.width and 0 <= v < self.height

    def to_dict(self) -> Dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, values: Dict) -> "CameraIntrinsics":
        return cls(
            fx=float(values["fx"]),
            fy=float(values["fy"]),
            cx=float(values["cx"]),
            cy=float(values["cy"]),
            width=int(values["width"]),
            height=int(values["height"]),
        )


@dataclass(frozen=True)
class Point3:
    """A metric point in the camera frame"""
    x: float
    y: float
    z: float

    def __post_init__(self):
        if not np.all(np.isfinite([self.x, self.y, self.z])):
            raise InvalidArgumentError(f"point components must be finite, got ({self.x}, {self.y}, {self.z})")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)


@dataclass
class DepthFrame:
    """
    Range along the optical axis in meters, 0 marks an invalid pixel
    """
    values: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float32)

        if values.ndim != 2:
            raise InvalidArgumentError(f"depth frame must be a 2D grid, got shape {values.shape}")

        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise InvalidArgumentError("depth values must be finite and non-negative")

        self.values = values

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    @property
    def valid_mask(self) -> np.ndarray:
        return self.values > INVALID_DEPTH

    def copy(self) -> "DepthFrame":
        return DepthFrame(values=self.values.copy(), timestamp=self.timestamp)

    @classmethod
    def empty(cls, intrinsics: CameraIntrinsics, timestamp: float = 0.0) -> "DepthFrame":
        """
        All-invalid frame matching the sensor resolution

        Keyword arguments:
        intrinsics -- the camera the frame belongs to
        timestamp -- frame time in seconds (default: 0.0)
        """
        return cls(values=np.zeros(intrinsics.shape, dtype=np.float32), timestamp=timestamp)


@dataclass
class XYZImage:
    """
    Per-pixel metric camera-frame coordinates with a validity mask
    """
    coords: np.ndarray
    mask: np.ndarray

    @property
    def shape(self) -> Tuple[int, int]:
        return self.mask.shape


@dataclass
class RigidTransform:
    """
    Proper rigid motion p' = R p + t
    """
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)

        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)

        if not np.allclose(self.rotation @ self.rotation.T, np.eye(3), atol=1e-9):
            raise InvalidArgumentError("rotation must be orthonormal")

        if np.linalg.det(self.rotation) <= 0:
            raise InvalidArgumentError("rotation must have determinant +1")

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """
        Returns self after other, i.e. p -> self(other(p))

        Keyword arguments:
        other -- the transform applied first
        """
        return RigidTransform(
            rotation=self.rotation @ other.rotation,
            translation=self.rotation @ other.translation + self.translation,
        )

    def apply(self, points: np.ndarray) -> np.ndarray:
        """
        Transform an (N, 3) array or a single 3-vector

        Keyword arguments:
        points -- the points to transform
        """
        points = np.asarray(points, dtype=np.float64)

        return points @ self.rotation.T + self.translation

    def to_dict(self) -> Dict:
        return {
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
        }

    @classmethod
    def from_dict(cls, values: Dict) -> "RigidTransform":
        return cls(rotation=values["rotation"], translation=values["translation"])


def rotation_about_axis(axis: Sequence[float], angle: float) -> np.ndarray:
    """
    Rodrigues rotation matrix for a rotation of angle radians about axis

    Keyword arguments:
    axis -- rotation axis, normalized internally
    angle -- rotation angle in radians
    """
    axis = np.asarray(axis, dtype=np.float64)

    norm = np.linalg.norm(axis)

    if norm == 0:
        raise InvalidArgumentError("rotation axis must be non-zero")

    x, y, z = axis / norm

    skew = np.array([
        [0.0, -z, y],
        [z, 0.0, -x],
        [-y, x, 0.0],
    ])

    return np.eye(3) + np.sin(angle) * skew + (1.0 - np.cos(angle)) * (skew @ skew)


def backproject_pixel(u: float, v: float, z: float, intrinsics: CameraIntrinsics) -> Point3:
    """
    Lift a pixel with known depth into the camera frame

    Keyword arguments:
    u -- column coordinate in pixels
    v -- row coordinate in pixels
    z -- depth along the optical axis in meters
    intrinsics -- the camera model
    """
    if not z > 0:
        raise InvalidArgumentError(f"depth must be positive, got {z}")

    if not intrinsics.contains(u, v):
        raise InvalidArgumentError(f"pixel ({u}, {v}) outside the {intrinsics.width}x{intrinsics.height} image")

    return Point3(
        x=(u - intrinsics.cx) * z / intrinsics.fx,
        y=(v - intrinsics.cy) * z / intrinsics.fy,
        z=z,
    )


def project_point(point: Union[Point3, Sequence[float]], intrinsics: CameraIntrinsics) -> Tuple[float, float]:
    """
    Project a camera-frame point to continuous pixel coordinates. The result may fall
    outside the image; clipping is left to the caller.

    Keyword arguments:
    point -- the point to project
    intrinsics -- the camera model
    """
    x, y, z = point.as_array() if isinstance(point, Point3) else np.asarray(point, dtype=np.float64)

    if not z > 0:
        raise BehindCameraError(f"point with z={z} is not in front of the camera")

    return (intrinsics.fx * x / z + intrinsics.cx, intrinsics.fy * y / z + intrinsics.cy)


def project_points(points: np.ndarray, intrinsics: CameraIntrinsics) -> np.ndarray:
    """
    Vectorized projection of an (N, 3) array. Points with z <= 0 map to NaN.

    Keyword arguments:
    points -- camera-frame points
    intrinsics -- the camera model
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)

    uv = np.full((points.shape[0], 2), np.nan)

    front = points[:, 2] > 0

    z = points[front, 2]

    uv[front, 0] = intrinsics.fx * points[front, 0] / z + intrinsics.cx

    uv[front, 1] = intrinsics.fy * points[front, 1] / z + intrinsics.cy

    return uv


def points_in_frustum(points: np.ndarray, intrinsics: CameraIntrinsics) -> np.ndarray:
    """
    Boolean mask of points in front of the camera that project inside the image

    Keyword arguments:
    points -- camera-frame points, shape (N, 3)
    intrinsics -- the camera model
    """
    uv = project_points(points, intrinsics)

    with np.errstate(invalid="ignore"):
        return (
            (uv[:, 0] >= 0) & (uv[:, 0] < intrinsics.width)
            & (uv[:, 1] >= 0) & (uv[:, 1] < intrinsics.height)
        )


def depth_to_xyz(depth: DepthFrame, intrinsics: CameraIntrinsics) -> XYZImage:
    """
    Convert a depth frame into an XYZ image by per-pixel homogeneous back-projection

    Keyword arguments:
    depth -- the depth frame
    intrinsics -- the camera model, its resolution must match the frame
    """
    if depth.shape != intrinsics.shape:
        raise InvalidArgumentError(f"depth shape {depth.shape} does not match intrinsics {intrinsics.shape}")

    z = depth.values.astype(np.float64)

    mask = z > INVALID_DEPTH

    rows, cols = np.indices(intrinsics.shape, dtype=np.float64)

    coords = np.zeros(intrinsics.shape + (3,), dtype=np.float64)

    coords[..., 0] = np.where(mask, (cols - intrinsics.cx) * z / intrinsics.fx, 0.0)

    coords[..., 1] = np.where(mask, (rows - intrinsics.cy) * z / intrinsics.fy, 0.0)

    coords[..., 2] = np.where(mask, z, 0.0)

    return XYZImage(coords=coords, mask=mask)


def xyz_to_pointcloud(image: XYZImage) -> np.ndarray:
    """
    Coordinates of all valid pixels in row-major order, shape (N, 3)

    Keyword arguments:
    image -- the XYZ image
    """
    return image.coords[image.mask].reshape(-1, 3)


def splat_pointcloud(points: Union[np.ndarray, Sequence[Point3]], intrinsics: CameraIntrinsics,
                     timestamp: float = 0.0) -> DepthFrame:
    """
    Render a point cloud back to a depth frame. Each point in front of the camera writes its z
    to the nearest pixel, the minimum z wins conflicts, untouched pixels stay invalid.

    Keyword arguments:
    points -- camera-frame points, an (N, 3) array or a sequence of Point3
    intrinsics -- the camera model
    timestamp -- timestamp of the produced frame (default: 0.0)
    """
    if len(points) and isinstance(points[0], Point3):
        points = np.array([p.as_array() for p in points])

    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)

    points = points[np.all(np.isfinite(points), axis=1) & (points[:, 2] > 0)]

    uv = project_points(points, intrinsics)

    cols = np.floor(uv[:, 0] + 0.5)

    rows = np.floor(uv[:, 1] + 0.5)

    inside = (cols >= 0) & (cols < intrinsics.width) & (rows >= 0) & (rows < intrinsics.height)

    flat = rows[inside].astype(np.int64) * intrinsics.width + cols[inside].astype(np.int64)

    buffer = np.full(intrinsics.width * intrinsics.height, np.inf)

    np.minimum.at(buffer, flat, points[inside, 2])

    buffer[np.isinf(buffer)] = INVALID_DEPTH

    return DepthFrame(values=buffer.reshape(intrinsics.shape).astype(np.float32), timestamp=timestamp)
