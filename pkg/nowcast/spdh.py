"""
Semi-Perspective Decoupled Heatmaps

Encodes 3D joint sets as paired heatmap stacks: a uv stack on the (strided) image plane and a
uz stack whose rows are quantized depth bins and whose columns share the uv column axis.
Decoding takes the hard argmax of each map and back-projects through the camera intrinsics.
"""
import math

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from nowcast.exceptions import InvalidArgumentError, OutOfRangeError
from nowcast.geometry import CameraIntrinsics, backproject_pixel, project_points


DEFAULT_SIGMA = 2.0

DEFAULT_Z_MIN = 0.5

DEFAULT_Z_MAX = 4.5

DEFAULT_PEAK_THRESHOLD = 0.1

# Gaussians farther than this many sigmas outside the grid render as all-zero maps
SUPPORT_SIGMAS = 3.0


@dataclass
class Pose3D:
    """
    J camera-frame joint positions in meters with per-joint validity flags
    """
    joints: np.ndarray
    timestamp: float = 0.0
    valid: Optional[np.ndarray] = None

    def __post_init__(self):
        joints = np.asarray(self.joints, dtype=np.float64)

        if joints.ndim != 2 or joints.shape[1] != 3 or joints.shape[0] < 1:
            raise InvalidArgumentError(f"joints must have shape (J, 3) with J >= 1, got {joints.shape}")

        valid = np.ones(joints.shape[0], dtype=bool) if self.valid is None else np.asarray(self.valid, dtype=bool)

        if valid.shape != (joints.shape[0],):
            raise InvalidArgumentError(f"validity flags must have shape ({joints.shape[0]},), got {valid.shape}")

        if not np.all(np.isfinite(joints[valid])):
            raise InvalidArgumentError("valid joints must be finite")

        self.joints = joints

        self.valid = valid

    @property
    def num_joints(self) -> int:
        return self.joints.shape[0]

    def copy(self) -> "Pose3D":
        return Pose3D(joints=self.joints.copy(), timestamp=self.timestamp, valid=self.valid.copy())

    def to_dict(self) -> Dict:
        return {
            "timestamp_s": self.timestamp,
            "joints": self.joints.tolist(),
            "valid": self.valid.tolist(),
        }

    @classmethod
    def from_dict(cls, values: Dict) -> "Pose3D":
        return cls(
            joints=np.array(values["joints"], dtype=np.float64),
            timestamp=float(values["timestamp_s"]),
            valid=np.array(values["valid"], dtype=bool),
        )


@dataclass(frozen=True)
class HeatmapSpec:
    """
    Geometry of one SPDH stack. The uz maps share the uv map shape, so there are exactly
    map_height depth bins.
    """
    map_height: int
    map_width: int
    stride: int = 1
    sigma_uv: float = DEFAULT_SIGMA
    sigma_uz: float = DEFAULT_SIGMA
    z_min: float = DEFAULT_Z_MIN
    z_max: float = DEFAULT_Z_MAX
    n_z_bins: Optional[int] = None
    peak_threshold: float = DEFAULT_PEAK_THRESHOLD

    def __post_init__(self):
        if self.n_z_bins is None:
            object.__setattr__(self, "n_z_bins", self.map_height)

        if self.map_height < 1 or self.map_width < 1:
            raise InvalidArgumentError(f"map shape must be positive, got {self.map_height}x{self.map_width}")

        if self.stride < 1:
            raise InvalidArgumentError(f"stride must be >= 1, got {self.stride}")

        if self.n_z_bins != self.map_height:
            raise InvalidArgumentError(f"n_z_bins ({self.n_z_bins}) must equal map_height ({self.map_height})")

        if not (self.sigma_uv > 0 and self.sigma_uz > 0):
            raise InvalidArgumentError("sigmas must be positive")

        if not 0 < self.z_min < self.z_max:
            raise InvalidArgumentError(f"depth range must satisfy 0 < z_min < z_max, got ({self.z_min}, {self.z_max})")

    @property
    def delta_z(self) -> float:
        """Quantization step of the depth axis"""
        return (self.z_max - self.z_min) / self.n_z_bins

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.map_height, self.map_width)

    @classmethod
    def for_input(cls, input_height: int, input_width: int, stride: int, **kwargs) -> "HeatmapSpec":
        """
        Spec whose maps cover an input image at the given stride

        Keyword arguments:
        input_height -- input image height in pixels
        input_width -- input image width in pixels
        stride -- ratio of input resolution to map resolution
        """
        if input_height % stride or input_width % stride:
            raise InvalidArgumentError(f"input {input_height}x{input_width} not divisible by stride {stride}")

        return cls(map_height=input_height // stride, map_width=input_width // stride, stride=stride, **kwargs)

    def to_dict(self) -> Dict:
        return {
            "map_height": self.map_height,
            "map_width": self.map_width,
            "stride": self.stride,
            "sigma_uv": self.sigma_uv,
            "sigma_uz": self.sigma_uz,
            "z_min": self.z_min,
            "z_max": self.z_max,
            "n_z_bins": self.n_z_bins,
            "peak_threshold": self.peak_threshold,
        }

    @classmethod
    def from_dict(cls, values: Dict) -> "HeatmapSpec":
        return cls(**values)


@dataclass
class SPDHMaps:
    """
    Paired uv and uz heatmap stacks, each of shape (J, map_height, map_width)
    """
    uv: np.ndarray
    uz: np.ndarray
    spec: HeatmapSpec = field(repr=False, default=None)

    def __post_init__(self):
        self.uv = np.asarray(self.uv)

        self.uz = np.asarray(self.uz)

        if self.uv.shape != self.uz.shape or self.uv.ndim != 3:
            raise InvalidArgumentError(f"uv {self.uv.shape} and uz {self.uz.shape} stacks must be equal (J, h, w)")

        if self.spec is not None and self.uv.shape[1:] != self.spec.shape:
            raise InvalidArgumentError(f"map shape {self.uv.shape[1:]} does not match spec {self.spec.shape}")

    @property
    def num_joints(self) -> int:
        return self.uv.shape[0]

    def stacked(self) -> np.ndarray:
        """Channel-wise stack, uv maps first then uz maps, shape (2J, h, w)"""
        return np.concatenate([self.uv, self.uz], axis=0)

    @classmethod
    def from_stacked(cls, stacked: np.ndarray, spec: Optional[HeatmapSpec] = None) -> "SPDHMaps":
        """
        Inverse of stacked()

        Keyword arguments:
        stacked -- array of shape (2J, h, w)
        spec -- the heatmap spec (default: None)
        """
        stacked = np.asarray(stacked)

        if stacked.ndim != 3 or stacked.shape[0] % 2:
            raise InvalidArgumentError(f"stacked maps must have shape (2J, h, w), got {stacked.shape}")

        joints = stacked.shape[0] // 2

        return cls(uv=stacked[:joints], uz=stacked[joints:], spec=spec)


def render_gaussian(center_row: float, center_col: float, spec: HeatmapSpec, sigma: float) -> np.ndarray:
    """
    Unnormalized Gaussian evaluated on the map grid, peak 1.0 at a grid-aligned center

    Keyword arguments:
    center_row -- center row in map pixels
    center_col -- center column in map pixels
    spec -- the heatmap spec providing the grid shape
    sigma -- standard deviation in map pixels
    """
    if not sigma > 0:
        raise InvalidArgumentError(f"sigma must be positive, got {sigma}")

    height, width = spec.shape

    margin = SUPPORT_SIGMAS * sigma

    if (center_row < -margin or center_row > height - 1 + margin
            or center_col < -margin or center_col > width - 1 + margin):
        return np.zeros(spec.shape, dtype=np.float64)

    rows = np.arange(height, dtype=np.float64)[:, None]

    cols = np.arange(width, dtype=np.float64)[None, :]

    return np.exp(-((rows - center_row) ** 2 + (cols - center_col) ** 2) / (2.0 * sigma ** 2))


def z_to_bin(z: float, spec: HeatmapSpec) -> int:
    """
    Quantize a depth value to its bin index

    Keyword arguments:
    z -- depth in meters, within [z_min, z_max)
    spec -- the heatmap spec
    """
    if not spec.z_min <= z < spec.z_max:
        raise OutOfRangeError(f"depth {z} outside [{spec.z_min}, {spec.z_max})")

    index = math.floor((z - spec.z_min) * spec.n_z_bins / (spec.z_max - spec.z_min))

    return min(max(index, 0), spec.n_z_bins - 1)


def bin_to_z(index: int, spec: HeatmapSpec) -> float:
    """
    Metric depth at the center of a bin

    Keyword arguments:
    index -- bin index in [0, n_z_bins)
    spec -- the heatmap spec
    """
    if not 0 <= index < spec.n_z_bins:
        raise InvalidArgumentError(f"bin {index} outside [0, {spec.n_z_bins})")

    return spec.z_min + (index + 0.5) * spec.delta_z


def _grid_index(value: float, limit: int) -> int:
    return min(max(int(math.floor(value + 0.5)), 0), limit - 1)


def encode_pose(pose: Pose3D, intrinsics: CameraIntrinsics, spec: HeatmapSpec) -> SPDHMaps:
    """
    Render the uv and uz Gaussian maps of every valid joint, invalid joints get all-zero maps.
    Map centers are snapped to the nearest grid point so each map has a unique peak of 1.0.

    Keyword arguments:
    pose -- the pose to encode
    intrinsics -- the camera model
    spec -- the heatmap spec
    """
    uv_maps = np.zeros((pose.num_joints,) + spec.shape, dtype=np.float64)

    uz_maps = np.zeros_like(uv_maps)

    pixels = project_points(pose.joints, intrinsics)

    for index in np.flatnonzero(pose.valid):
        z = pose.joints[index, 2]

        if not spec.z_min <= z < spec.z_max:
            raise OutOfRangeError(f"depth {z} outside [{spec.z_min}, {spec.z_max})", joint_index=int(index))

        u, v = pixels[index]

        if not intrinsics.contains(u, v):
            raise OutOfRangeError(f"projection ({u}, {v}) outside the image", joint_index=int(index))

        row = _grid_index(v / spec.stride, spec.map_height)

        col = _grid_index(u / spec.stride, spec.map_width)

        uv_maps[index] = render_gaussian(row, col, spec, spec.sigma_uv)

        uz_maps[index] = render_gaussian(z_to_bin(z, spec), col, spec, spec.sigma_uz)

    return SPDHMaps(uv=uv_maps, uz=uz_maps, spec=spec)


def decode_maps(maps: SPDHMaps, intrinsics: CameraIntrinsics, timestamp: float = 0.0) -> Pose3D:
    """
    Hard-argmax decoding. Ties resolve to the first maximum in row-major order. Joints whose uv
    maximum is below the peak threshold keep their decoded position but are flagged invalid.

    Keyword arguments:
    maps -- the heatmaps to decode, maps.spec must be set
    intrinsics -- the camera model
    timestamp -- timestamp given to the decoded pose (default: 0.0)
    """
    spec = maps.spec

    if spec is None:
        raise InvalidArgumentError("maps must carry their heatmap spec to be decoded")

    joints = np.zeros((maps.num_joints, 3), dtype=np.float64)

    valid = np.zeros(maps.num_joints, dtype=bool)

    for index in range(maps.num_joints):
        uv_map = maps.uv[index]

        row, col = np.unravel_index(int(np.argmax(uv_map)), uv_map.shape)

        z_row, _ = np.unravel_index(int(np.argmax(maps.uz[index])), maps.uz[index].shape)

        point = backproject_pixel(
            u=float(col * spec.stride),
            v=float(row * spec.stride),
            z=bin_to_z(int(z_row), spec),
            intrinsics=intrinsics,
        )

        joints[index] = point.as_array()

        valid[index] = bool(uv_map[row, col] >= spec.peak_threshold)

    return Pose3D(joints=joints, timestamp=timestamp, valid=valid)


def codec_error_bound(spec: HeatmapSpec, intrinsics: CameraIntrinsics) -> float:
    """
    Analytic upper bound on the Euclidean round-trip error of encode then decode, for joints
    whose projection lies within the sampled extent of the map grid.

    The decoded pixel is off by at most half a stride per axis and the decoded depth by half a
    bin. With x = (u - cx) z / fx the lateral error is bounded by
    0.5 stride z_max / fx + (dz / 2) max|u - cx| / fx, likewise for y.

    Keyword arguments:
    spec -- the heatmap spec
    intrinsics -- the camera model
    """
    half_bin = spec.delta_z / 2.0

    half_pixel = 0.5 * spec.stride

    max_ray_x = max(intrinsics.cx, intrinsics.width - intrinsics.cx) / intrinsics.fx

    max_ray_y = max(intrinsics.cy, intrinsics.height - intrinsics.cy) / intrinsics.fy

    error_x = half_pixel * spec.z_max / intrinsics.fx + half_bin * max_ray_x

    error_y = half_pixel * spec.z_max / intrinsics.fy + half_bin * max_ray_y

    return math.sqrt(error_x ** 2 + error_y ** 2 + half_bin ** 2)
