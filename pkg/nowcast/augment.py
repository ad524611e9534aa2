"""
Training-time augmentation

Rigid perturbation of the point cloud behind a depth frame, applied identically to every ground
truth pose of the sample, followed by pepper noise and rectangular dropout on the re-rendered frame.
"""
import math

from dataclasses import dataclass, replace
from typing import Dict, Optional, Tuple, Union

import numpy as np

from nowcast.exceptions import AugmentationRejected, InvalidArgumentError
from nowcast.geometry import (
    INVALID_DEPTH,
    CameraIntrinsics,
    DepthFrame,
    RigidTransform,
    depth_to_xyz,
    points_in_frustum,
    rotation_about_axis,
    splat_pointcloud,
    xyz_to_pointcloud,
)
from nowcast.sim.dataset import DatasetSample, PoseSequence
from nowcast.spdh import DEFAULT_Z_MAX, DEFAULT_Z_MIN, Pose3D


__all__ = [
    "AugmentParams",
    "RigidTransform",
    "apply_rigid",
    "augment_sample",
    "dropout_regions",
    "pepper_noise",
    "sample_rng",
    "sample_transform",
]

ROTATION_AXES = ("xz", "y")


@dataclass(frozen=True)
class AugmentParams:
    """
    Augmentation ranges. Translations are symmetric ranges in meters, rotation in degrees.
    rotation_axes "xz" composes independent rotations about the camera X and Z axes, "y"
    rotates about the camera Y axis instead.
    """
    xy_translation_range: float = 0.20
    z_translation_range: float = 0.30
    rotation_range: float = 5.0
    rotation_axes: str = "xz"
    pepper_fraction: float = 0.15
    dropout_region_count: Tuple[int, int] = (2, 6)
    dropout_region_size: Tuple[int, int] = (4, 20)
    max_outside_fraction: float = 0.5

    def __post_init__(self):
        if min(self.xy_translation_range, self.z_translation_range, self.rotation_range) < 0:
            raise InvalidArgumentError("augmentation ranges must be non-negative")

        if not 0 <= self.pepper_fraction <= 1:
            raise InvalidArgumentError(f"pepper_fraction must be in [0, 1], got {self.pepper_fraction}")

        if self.rotation_axes not in ROTATION_AXES:
            raise InvalidArgumentError(f"rotation_axes must be one of {ROTATION_AXES}, got '{self.rotation_axes}'")

        for name in ("dropout_region_count", "dropout_region_size"):
            low, high = getattr(self, name)

            if not 0 <= low <= high:
                raise InvalidArgumentError(f"{name} must satisfy 0 <= min <= max, got {(low, high)}")

        if not 0 <= self.max_outside_fraction <= 1:
            raise InvalidArgumentError("max_outside_fraction must be in [0, 1]")

    @classmethod
    def disabled(cls) -> "AugmentParams":
        """Parameters under which augmentation only re-renders the point cloud"""
        return cls(
            xy_translation_range=0.0,
            z_translation_range=0.0,
            rotation_range=0.0,
            pepper_fraction=0.0,
            dropout_region_count=(0, 0),
            dropout_region_size=(0, 0),
        )

    def to_dict(self) -> Dict:
        return {
            "xy_translation_range": self.xy_translation_range,
            "z_translation_range": self.z_translation_range,
            "rotation_range": self.rotation_range,
            "rotation_axes": self.rotation_axes,
            "pepper_fraction": self.pepper_fraction,
            "dropout_region_count": list(self.dropout_region_count),
            "dropout_region_size": list(self.dropout_region_size),
            "max_outside_fraction": self.max_outside_fraction,
        }


def sample_rng(seed: int, epoch: int, index: int) -> np.random.Generator:
    """
    Independent generator for one sample of one epoch

    Keyword arguments:
    seed -- the global seed
    epoch -- the training epoch
    index -- the sample index within the dataset
    """
    return np.random.default_rng([seed, epoch, index])


def sample_transform(params: AugmentParams, rng: np.random.Generator) -> RigidTransform:
    """
    Draw a random rigid transform within the configured ranges

    Keyword arguments:
    params -- the augmentation ranges
    rng -- the random generator
    """
    xy = params.xy_translation_range

    translation = np.array([
        rng.uniform(-xy, xy),
        rng.uniform(-xy, xy),
        rng.uniform(-params.z_translation_range, params.z_translation_range),
    ])

    limit = math.radians(params.rotation_range)

    if params.rotation_axes == "xz":
        rotation = (
            rotation_about_axis((1.0, 0.0, 0.0), rng.uniform(-limit, limit))
            @ rotation_about_axis((0.0, 0.0, 1.0), rng.uniform(-limit, limit))
        )

    else:
        rotation = rotation_about_axis((0.0, 1.0, 0.0), rng.uniform(-limit, limit))

    return RigidTransform(rotation=rotation, translation=translation)


def apply_rigid(target: Union[np.ndarray, Pose3D, PoseSequence],
                transform: RigidTransform) -> Union[np.ndarray, Pose3D, PoseSequence]:
    """
    Apply p' = R p + t to a point array, a pose or a pose sequence. Validity flags and
    timestamps are kept.

    Keyword arguments:
    target -- the points or poses to move
    transform -- the rigid transform
    """
    if isinstance(target, Pose3D):
        return Pose3D(joints=transform.apply(target.joints), timestamp=target.timestamp, valid=target.valid.copy())

    if isinstance(target, PoseSequence):
        return PoseSequence(poses=[apply_rigid(pose, transform) for pose in target.poses], rate=target.rate)

    return transform.apply(target)


def pepper_noise(depth: DepthFrame, fraction: float, rng: np.random.Generator) -> DepthFrame:
    """
    Invalidate each valid pixel independently with probability fraction

    Keyword arguments:
    depth -- the input frame
    fraction -- probability in [0, 1]
    rng -- the random generator
    """
    if not 0 <= fraction <= 1:
        raise InvalidArgumentError(f"fraction must be in [0, 1], got {fraction}")

    noisy = depth.copy()

    hit = depth.valid_mask & (rng.random(depth.shape) < fraction)

    noisy.values[hit] = INVALID_DEPTH

    return noisy


def dropout_regions(depth: DepthFrame, params: AugmentParams, rng: np.random.Generator) -> DepthFrame:
    """
    Zero a random number of axis-aligned rectangles, clipped at the image border

    Keyword arguments:
    depth -- the input frame
    params -- provides the region count and size ranges
    rng -- the random generator
    """
    dropped = depth.copy()

    height, width = depth.shape

    low, high = params.dropout_region_count

    for _ in range(int(rng.integers(low, high + 1))):
        region_height, region_width = rng.integers(
            params.dropout_region_size[0], params.dropout_region_size[1] + 1, size=2,
        )

        top = int(rng.integers(0, height))

        left = int(rng.integers(0, width))

        dropped.values[top:top + int(region_height), left:left + int(region_width)] = INVALID_DEPTH

    return dropped


def _visible(pose: Pose3D, intrinsics: CameraIntrinsics, depth_range: Tuple[float, float]) -> np.ndarray:
    z = pose.joints[:, 2]

    return points_in_frustum(pose.joints, intrinsics) & (z >= depth_range[0]) & (z < depth_range[1])


def augment_sample(sample: DatasetSample, params: AugmentParams, rng: np.random.Generator,
                   transform: Optional[RigidTransform] = None,
                   depth_range: Tuple[float, float] = (DEFAULT_Z_MIN, DEFAULT_Z_MAX)) -> DatasetSample:
    """
    Augment one sample: unproject, move cloud and all poses by one transform, splat back,
    then pepper noise and region dropout. Joints that leave the view or depth range are
    flagged invalid.

    Keyword arguments:
    sample -- the sample to augment
    params -- the augmentation settings
    rng -- the random generator, the only source of randomness
    transform -- use this transform instead of drawing one (default: None)
    depth_range -- depth interval a joint must stay in to remain valid (default: codec range)
    """
    transform = transform or sample_transform(params, rng)

    intrinsics = sample.intrinsics

    cloud = xyz_to_pointcloud(depth_to_xyz(sample.depth, intrinsics))

    depth = splat_pointcloud(apply_rigid(cloud, transform), intrinsics, timestamp=sample.depth.timestamp)

    depth = pepper_noise(depth, params.pepper_fraction, rng)

    depth = dropout_regions(depth, params, rng)

    poses = [sample.current_pose] + list(sample.past_poses.poses) + list(sample.future_poses)

    moved = [apply_rigid(pose, transform) for pose in poses]

    valid_before = sum(int(np.sum(pose.valid)) for pose in poses)

    left = 0

    for pose in moved:
        visible = _visible(pose, intrinsics, depth_range)

        left += int(np.sum(pose.valid & ~visible))

        pose.valid = pose.valid & visible

    if valid_before and left / valid_before > params.max_outside_fraction:
        raise AugmentationRejected(f"{left} of {valid_before} joints left the view")

    past_count = len(sample.past_poses)

    return replace(
        sample,
        depth=depth,
        current_pose=moved[0],
        past_poses=PoseSequence(poses=moved[1:1 + past_count], rate=sample.past_poses.rate),
        future_poses=moved[1 + past_count:],
    )
