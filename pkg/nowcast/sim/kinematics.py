"""
Serial Arm Kinematics

A configurable chain of revolute joints. Every link extends along the local +X axis of the frame
produced by its joint rotation; the arm frame is placed in the camera frame by base_pose.
"""
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from nowcast.exceptions import InvalidArgumentError
from nowcast.geometry import RigidTransform, rotation_about_axis
from nowcast.spdh import Pose3D


LIMIT_TOLERANCE = 1e-12

DEFAULT_LINK_LENGTHS = (0.30, 0.25, 0.20, 0.15)

DEFAULT_LINK_RADIUS = 0.04

DEFAULT_JOINT_NAMES = ("base", "shoulder", "elbow", "wrist", "tool")

# arm-local X (the column) points up in the camera frame, local Y to camera X
UPRIGHT_ROTATION = np.array([
    [0.0, 1.0, 0.0],
    [-1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0],
])


@dataclass
class ArmModel:
    """
    Serial arm of revolute joints, rendered as capsules of link_radius around each link
    """
    link_lengths: Sequence[float]
    joint_axes: Sequence[Sequence[float]]
    joint_limits: Sequence[Tuple[float, float]]
    link_radius: float = DEFAULT_LINK_RADIUS
    base_pose: RigidTransform = field(default_factory=RigidTransform.identity)
    joint_names: Optional[List[str]] = None

    def __post_init__(self):
        self.link_lengths = np.asarray(self.link_lengths, dtype=np.float64).reshape(-1)

        self.joint_axes = np.asarray(self.joint_axes, dtype=np.float64).reshape(-1, 3)

        self.joint_limits = np.asarray(self.joint_limits, dtype=np.float64).reshape(-1, 2)

        count = self.link_lengths.shape[0]

        if count < 1:
            raise InvalidArgumentError("an arm needs at least one link")

        if self.joint_axes.shape[0] != count or self.joint_limits.shape[0] != count:
            raise InvalidArgumentError(
                f"{count} links require {count} axes and limits, got {self.joint_axes.shape[0]} and {self.joint_limits.shape[0]}"
            )

        if np.any(self.link_lengths <= 0) or not self.link_radius > 0:
            raise InvalidArgumentError("link lengths and radius must be positive")

        if np.any(self.joint_limits[:, 0] >= self.joint_limits[:, 1]):
            raise InvalidArgumentError("joint limits must satisfy min < max")

        if not np.allclose(np.linalg.norm(self.joint_axes, axis=1), 1.0, atol=1e-9):
            raise InvalidArgumentError("joint axes must be unit vectors")

        if self.joint_names is None:
            if count + 1 == len(DEFAULT_JOINT_NAMES):
                self.joint_names = list(DEFAULT_JOINT_NAMES)

            else:
                self.joint_names = [f"joint_{index}" for index in range(count + 1)]

        if len(self.joint_names) != count + 1:
            raise InvalidArgumentError(f"expected {count + 1} keypoint names, got {len(self.joint_names)}")

    @property
    def num_joints(self) -> int:
        """Number of revolute joints"""
        return self.link_lengths.shape[0]

    @property
    def num_keypoints(self) -> int:
        """Number of tracked keypoints: the base origin plus every link end"""
        return self.num_joints + 1

    @property
    def reach(self) -> float:
        return float(np.sum(self.link_lengths))

    def with_base_pose(self, base_pose: RigidTransform) -> "ArmModel":
        return replace(self, base_pose=base_pose)

    def to_dict(self) -> Dict:
        return {
            "link_lengths": self.link_lengths.tolist(),
            "joint_axes": self.joint_axes.tolist(),
            "joint_limits": self.joint_limits.tolist(),
            "link_radius": self.link_radius,
            "base_pose": self.base_pose.to_dict(),
            "joint_names": list(self.joint_names),
        }

    @classmethod
    def from_dict(cls, values: Dict) -> "ArmModel":
        return cls(
            link_lengths=values["link_lengths"],
            joint_axes=values["joint_axes"],
            joint_limits=values["joint_limits"],
            link_radius=values["link_radius"],
            base_pose=RigidTransform.from_dict(values["base_pose"]),
            joint_names=values.get("joint_names"),
        )


def default_arm_model(base_pose: Optional[RigidTransform] = None) -> ArmModel:
    """
    Four revolute joints (a vertical column with yaw, then three pitch joints), five keypoints

    Keyword arguments:
    base_pose -- placement of the arm in the camera frame (default: upright at the origin)
    """
    return ArmModel(
        link_lengths=DEFAULT_LINK_LENGTHS,
        joint_axes=[
            (1.0, 0.0, 0.0),
            (0.0, 1.0, 0.0),
            (0.0, 1.0, 0.0),
            (0.0, 1.0, 0.0),
        ],
        joint_limits=[
            (-3.0, 3.0),
            (0.3, 1.3),
            (0.2, 1.6),
            (-1.0, 1.0),
        ],
        link_radius=DEFAULT_LINK_RADIUS,
        base_pose=base_pose or RigidTransform(rotation=UPRIGHT_ROTATION),
    )


def forward_kinematics(model: ArmModel, angles: Sequence[float], timestamp: float = 0.0) -> Pose3D:
    """
    Keypoint positions in the camera frame for a joint configuration

    Keyword arguments:
    model -- the arm
    angles -- one angle in radians per joint, within the joint limits
    timestamp -- timestamp of the produced pose (default: 0.0)
    """
    angles = np.asarray(angles, dtype=np.float64).reshape(-1)

    if angles.shape[0] != model.num_joints:
        raise InvalidArgumentError(f"expected {model.num_joints} joint angles, got {angles.shape[0]}")

    lower = model.joint_limits[:, 0] - LIMIT_TOLERANCE

    upper = model.joint_limits[:, 1] + LIMIT_TOLERANCE

    outside = np.flatnonzero((angles < lower) | (angles > upper))

    if outside.size:
        index = int(outside[0])

        raise InvalidArgumentError(
            f"angle {angles[index]} of joint {index} outside limits {tuple(model.joint_limits[index])}"
        )

    rotation = np.eye(3)

    position = np.zeros(3)

    keypoints = [position]

    for length, axis, angle in zip(model.link_lengths, model.joint_axes, angles):
        rotation = rotation @ rotation_about_axis(axis, angle)

        position = position + rotation[:, 0] * length

        keypoints.append(position)

    return Pose3D(joints=model.base_pose.apply(np.stack(keypoints)), timestamp=timestamp)
