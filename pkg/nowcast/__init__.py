"""
Depth-based pose nowcasting: present-time estimation and short-horizon forecasting of arm poses
"""
from nowcast.exceptions import (
    AugmentationRejected,
    BehindCameraError,
    CheckpointError,
    ConfigError,
    DatasetIOError,
    DatasetParseError,
    EmptyEvaluationError,
    InvalidArgumentError,
    NonFiniteLossError,
    NowcastError,
    OutOfRangeError,
)
from nowcast.geometry import CameraIntrinsics, DepthFrame, Point3, RigidTransform, XYZImage
from nowcast.spdh import HeatmapSpec, Pose3D, SPDHMaps, decode_maps, encode_pose
