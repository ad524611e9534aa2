"""
Inference wrapper binding the network to depth frames, intrinsics and pose sequences
"""
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch

from nowcast.exceptions import InvalidArgumentError
from nowcast.geometry import CameraIntrinsics, DepthFrame, depth_to_xyz
from nowcast.model.config import ModelConfig
from nowcast.model.network import NowcastNetwork, normalize_joints, normalize_xyz, split_forecast
from nowcast.sim.dataset import PoseSequence
from nowcast.spdh import Pose3D, SPDHMaps, decode_maps


@dataclass
class NetworkOutput:
    """Present SPDH maps and one SPDH stack per future step"""
    current: SPDHMaps
    future: List[SPDHMaps]


def prepare_inputs(depth: DepthFrame, intrinsics: CameraIntrinsics, past: Sequence[np.ndarray],
                   config: ModelConfig) -> Tuple[np.ndarray, np.ndarray]:
    """
    Network inputs of a single frame: the normalized XYZ image (3, H, W) and normalized past
    joints (M, J, 3)

    Keyword arguments:
    depth -- the depth frame
    intrinsics -- the camera model
    past -- M joint arrays of shape (J, 3), oldest first
    config -- the network configuration
    """
    if depth.shape != (config.input_height, config.input_width):
        raise InvalidArgumentError(
            f"depth frame {depth.shape} does not match the configured input {config.input_height}x{config.input_width}"
        )

    past = np.asarray(past, dtype=np.float64)

    if past.shape != (config.past_count, config.num_joints, 3):
        raise InvalidArgumentError(
            f"expected {config.past_count} past poses of {config.num_joints} joints, got shape {past.shape}"
        )

    return normalize_xyz(depth_to_xyz(depth, intrinsics), config), normalize_joints(past, config)


class Nowcaster:
    """
    Runs a network in inference mode on single frames and decodes its outputs
    """
    def __init__(self, network: NowcastNetwork, device: str = "cpu"):
        """
        Keyword arguments:
        network -- the trained network
        device -- torch device to run on (default: cpu)
        """
        self.network = network.to(device).eval()

        self.device = device

        self.config = network.config

        self.current_spec = self.config.current_spec()

        self.future_spec = self.config.future_spec()

    def _tensors(self, depth: DepthFrame, intrinsics: CameraIntrinsics, past: Sequence[np.ndarray]):
        xyz, joints = prepare_inputs(depth, intrinsics, past, self.config)

        dtype = next(self.network.parameters()).dtype

        return (
            torch.from_numpy(xyz)[None].to(self.device, dtype),
            torch.from_numpy(joints)[None].to(self.device, dtype),
        )

    @torch.no_grad()
    def forward(self, depth: DepthFrame, intrinsics: CameraIntrinsics,
                past: "PoseSequence | Sequence[np.ndarray]") -> NetworkOutput:
        """
        Raw heatmaps of a frame

        Keyword arguments:
        depth -- the depth frame
        intrinsics -- the camera model
        past -- the M past poses, a PoseSequence or joint arrays oldest first
        """
        if isinstance(past, PoseSequence):
            past = [pose.joints for pose in past.poses]

        xyz, joints = self._tensors(depth, intrinsics, past)

        current, forecast = self.network(xyz, joints)

        current = current[0].double().cpu().numpy()

        steps = split_forecast(forecast, self.config.future_count, self.config.num_joints)[0].double().cpu().numpy()

        return NetworkOutput(
            current=SPDHMaps.from_stacked(current, self.current_spec),
            future=[SPDHMaps.from_stacked(step, self.future_spec) for step in steps],
        )

    def predict(self, depth: DepthFrame, intrinsics: CameraIntrinsics, past,
                future_offsets: Optional[Sequence[float]] = None) -> Tuple[Pose3D, List[Pose3D]]:
        """
        Decoded present pose and T forecast poses of a frame. Forecast timestamps are the frame
        timestamp plus the matching future offset when offsets are given.

        Keyword arguments:
        depth -- the depth frame
        intrinsics -- the camera model
        past -- the M past poses
        future_offsets -- seconds ahead of each future step (default: None)
        """
        output = self.forward(depth, intrinsics, past)

        current = decode_maps(output.current, intrinsics, timestamp=depth.timestamp)

        offsets = list(future_offsets) if future_offsets is not None else [0.0] * len(output.future)

        forecasts = [
            decode_maps(maps, intrinsics, timestamp=depth.timestamp + offset)
            for maps, offset in zip(output.future, offsets)
        ]

        return current, forecasts

    @torch.no_grad()
    def estimate_only(self, depth: DepthFrame, intrinsics: CameraIntrinsics) -> Pose3D:
        """
        Present pose from the visual branch and estimation head alone, the motion features are
        replaced with zeros

        Keyword arguments:
        depth -- the depth frame
        intrinsics -- the camera model
        """
        zeros = np.zeros((self.config.past_count, self.config.num_joints, 3))

        xyz, joints = self._tensors(depth, intrinsics, zeros)

        visual = self.network.visual_encode(xyz)

        motion = visual.new_zeros((1, self.config.motion_out_channels) + tuple(visual.shape[-2:]))

        current = self.network.estimate_head(self.network.fuse(visual, motion))[0].double().cpu().numpy()

        return decode_maps(SPDHMaps.from_stacked(current, self.current_spec), intrinsics, timestamp=depth.timestamp)
