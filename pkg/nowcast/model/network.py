"""
Nowcasting Network

A visual branch over the normalized XYZ image and a motion branch over the M past poses produce
two feature maps at 1/4 input resolution. They are concatenated (visual first) and fed to an
estimation head emitting the present SPDH maps at full resolution and a light forecasting head
emitting T SPDH stacks at 1/4 resolution.
"""
from typing import Callable, Dict, Tuple

import numpy as np
import torch

from torch import nn
from torch.nn import functional as F

from nowcast.exceptions import ConfigError, InvalidArgumentError
from nowcast.geometry import XYZImage
from nowcast.model.config import FUSION_STRIDE, MOTION_GRID_STRIDE, ModelConfig


def normalize_xyz(image: XYZImage, config: ModelConfig) -> np.ndarray:
    """
    Channel-first float32 network input. x and y are divided by the scene half extent, z is
    mapped from [z_min, z_max] to [-1, 1], invalid pixels stay 0.

    Keyword arguments:
    image -- the XYZ image
    config -- provides the normalization constants
    """
    scale = np.array([config.xy_half_extent, config.xy_half_extent, 0.5 * (config.z_max - config.z_min)])

    shift = np.array([0.0, 0.0, 0.5 * (config.z_max + config.z_min)])

    normalized = (image.coords - shift) / scale

    normalized[~image.mask] = 0.0

    return np.ascontiguousarray(normalized.transpose(2, 0, 1), dtype=np.float32)


def normalize_joints(joints: np.ndarray, config: ModelConfig) -> np.ndarray:
    """
    Same affine normalization as normalize_xyz applied to joint coordinates of shape (..., 3)

    Keyword arguments:
    joints -- metric camera-frame coordinates
    config -- provides the normalization constants
    """
    scale = np.array([config.xy_half_extent, config.xy_half_extent, 0.5 * (config.z_max - config.z_min)])

    shift = np.array([0.0, 0.0, 0.5 * (config.z_max + config.z_min)])

    return ((np.asarray(joints, dtype=np.float64) - shift) / scale).astype(np.float32)


class ResidualBlock(nn.Module):
    """Two 3x3 convolutions with batch normalization and an identity or 1x1 projection skip"""
    def __init__(self, in_channels: int, out_channels: int, stride: int = 1):
        super().__init__()

        self.conv1 = nn.Conv2d(in_channels, out_channels, 3, stride=stride, padding=1, bias=False)

        self.bn1 = nn.BatchNorm2d(out_channels)

        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, padding=1, bias=False)

        self.bn2 = nn.BatchNorm2d(out_channels)

        self.skip = nn.Identity()

        if stride != 1 or in_channels != out_channels:
            self.skip = nn.Sequential(
                nn.Conv2d(in_channels, out_channels, 1, stride=stride, bias=False),
                nn.BatchNorm2d(out_channels),
            )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = F.relu(self.bn1(self.conv1(x)))

        out = self.bn2(self.conv2(out))

        return F.relu(out + self.skip(x))


class ResidualTransposedBlock(nn.Module):
    """x2 upsampling block: transposed convolution, batch norm, ReLU, 3x3 convolution, batch norm,
    with a stride-2 transposed 1x1-style skip"""
    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()

        self.up = nn.ConvTranspose2d(in_channels, out_channels, 4, stride=2, padding=1, bias=False)

        self.bn1 = nn.BatchNorm2d(out_channels)

        self.conv = nn.Conv2d(out_channels, out_channels, 3, padding=1, bias=False)

        self.bn2 = nn.BatchNorm2d(out_channels)

        self.skip = nn.Sequential(
            nn.ConvTranspose2d(in_channels, out_channels, 2, stride=2, bias=False),
            nn.BatchNorm2d(out_channels),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = F.relu(self.bn1(self.up(x)))

        out = self.bn2(self.conv(out))

        return F.relu(out + self.skip(x))


class DeskBackbone(nn.Module):
    """
    Small stride-4 visual encoder: a two-convolution stem to 1/4, four stages of two residual
    blocks (1/4, 1/8, 1/16, 1/16) and a high-resolution skip that merges the upsampled deep
    features back into the 1/4 stage
    """
    def __init__(self, in_channels: int, channels: int):
        super().__init__()

        width = max(channels // 2, 4)

        self.stem = nn.Sequential(
            nn.Conv2d(in_channels, width, 3, stride=2, padding=1, bias=False),
            nn.BatchNorm2d(width),
            nn.ReLU(inplace=True),
            nn.Conv2d(width, channels, 3, stride=2, padding=1, bias=False),
            nn.BatchNorm2d(channels),
            nn.ReLU(inplace=True),
        )

        deep = 2 * channels

        self.stage1 = nn.Sequential(ResidualBlock(channels, channels), ResidualBlock(channels, channels))

        self.stage2 = nn.Sequential(ResidualBlock(channels, deep, stride=2), ResidualBlock(deep, deep))

        self.stage3 = nn.Sequential(ResidualBlock(deep, deep, stride=2), ResidualBlock(deep, deep))

        self.stage4 = nn.Sequential(ResidualBlock(deep, deep), ResidualBlock(deep, deep))

        self.merge = nn.Sequential(
            nn.Conv2d(deep, channels, 1, bias=False),
            nn.BatchNorm2d(channels),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        high = self.stage1(self.stem(x))

        deep = self.stage4(self.stage3(self.stage2(high)))

        deep = F.interpolate(self.merge(deep), size=high.shape[-2:], mode="nearest")

        return F.relu(high + deep)


BACKBONES: Dict[str, Callable[[int, int], nn.Module]] = {
    "desk": DeskBackbone,
}


class MotionEncoder(nn.Module):
    """
    Pose embedding, GRU over time, projection of the last hidden state to a 1/16 grid and two
    residual transposed blocks up to 1/4
    """
    def __init__(self, config: ModelConfig):
        super().__init__()

        self.config = config

        self.grid = (config.input_height // MOTION_GRID_STRIDE, config.input_width // MOTION_GRID_STRIDE)

        self.embed = nn.Sequential(
            nn.Linear(config.num_joints * 3, config.motion_embed_dim),
            nn.ReLU(inplace=True),
        )

        self.gru = nn.GRU(config.motion_embed_dim, config.recurrent_hidden, batch_first=True)

        self.project = nn.Linear(config.recurrent_hidden, config.motion_channels * self.grid[0] * self.grid[1])

        self.upsample = nn.Sequential(
            ResidualTransposedBlock(config.motion_channels, config.motion_out_channels),
            ResidualTransposedBlock(config.motion_out_channels, config.motion_out_channels),
        )

    def forward(self, past: torch.Tensor) -> torch.Tensor:
        """
        Keyword arguments:
        past -- normalized past joints, shape (B, M, J, 3), oldest first
        """
        batch = past.shape[0]

        embedded = self.embed(past.reshape(batch, past.shape[1], -1))

        _, hidden = self.gru(embedded)

        grid = self.project(hidden[-1]).reshape(batch, self.config.motion_channels, *self.grid)

        return self.upsample(grid)


class NowcastNetwork(nn.Module):
    """
    The full two-branch network. forward returns the stacked present maps (B, 2J, H, W) and the
    forecast maps (B, T 2J, H/4, W/4); channel k 2J + c of the forecast belongs to future step k,
    uv maps for c < J and uz maps otherwise.
    """
    def __init__(self, config: ModelConfig):
        super().__init__()

        self.config = config

        if config.backbone not in BACKBONES:
            raise ConfigError(f"unknown backbone '{config.backbone}', expected one of {', '.join(BACKBONES)}")

        self.visual = BACKBONES[config.backbone](3, config.backbone_channels) if config.use_visual else None

        self.motion = MotionEncoder(config) if config.use_motion else None

        first, second = config.head_channels

        self.estimate_trunk = nn.Sequential(
            ResidualTransposedBlock(config.fused_channels, first),
            ResidualTransposedBlock(first, second),
        )

        self.estimate_uv = nn.Conv2d(second, config.num_joints, 1)

        self.estimate_uz = nn.Conv2d(second, config.num_joints, 1)

        self.forecast = nn.Sequential(
            nn.Conv2d(config.fused_channels, config.forecast_channels, 3, padding=1, bias=False),
            nn.BatchNorm2d(config.forecast_channels),
            nn.ReLU(inplace=True),
            nn.Conv2d(config.forecast_channels, config.future_count * 2 * config.num_joints, 3, padding=1),
        )

        initialize_weights(self)

    @property
    def fusion_shape(self) -> Tuple[int, int]:
        return (self.config.input_height // FUSION_STRIDE, self.config.input_width // FUSION_STRIDE)

    def visual_encode(self, xyz: torch.Tensor) -> torch.Tensor:
        """
        Keyword arguments:
        xyz -- normalized XYZ images, shape (B, 3, H, W)
        """
        expected = (3, self.config.input_height, self.config.input_width)

        if tuple(xyz.shape[1:]) != expected:
            raise InvalidArgumentError(f"visual input must have shape (B, {expected}), got {tuple(xyz.shape)}")

        if self.visual is None:
            return xyz.new_zeros((xyz.shape[0], self.config.backbone_channels) + self.fusion_shape)

        return self.visual(xyz)

    def motion_encode(self, past: torch.Tensor) -> torch.Tensor:
        """
        Keyword arguments:
        past -- normalized past joints, shape (B, M, J, 3)
        """
        expected = (self.config.past_count, self.config.num_joints, 3)

        if tuple(past.shape[1:]) != expected:
            raise InvalidArgumentError(f"past poses must have shape (B, {expected}), got {tuple(past.shape)}")

        if self.motion is None:
            return past.new_zeros((past.shape[0], self.config.motion_out_channels) + self.fusion_shape)

        return self.motion(past)

    def fuse(self, visual: torch.Tensor, motion: torch.Tensor) -> torch.Tensor:
        if visual.shape[0] != motion.shape[0] or visual.shape[-2:] != motion.shape[-2:]:
            raise InvalidArgumentError(
                f"cannot fuse visual {tuple(visual.shape)} with motion {tuple(motion.shape)} features"
            )

        return torch.cat([visual, motion], dim=1)

    def estimate_head(self, fused: torch.Tensor) -> torch.Tensor:
        trunk = self.estimate_trunk(fused)

        return torch.cat([self.estimate_uv(trunk), self.estimate_uz(trunk)], dim=1)

    def forecast_head(self, fused: torch.Tensor) -> torch.Tensor:
        return self.forecast(fused)

    def forward(self, xyz: torch.Tensor, past: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        fused = self.fuse(self.visual_encode(xyz), self.motion_encode(past))

        return self.estimate_head(fused), self.forecast_head(fused)


def split_forecast(forecast: torch.Tensor, future_count: int, num_joints: int) -> torch.Tensor:
    """
    Reshape forecast channels (B, T 2J, h, w) to (B, T, 2J, h, w)

    Keyword arguments:
    forecast -- the forecast head output
    future_count -- T
    num_joints -- J
    """
    if forecast.shape[1] != future_count * 2 * num_joints:
        raise InvalidArgumentError(f"expected {future_count * 2 * num_joints} forecast channels, got {forecast.shape[1]}")

    return forecast.reshape(forecast.shape[0], future_count, 2 * num_joints, *forecast.shape[2:])


def merge_forecast(steps: torch.Tensor) -> torch.Tensor:
    """Inverse of split_forecast"""
    return steps.reshape(steps.shape[0], steps.shape[1] * steps.shape[2], *steps.shape[3:])


def initialize_weights(module: nn.Module) -> None:
    """
    He initialization for convolutions and linear layers, orthogonal recurrent kernels, zero biases

    Keyword arguments:
    module -- the module tree to initialize
    """
    for layer in module.modules():
        if isinstance(layer, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
            nn.init.kaiming_normal_(layer.weight, nonlinearity="relu")

            if layer.bias is not None:
                nn.init.zeros_(layer.bias)

        elif isinstance(layer, nn.BatchNorm2d):
            nn.init.ones_(layer.weight)

            nn.init.zeros_(layer.bias)

        elif isinstance(layer, nn.GRU):
            for name, parameter in layer.named_parameters():
                if name.startswith("weight_hh"):
                    for gate in parameter.chunk(3, dim=0):
                        nn.init.orthogonal_(gate)

                elif name.startswith("weight_ih"):
                    nn.init.xavier_uniform_(parameter)

                else:
                    nn.init.zeros_(parameter)


def build_network(config: ModelConfig, seed: int = 0) -> NowcastNetwork:
    """
    Construct a freshly initialized network, deterministic in seed

    Keyword arguments:
    config -- the network configuration
    seed -- the initialization seed (default: 0)
    """
    torch.manual_seed(seed)

    return NowcastNetwork(config)
