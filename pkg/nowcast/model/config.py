"""
Network configuration
"""
from dataclasses import asdict, dataclass, fields
from typing import Dict, Tuple

from nowcast.exceptions import ConfigError, InvalidArgumentError
from nowcast.spdh import DEFAULT_PEAK_THRESHOLD, DEFAULT_SIGMA, DEFAULT_Z_MAX, DEFAULT_Z_MIN, HeatmapSpec


# the motion branch is shaped at 1/16 of the input before its two x2 upsampling blocks
MOTION_GRID_STRIDE = 16

FUSION_STRIDE = 4


@dataclass
class ModelConfig:
    """
    Shapes and widths of the nowcasting network. Estimation maps come out at full input
    resolution and forecast maps at 1/4, so est_head_stride and forecast_head_stride are
    fixed at 1 and 4.
    """
    input_height: int = 96
    input_width: int = 128
    backbone: str = "desk"
    backbone_channels: int = 64
    motion_embed_dim: int = 128
    recurrent_hidden: int = 256
    motion_channels: int = 16
    motion_out_channels: int = 32
    head_channels: Tuple[int, int] = (64, 32)
    forecast_channels: int = 32
    past_count: int = 10
    future_count: int = 4
    num_joints: int = 5
    est_head_stride: int = 1
    forecast_head_stride: int = 4
    sigma_uv: float = DEFAULT_SIGMA
    sigma_uz: float = DEFAULT_SIGMA
    z_min: float = DEFAULT_Z_MIN
    z_max: float = DEFAULT_Z_MAX
    peak_threshold: float = DEFAULT_PEAK_THRESHOLD
    xy_half_extent: float = 1.5
    use_visual: bool = True
    use_motion: bool = True

    def __post_init__(self):
        self.head_channels = tuple(self.head_channels)

        if self.input_height % MOTION_GRID_STRIDE or self.input_width % MOTION_GRID_STRIDE:
            raise ConfigError(
                f"input {self.input_height}x{self.input_width} must be divisible by {MOTION_GRID_STRIDE}"
            )

        if self.past_count < 1 or self.future_count < 1 or self.num_joints < 1:
            raise ConfigError("past_count, future_count and num_joints must be >= 1")

        if self.est_head_stride != 1 or self.forecast_head_stride != FUSION_STRIDE:
            raise ConfigError(f"head strides are fixed at 1 and {FUSION_STRIDE} by the head architecture")

        if len(self.head_channels) != 2:
            raise ConfigError("head_channels needs one width per estimation upsampling block")

        widths = (
            self.backbone_channels, self.motion_embed_dim, self.recurrent_hidden,
            self.motion_channels, self.motion_out_channels, self.forecast_channels,
        ) + self.head_channels

        if min(widths) < 1:
            raise ConfigError("channel widths must be positive")

        if not (self.use_visual or self.use_motion):
            raise ConfigError("at least one of use_visual and use_motion must be enabled")

        if not self.xy_half_extent > 0:
            raise ConfigError("xy_half_extent must be positive")

        try:
            self.current_spec()

        except InvalidArgumentError as err:
            raise ConfigError(f"invalid heatmap settings: {err}") from err

    @property
    def fused_channels(self) -> int:
        return self.backbone_channels + self.motion_out_channels

    def current_spec(self) -> HeatmapSpec:
        """Heatmap spec of the estimation head"""
        return self._spec(self.est_head_stride)

    def future_spec(self) -> HeatmapSpec:
        """Heatmap spec of the forecasting head"""
        return self._spec(self.forecast_head_stride)

    def _spec(self, stride: int) -> HeatmapSpec:
        return HeatmapSpec.for_input(
            self.input_height,
            self.input_width,
            stride,
            sigma_uv=self.sigma_uv,
            sigma_uz=self.sigma_uz,
            z_min=self.z_min,
            z_max=self.z_max,
            peak_threshold=self.peak_threshold,
        )

    def to_dict(self) -> Dict:
        values = asdict(self)

        values["head_channels"] = list(self.head_channels)

        return values

    @classmethod
    def from_dict(cls, values: Dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}

        unknown = set(values) - known

        if unknown:
            raise ConfigError(f"unknown model settings: {', '.join(sorted(unknown))}")

        return cls(**values)
