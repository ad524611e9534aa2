from nowcast.model.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from nowcast.model.config import ModelConfig
from nowcast.model.network import (
    BACKBONES,
    NowcastNetwork,
    build_network,
    merge_forecast,
    normalize_joints,
    normalize_xyz,
    split_forecast,
)
from nowcast.model.nowcaster import NetworkOutput, Nowcaster, prepare_inputs
