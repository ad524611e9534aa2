from nowcast.sim.dataset import (
    DEFAULT_FUTURE_OFFSETS,
    DEFAULT_PAST_COUNT,
    DEFAULT_PAST_RATE,
    DESK_INTRINSICS,
    DatasetConfig,
    DatasetReport,
    DatasetSample,
    PoseSequence,
    SimDataset,
    generate_dataset,
    load_samples,
    split_sequences,
    validate_dataset,
)
from nowcast.sim.dpt import read_dpt, write_dpt
from nowcast.sim.kinematics import ArmModel, default_arm_model, forward_kinematics
from nowcast.sim.render import SceneConfig, render_capsules, render_depth
from nowcast.sim.trajectory import TrajectorySpec, minimum_jerk, sample_trajectory
