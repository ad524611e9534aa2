"""
Evaluation protocols

gt_past feeds the true past poses of every window; autoregressive streams each sequence through
the rollout and feeds the predictor its own estimates. Both score the same set of frames: those
with full history and future.
"""
import logging

from pathlib import Path
from typing import Sequence, Tuple, Union

from nowcast.exceptions import ConfigError, InvalidArgumentError
from nowcast.metrics.metrics import DEFAULT_THRESHOLDS_CM
from nowcast.metrics.report import PRESENT, HorizonResults, MetricsReport, horizon_report
from nowcast.model.checkpoint import Checkpoint, load_checkpoint
from nowcast.model.nowcaster import Nowcaster
from nowcast.sim.dataset import (
    DEFAULT_FUTURE_OFFSETS,
    DEFAULT_PAST_RATE,
    SimDataset,
    frames_per_step,
    load_samples,
    offsets_to_frames,
)
from nowcast.training.rollout import Predictor, new_state, rollout


EVALUATION_MODES = ("gt_past", "autoregressive")


class NetworkPredictor:
    """Predictor adapter over a Nowcaster"""
    def __init__(self, nowcaster: Nowcaster, future_offsets: Sequence[float] = DEFAULT_FUTURE_OFFSETS):
        self.nowcaster = nowcaster

        self.future_offsets = tuple(future_offsets)

    def predict(self, depth, intrinsics, past):
        return self.nowcaster.predict(depth, intrinsics, past, future_offsets=self.future_offsets)


def _gt_past_results(predictor: Predictor, dataset_dir: Path, split: str, past_count: int, past_rate: float,
                     future_offsets: Sequence[float]) -> HorizonResults:
    results = HorizonResults()

    for sample in load_samples(dataset_dir, split, past_count, past_rate, future_offsets):
        current, forecasts = predictor.predict(sample.depth, sample.intrinsics, sample.past_poses)

        results.add(PRESENT, current, sample.current_pose)

        for offset, forecast, truth in zip(future_offsets, forecasts, sample.future_poses):
            results.add(float(offset), forecast, truth)

    return results


def _autoregressive_results(predictor: Predictor, dataset_dir: Path, split: str, past_count: int, past_rate: float,
                            future_offsets: Sequence[float]) -> HorizonResults:
    dataset = SimDataset(dataset_dir)

    history = frames_per_step(dataset.fps, past_rate) * past_count

    future_frames = offsets_to_frames(future_offsets, dataset.fps)

    horizon = max(future_frames, default=0)

    results = HorizonResults()

    for sequence in dataset.sequence_names(split):
        poses = dataset.poses(sequence)

        frames = (dataset.depth(sequence, frame) for frame in range(len(poses) - horizon))

        state = new_state(past_count, dataset.fps, past_rate)

        for step in rollout(predictor, frames, dataset.intrinsics(sequence), state, dataset.num_joints):
            if step.frame < history:
                continue

            results.add(PRESENT, step.current, poses[step.frame])

            for offset, ahead, forecast in zip(future_offsets, future_frames, step.forecasts):
                results.add(float(offset), forecast, poses[step.frame + ahead])

    return results


def evaluate_predictor(predictor: Predictor, dataset_dir: Union[str, Path], mode: str, split: str = "test",
                       past_count: int = 10, past_rate: float = DEFAULT_PAST_RATE,
                       future_offsets: Sequence[float] = DEFAULT_FUTURE_OFFSETS,
                       thresholds: Sequence[float] = DEFAULT_THRESHOLDS_CM) -> MetricsReport:
    """
    Score any predictor on a dataset split

    Keyword arguments:
    predictor -- object with predict(depth, intrinsics, past) -> (present, forecasts)
    dataset_dir -- the dataset root
    mode -- gt_past or autoregressive
    split -- dataset split (default: test)
    past_count -- M (default: 10)
    past_rate -- past pose rate in Hz (default: 10)
    future_offsets -- forecast horizons in seconds (default: 0.5, 1.0, 1.5, 2.0)
    thresholds -- mAP thresholds in centimeters (default: 2, 4, 6, 8, 10)
    """
    if mode not in EVALUATION_MODES:
        raise InvalidArgumentError(f"unknown evaluation mode '{mode}', expected one of {', '.join(EVALUATION_MODES)}")

    dataset_dir = Path(dataset_dir)

    collect = _gt_past_results if mode == "gt_past" else _autoregressive_results

    results = collect(predictor, dataset_dir, split, past_count, past_rate, future_offsets)

    dataset = SimDataset(dataset_dir)

    report = horizon_report(
        results,
        joint_names=dataset.joint_names,
        joint_groups=dataset.joint_groups,
        thresholds=thresholds,
        mode=mode,
    )

    report.metadata = {"split": split, "dataset_seed": dataset.seed, "past_rate": past_rate}

    logging.info(f"{mode} on {split}: ADD {report.add_mean:.2f} cm over {report.n_frames} frames")

    return report


def check_compatibility(checkpoint: Checkpoint, dataset: SimDataset) -> None:
    """
    Raise ConfigError when a checkpoint cannot run on a dataset

    Keyword arguments:
    checkpoint -- the decoded checkpoint
    dataset -- the dataset
    """
    config = checkpoint.config

    if config.num_joints != dataset.num_joints:
        raise ConfigError(f"checkpoint predicts {config.num_joints} joints, dataset has {dataset.num_joints}")

    for sequence in dataset.sequence_names("all"):
        shape = dataset.intrinsics(sequence).shape

        if shape != (config.input_height, config.input_width):
            raise ConfigError(
                f"{sequence} frames are {shape[0]}x{shape[1]}, checkpoint expects {config.input_height}x{config.input_width}"
            )


def evaluate(checkpoint: Union[str, Path, Checkpoint], dataset_dir: Union[str, Path], mode: str,
             split: str = "test", past_rate: float = DEFAULT_PAST_RATE,
             future_offsets: Sequence[float] = None, device: str = "cpu") -> MetricsReport:
    """
    Evaluate a trained checkpoint

    Keyword arguments:
    checkpoint -- checkpoint path or decoded checkpoint
    dataset_dir -- the dataset root
    mode -- gt_past or autoregressive
    split -- dataset split (default: test)
    past_rate -- past pose rate in Hz (default: 10)
    future_offsets -- forecast horizons, default from the checkpoint metadata
    device -- torch device (default: cpu)
    """
    if not isinstance(checkpoint, Checkpoint):
        checkpoint = load_checkpoint(checkpoint)

    check_compatibility(checkpoint, SimDataset(dataset_dir))

    offsets = resolve_offsets(checkpoint, future_offsets)

    predictor = NetworkPredictor(Nowcaster(checkpoint.build_network(), device=device), offsets)

    return evaluate_predictor(
        predictor,
        dataset_dir,
        mode,
        split=split,
        past_count=checkpoint.config.past_count,
        past_rate=checkpoint.metadata.get("past_rate", past_rate),
        future_offsets=offsets,
    )


def resolve_offsets(checkpoint: Checkpoint, future_offsets: Sequence[float] = None) -> Tuple[float, ...]:
    """
    Forecast horizons of a checkpoint, T of them

    Keyword arguments:
    checkpoint -- the decoded checkpoint
    future_offsets -- explicit horizons overriding the stored ones (default: None)
    """
    offsets = future_offsets or checkpoint.metadata.get("future_offsets") or DEFAULT_FUTURE_OFFSETS

    offsets = tuple(float(offset) for offset in offsets)

    if len(offsets) != checkpoint.config.future_count:
        raise ConfigError(f"{len(offsets)} future offsets for a checkpoint forecasting {checkpoint.config.future_count} steps")

    return offsets
