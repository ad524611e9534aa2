"""
Teacher-forced training of the nowcasting network

Past poses are ground truth perturbed by Gaussian jitter; every sample draws its augmentation
and jitter from a generator derived from (seed, epoch, sample index), and batches are drawn by a
seeded shuffle, so a run is reproducible from its seed.
"""
import json
import logging
import math
import time

from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch

from torch.utils.data import DataLoader, Dataset

from nowcast.augment import AugmentParams, augment_sample, sample_rng
from nowcast.exceptions import (
    AugmentationRejected,
    ConfigError,
    EmptyEvaluationError,
    InvalidArgumentError,
    NonFiniteLossError,
    OutOfRangeError,
)
from nowcast.model.checkpoint import save_checkpoint
from nowcast.model.config import ModelConfig
from nowcast.model.network import NowcastNetwork, build_network
from nowcast.model.nowcaster import Nowcaster, prepare_inputs
from nowcast.runtime import thread_limit
from nowcast.sim.dataset import (
    DEFAULT_FUTURE_OFFSETS,
    DEFAULT_PAST_RATE,
    DatasetSample,
    SimDataset,
    load_samples,
)
from nowcast.spdh import HeatmapSpec, Pose3D, SPDHMaps, encode_pose
from nowcast.training.evaluation import NetworkPredictor, evaluate_predictor
from nowcast.training.losses import loss_rpe, loss_rpf, total_loss


METRICS_LOG = "metrics.ndjson"

FINAL_CHECKPOINT = "final.nwck"

BEST_CHECKPOINT = "best.nwck"

AUGMENT_ATTEMPTS = 5

CM_TO_METERS = 0.01


@dataclass
class TrainConfig:
    """
    Optimization settings. The learning rate is multiplied by lr_decay_factor after epochs
    ceil(f E) for every fraction f of lr_milestones.
    """
    epochs: int = 30
    learning_rate: float = 1e-3
    lr_decay_factor: float = 0.1
    lr_milestones: Tuple[float, ...] = (0.5, 0.75)
    batch_size: int = 16
    seed: int = 0
    teacher_forcing_jitter_cm: float = 1.0
    loss_weights: Tuple[float, float] = (1.0, 1.0)
    max_steps: Optional[int] = None
    max_samples: Optional[int] = None
    augment: bool = True
    past_rate: float = DEFAULT_PAST_RATE
    future_offsets: Tuple[float, ...] = DEFAULT_FUTURE_OFFSETS
    device: str = "cpu"
    deterministic: bool = True
    validate: bool = True

    def __post_init__(self):
        self.lr_milestones = tuple(self.lr_milestones)

        self.loss_weights = tuple(self.loss_weights)

        self.future_offsets = tuple(self.future_offsets)

        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidArgumentError("epochs and batch_size must be >= 1")

        if not self.learning_rate > 0:
            raise InvalidArgumentError(f"learning rate must be positive, got {self.learning_rate}")

        if not 0 < self.lr_decay_factor <= 1:
            raise InvalidArgumentError(f"lr decay factor must be in (0, 1], got {self.lr_decay_factor}")

        if any(not 0 < fraction <= 1 for fraction in self.lr_milestones):
            raise InvalidArgumentError("lr milestones are fractions of training in (0, 1]")

        if self.teacher_forcing_jitter_cm < 0:
            raise InvalidArgumentError("teacher forcing jitter must be >= 0")

        if len(self.loss_weights) != 2 or min(self.loss_weights) < 0 or not any(self.loss_weights):
            raise InvalidArgumentError(f"loss weights must be two non-negative values, not both 0, got {self.loss_weights}")

        for limit in (self.max_steps, self.max_samples):
            if limit is not None and limit < 1:
                raise InvalidArgumentError("max_steps and max_samples must be >= 1 when set")

    @property
    def forecasting(self) -> bool:
        return self.loss_weights[1] > 0

    def milestones(self, epochs: Optional[int] = None) -> List[int]:
        """
        Epoch indices at which the learning rate decays

        Keyword arguments:
        epochs -- schedule length (default: self.epochs)
        """
        epochs = epochs or self.epochs

        return [math.ceil(fraction * epochs) for fraction in self.lr_milestones]

    def to_dict(self) -> Dict:
        values = asdict(self)

        for name in ("lr_milestones", "loss_weights", "future_offsets"):
            values[name] = list(values[name])

        return values

    @classmethod
    def from_dict(cls, values: Dict) -> "TrainConfig":
        known = {name for name in cls.__dataclass_fields__}

        unknown = set(values) - known

        if unknown:
            raise ConfigError(f"unknown train settings: {', '.join(sorted(unknown))}")

        return cls(**values)


def learning_rate_at(epoch: int, config: TrainConfig, epochs: Optional[int] = None) -> float:
    """
    Scheduled learning rate of a 0-based epoch

    Keyword arguments:
    epoch -- the epoch index
    config -- the training settings
    epochs -- schedule length (default: config.epochs)
    """
    passed = sum(1 for milestone in config.milestones(epochs) if epoch >= milestone)

    return config.learning_rate * config.lr_decay_factor ** passed


def encode_targets(pose: Pose3D, intrinsics, spec: HeatmapSpec) -> SPDHMaps:
    """
    Encode a pose, dropping joints the codec cannot represent (they get all-zero maps)

    Keyword arguments:
    pose -- the target pose
    intrinsics -- the camera model
    spec -- heatmap spec of the head being supervised
    """
    pose = pose.copy()

    while True:
        try:
            return encode_pose(pose, intrinsics, spec)

        except OutOfRangeError as err:
            if err.joint_index is None:
                raise

            pose.valid[err.joint_index] = False


class WindowDataset(Dataset):
    """
    Training windows turned into network inputs and heatmap targets. Call set_epoch before
    each epoch so augmentation and jitter change between epochs.
    """
    def __init__(self, samples: Sequence[DatasetSample], model_config: ModelConfig, seed: int,
                 augment_params: Optional[AugmentParams] = None, jitter_cm: float = 0.0):
        """
        Keyword arguments:
        samples -- the training windows
        model_config -- the network configuration
        seed -- the training seed
        augment_params -- augmentation ranges, None disables augmentation (default: None)
        jitter_cm -- standard deviation of the past pose jitter (default: 0)
        """
        self.samples = list(samples)

        self.model_config = model_config

        self.seed = seed

        self.augment_params = augment_params

        self.jitter = jitter_cm * CM_TO_METERS

        self.epoch = 0

        self.current_spec = model_config.current_spec()

        self.future_spec = model_config.future_spec()

    def set_epoch(self, epoch: int) -> None:
        self.epoch = epoch

    def __len__(self) -> int:
        return len(self.samples)

    def _augment(self, sample: DatasetSample, rng: np.random.Generator) -> DatasetSample:
        depth_range = (self.model_config.z_min, self.model_config.z_max)

        for _ in range(AUGMENT_ATTEMPTS):
            try:
                return augment_sample(sample, self.augment_params, rng, depth_range=depth_range)

            except AugmentationRejected as rejected:
                logging.debug(f"{sample.sequence} frame {sample.frame}: {rejected}")

        return sample

    def __getitem__(self, index: int) -> Tuple[torch.Tensor, ...]:
        sample = self.samples[index]

        rng = sample_rng(self.seed, self.epoch, index)

        if self.augment_params is not None:
            sample = self._augment(sample, rng)

        past = sample.past_poses.as_array()

        if self.jitter > 0:
            past = past + rng.normal(0.0, self.jitter, size=past.shape)

        xyz, joints = prepare_inputs(sample.depth, sample.intrinsics, past, self.model_config)

        current = encode_targets(sample.current_pose, sample.intrinsics, self.current_spec).stacked()

        future = np.concatenate([
            encode_targets(pose, sample.intrinsics, self.future_spec).stacked() for pose in sample.future_poses
        ])

        return (
            torch.from_numpy(xyz),
            torch.from_numpy(joints),
            torch.from_numpy(current.astype(np.float32)),
            torch.from_numpy(future.astype(np.float32)),
        )


@dataclass
class TrainResult:
    """Outcome of a training run"""
    network: NowcastNetwork
    final_path: Path
    best_path: Path
    best_epoch: int
    history: List[Dict] = field(default_factory=list)


def batch_losses(network: NowcastNetwork, batch: Sequence[torch.Tensor], config: TrainConfig,
                 device: str) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """
    (total, rpe, rpf) of one batch. The forecasting loss is a constant 0 when its weight is 0.

    Keyword arguments:
    network -- the network
    batch -- (xyz, past, current targets, future targets)
    config -- the training settings
    device -- torch device
    """
    dtype = next(network.parameters()).dtype

    xyz, past, current_target, future_target = (tensor.to(device, dtype) for tensor in batch)

    current, forecast = network(xyz, past)

    rpe = loss_rpe(current, current_target)

    if config.forecasting:
        rpf = loss_rpf(forecast, future_target, future_count=network.config.future_count)

    else:
        rpf = torch.zeros((), dtype=dtype, device=device)

    return total_loss(rpe, rpf, config.loss_weights), rpe, rpf


def check_dataset(model_config: ModelConfig, train_config: TrainConfig, dataset: SimDataset) -> ModelConfig:
    """
    Validate a dataset against the settings and adopt its normalization constants

    Keyword arguments:
    model_config -- the network configuration
    train_config -- the training settings
    dataset -- the dataset
    """
    if model_config.num_joints != dataset.num_joints:
        raise ConfigError(f"model predicts {model_config.num_joints} joints, dataset has {dataset.num_joints}")

    if model_config.future_count != len(train_config.future_offsets):
        raise ConfigError(
            f"model forecasts {model_config.future_count} steps, {len(train_config.future_offsets)} offsets configured"
        )

    for sequence in dataset.sequence_names("all"):
        shape = dataset.intrinsics(sequence).shape

        if shape != (model_config.input_height, model_config.input_width):
            raise ConfigError(
                f"{sequence} frames are {shape[0]}x{shape[1]}, "
                f"model expects {model_config.input_height}x{model_config.input_width}"
            )

    normalization = dataset.normalization

    adopted = replace(
        model_config,
        xy_half_extent=float(normalization["xy_half_extent"]),
        z_min=float(normalization["z_min"]),
        z_max=float(normalization["z_max"]),
    )

    if adopted != model_config:
        logging.info(f"using dataset normalization {normalization}")

    return adopted


def _load_windows(dataset_dir: Path, split: str, model_config: ModelConfig, config: TrainConfig) -> List[DatasetSample]:
    samples = []

    for sample in load_samples(dataset_dir, split, model_config.past_count, config.past_rate, config.future_offsets):
        samples.append(sample)

        if config.max_samples and len(samples) >= config.max_samples:
            break

    return samples


def _validation_losses(network: NowcastNetwork, loader: DataLoader, config: TrainConfig) -> Tuple[float, float]:
    """Mean (rpe, rpf) over the validation windows, no gradients"""
    network.eval()

    totals = np.zeros(2)

    batches = 0

    with torch.no_grad():
        for batch in loader:
            _, rpe, rpf = batch_losses(network, batch, config, config.device)

            totals += (rpe.item(), rpf.item())

            batches += 1

    val_rpe, val_rpf = totals / max(batches, 1)

    return float(val_rpe), float(val_rpf)


def _validation_add(network: NowcastNetwork, dataset_dir: Path, config: TrainConfig) -> Optional[float]:
    predictor = NetworkPredictor(Nowcaster(network, device=config.device), config.future_offsets)

    try:
        report = evaluate_predictor(
            predictor,
            dataset_dir,
            "gt_past",
            split="val",
            past_count=network.config.past_count,
            past_rate=config.past_rate,
            future_offsets=config.future_offsets,
        )

    except EmptyEvaluationError:
        return None

    return report.add_mean


def train(model_config: ModelConfig, train_config: TrainConfig, dataset_dir: Union[str, Path],
          out_dir: Union[str, Path], augment_params: Optional[AugmentParams] = None) -> TrainResult:
    """
    Train a network and write its checkpoints and metrics log

    The best checkpoint is chosen by validation ADD, or by training loss when the dataset has no
    validation sequences.

    Keyword arguments:
    model_config -- the network configuration
    train_config -- the training settings
    dataset_dir -- the dataset root
    out_dir -- destination of final.nwck, best.nwck and metrics.ndjson
    augment_params -- augmentation ranges (default: AugmentParams())
    """
    dataset_dir = Path(dataset_dir)

    out_dir = Path(out_dir)

    dataset = SimDataset(dataset_dir)

    model_config = check_dataset(model_config, train_config, dataset)

    samples = _load_windows(dataset_dir, "train", model_config, train_config)

    if not samples:
        raise ConfigError(f"no training windows in {dataset_dir}, sequences are too short or the train split is empty")

    if train_config.deterministic:
        torch.use_deterministic_algorithms(True, warn_only=True)

    threads = thread_limit()

    if threads:
        torch.set_num_threads(threads)

    device = train_config.device

    network = build_network(model_config, seed=train_config.seed).to(device)

    augment_params = (augment_params or AugmentParams()) if train_config.augment else None

    windows = WindowDataset(
        samples,
        model_config,
        seed=train_config.seed,
        augment_params=augment_params,
        jitter_cm=train_config.teacher_forcing_jitter_cm,
    )

    generator = torch.Generator()

    generator.manual_seed(train_config.seed)

    loader = DataLoader(windows, batch_size=train_config.batch_size, shuffle=True, generator=generator, num_workers=0)

    val_loader = None

    if train_config.validate:
        val_samples = _load_windows(dataset_dir, "val", model_config, train_config)

        if val_samples:
            val_windows = WindowDataset(val_samples, model_config, seed=train_config.seed)

            val_loader = DataLoader(val_windows, batch_size=train_config.batch_size, shuffle=False, num_workers=0)

    steps_per_epoch = len(loader)

    epochs = train_config.epochs

    if train_config.max_steps:
        epochs = math.ceil(train_config.max_steps / steps_per_epoch)

    optimizer = torch.optim.Adam(network.parameters(), lr=train_config.learning_rate)

    scheduler = torch.optim.lr_scheduler.MultiStepLR(
        optimizer,
        milestones=train_config.milestones(epochs),
        gamma=train_config.lr_decay_factor,
    )

    metadata = {
        "train": train_config.to_dict(),
        "dataset": {"path": str(dataset_dir), "seed": dataset.seed, "config": dataset.manifest.get("config", {})},
        "past_rate": train_config.past_rate,
        "future_offsets": list(train_config.future_offsets),
    }

    out_dir.mkdir(parents=True, exist_ok=True)

    final_path = out_dir / FINAL_CHECKPOINT

    best_path = out_dir / BEST_CHECKPOINT

    history = []

    best_score = math.inf

    best_epoch = 0

    step = 0

    started = time.monotonic()

    logging.info(f"training on {len(samples)} windows, {epochs} epochs of {steps_per_epoch} steps")

    with open(out_dir / METRICS_LOG, "w") as metrics_log:
        def record(entry: Dict) -> None:
            history.append(entry)

            metrics_log.write(json.dumps(entry, sort_keys=True) + "\n")

            metrics_log.flush()

        for epoch in range(epochs):
            windows.set_epoch(epoch)

            network.train()

            lr = optimizer.param_groups[0]["lr"]

            totals = np.zeros(2)

            batches = 0

            for batch_index, batch in enumerate(loader):
                if train_config.max_steps and step >= train_config.max_steps:
                    break

                loss, rpe, rpf = batch_losses(network, batch, train_config, device)

                if not torch.isfinite(loss):
                    raise NonFiniteLossError(epoch, batch_index, {"loss_rpe": rpe.item(), "loss_rpf": rpf.item()})

                optimizer.zero_grad()

                loss.backward()

                optimizer.step()

                totals += (rpe.item(), rpf.item())

                batches += 1

                step += 1

            scheduler.step()

            train_rpe, train_rpf = totals / max(batches, 1)

            record({
                "epoch": epoch,
                "split": "train",
                "loss_rpe": train_rpe,
                "loss_rpf": train_rpf,
                "lr": lr,
                "wall_s": time.monotonic() - started,
            })

            score = train_rpe + train_rpf

            if val_loader is not None:
                val_rpe, val_rpf = _validation_losses(network, val_loader, train_config)

                entry = {
                    "epoch": epoch,
                    "split": "val",
                    "loss_rpe": val_rpe,
                    "loss_rpf": val_rpf,
                    "lr": lr,
                }

                # best checkpoint follows validation ADD when any joint decodes
                val_add = _validation_add(network, dataset_dir, train_config)

                if val_add is not None:
                    score = val_add

                    entry["add_cm"] = val_add

                entry["wall_s"] = time.monotonic() - started

                record(entry)

            logging.info(f"epoch {epoch + 1}/{epochs}: loss_rpe {train_rpe:.6f} loss_rpf {train_rpf:.6f} lr {lr:g}")

            if score < best_score:
                best_score = score

                best_epoch = epoch

                save_checkpoint(best_path, network, train_config.seed, dict(metadata, epoch=epoch, score=score))

    network.eval()

    save_checkpoint(final_path, network, train_config.seed, dict(metadata, epoch=epochs - 1))

    return TrainResult(
        network=network,
        final_path=final_path,
        best_path=best_path,
        best_epoch=best_epoch,
        history=history,
    )
