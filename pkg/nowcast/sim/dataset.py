"""
Simulated Dataset

Generation, on-disk layout and sample streaming of the desk-scale arm dataset.

Layout:
    <root>/manifest.json
    <root>/seq_<k>/depth_<n>.dpt
    <root>/seq_<k>/poses.json
"""
import json
import logging
import math
import os
import re

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from nowcast.exceptions import DatasetIOError, DatasetParseError, InvalidArgumentError
from nowcast.geometry import CameraIntrinsics, DepthFrame, RigidTransform, points_in_frustum, rotation_about_axis
from nowcast.runtime import thread_limit
from nowcast.sim.dpt import read_dpt, write_dpt
from nowcast.sim.kinematics import UPRIGHT_ROTATION, ArmModel, default_arm_model, forward_kinematics
from nowcast.sim.render import SceneConfig, render_depth
from nowcast.sim.trajectory import TrajectorySpec, sample_trajectory
from nowcast.spdh import DEFAULT_Z_MAX, DEFAULT_Z_MIN, Pose3D


DATASET_FORMAT = "nowcast-armsim"

DATASET_VERSION = 1

MANIFEST_FILE = "manifest.json"

POSES_FILE = "poses.json"

_JSON_WHITESPACE = re.compile(r"[ \t\n\r]*")

DEFAULT_FPS = 30.0

DEFAULT_PAST_RATE = 10.0

DEFAULT_PAST_COUNT = 10

DEFAULT_FUTURE_OFFSETS = (0.5, 1.0, 1.5, 2.0)

DESK_INTRINSICS = CameraIntrinsics(fx=110.0, fy=110.0, cx=63.5, cy=47.5, width=128, height=96)

DEFAULT_JOINT_GROUPS = {
    "proximal": ["base", "shoulder", "elbow"],
    "distal": ["wrist", "tool"],
}

SPLITS = ("train", "val", "test", "all")


def sequence_dir_name(index: int) -> str:
    return f"seq_{index:03d}"


def depth_file_name(frame: int) -> str:
    return f"depth_{frame:06d}.dpt"


@dataclass
class PoseSequence:
    """
    Poses at uniform 1/rate spacing, oldest first
    """
    poses: List[Pose3D]
    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise InvalidArgumentError(f"sequence rate must be positive, got {self.rate}")

        if len({pose.num_joints for pose in self.poses}) > 1:
            raise InvalidArgumentError("all poses of a sequence must share the joint count")

        spacing = np.diff([pose.timestamp for pose in self.poses])

        if spacing.size and not np.allclose(spacing, 1.0 / self.rate, atol=1e-6):
            raise InvalidArgumentError(f"pose timestamps must be spaced by 1/{self.rate} s")

    def __len__(self) -> int:
        return len(self.poses)

    @property
    def num_joints(self) -> Optional[int]:
        return self.poses[0].num_joints if self.poses else None

    def as_array(self) -> np.ndarray:
        """Joint coordinates stacked to shape (M, J, 3)"""
        return np.stack([pose.joints for pose in self.poses])


@dataclass
class DatasetSample:
    """
    One training unit: the current depth frame, its pose, M past poses and T future poses
    """
    depth: DepthFrame
    intrinsics: CameraIntrinsics
    past_poses: PoseSequence
    current_pose: Pose3D
    future_poses: List[Pose3D]
    future_offsets: Tuple[float, ...] = DEFAULT_FUTURE_OFFSETS
    sequence: str = ""
    frame: int = 0


@dataclass
class DatasetConfig:
    """
    Generation settings of a simulated dataset
    """
    n_sequences: int = 10
    duration: float = 20.0
    fps: float = DEFAULT_FPS
    intrinsics: CameraIntrinsics = DESK_INTRINSICS
    intrinsics_jitter: float = 0.03
    base_translation: Tuple[float, float, float] = (0.0, 0.4, 2.4)
    base_jitter: Tuple[float, float, float] = (0.15, 0.05, 0.3)
    base_yaw_range: float = 0.6
    trajectory: TrajectorySpec = field(default_factory=TrajectorySpec)
    ground_plane: bool = True
    back_plane_depth: Optional[float] = None
    max_range: float = 5.0
    z_min: float = DEFAULT_Z_MIN
    z_max: float = DEFAULT_Z_MAX
    xy_half_extent: float = 1.5
    joint_groups: Dict[str, List[str]] = field(default_factory=lambda: dict(DEFAULT_JOINT_GROUPS))
    placement_attempts: int = 20
    min_in_frame: float = 0.98
    workers: Optional[int] = None

    def __post_init__(self):
        if self.n_sequences < 1:
            raise InvalidArgumentError(f"n_sequences must be >= 1, got {self.n_sequences}")

        if not (self.duration > 0 and self.fps > 0):
            raise InvalidArgumentError("duration and fps must be positive")

        if not 0 <= self.intrinsics_jitter < 0.5:
            raise InvalidArgumentError(f"intrinsics jitter must be in [0, 0.5), got {self.intrinsics_jitter}")

        if not 0 < self.z_min < self.z_max:
            raise InvalidArgumentError(f"depth range must satisfy 0 < z_min < z_max, got ({self.z_min}, {self.z_max})")

        if self.placement_attempts < 1:
            raise InvalidArgumentError("placement_attempts must be >= 1")

        if not self.xy_half_extent > 0:
            raise InvalidArgumentError("xy_half_extent must be positive")

    def to_dict(self) -> Dict:
        return {
            "n_sequences": self.n_sequences,
            "duration": self.duration,
            "fps": self.fps,
            "intrinsics": self.intrinsics.to_dict(),
            "intrinsics_jitter": self.intrinsics_jitter,
            "base_translation": list(self.base_translation),
            "base_jitter": list(self.base_jitter),
            "base_yaw_range": self.base_yaw_range,
            "trajectory": self.trajectory.to_dict(),
            "ground_plane": self.ground_plane,
            "back_plane_depth": self.back_plane_depth,
            "max_range": self.max_range,
            "z_min": self.z_min,
            "z_max": self.z_max,
            "xy_half_extent": self.xy_half_extent,
            "joint_groups": self.joint_groups,
            "placement_attempts": self.placement_attempts,
            "min_in_frame": self.min_in_frame,
        }

    @classmethod
    def from_dict(cls, values: Dict) -> "DatasetConfig":
        values = dict(values)

        if "intrinsics" in values:
            values["intrinsics"] = CameraIntrinsics.from_dict(values["intrinsics"])

        if "trajectory" in values:
            values["trajectory"] = TrajectorySpec.from_dict(values["trajectory"])

        for key in ("base_translation", "base_jitter"):
            if key in values:
                values[key] = tuple(values[key])

        return cls(**values)


def split_sequences(n_sequences: int) -> Dict[str, List[int]]:
    """
    Split sequence indices 80/20 into train and test by index, then hold out the last 10% of
    the training sequences for validation

    Keyword arguments:
    n_sequences -- number of sequences in the dataset
    """
    indices = list(range(n_sequences))

    n_test = max(1, round(0.2 * n_sequences)) if n_sequences >= 2 else 0

    train = indices[:n_sequences - n_test]

    n_val = max(1, round(0.1 * len(train))) if len(train) >= 2 else 0

    return {
        "train": train[:len(train) - n_val],
        "val": train[len(train) - n_val:],
        "test": indices[n_sequences - n_test:],
        "all": indices,
    }


def _sequence_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def _jitter_intrinsics(intrinsics: CameraIntrinsics, jitter: float, rng: np.random.Generator) -> CameraIntrinsics:
    scale = 1.0 + rng.uniform(-jitter, jitter, size=2)

    shift = rng.uniform(-2.0, 2.0, size=2) * (jitter > 0)

    return CameraIntrinsics(
        fx=float(intrinsics.fx * scale[0]),
        fy=float(intrinsics.fy * scale[1]),
        cx=float(np.clip(intrinsics.cx + shift[0], 0.0, intrinsics.width - 1)),
        cy=float(np.clip(intrinsics.cy + shift[1], 0.0, intrinsics.height - 1)),
        width=intrinsics.width,
        height=intrinsics.height,
    )


def _coverage(points: np.ndarray, intrinsics: CameraIntrinsics, z_min: float, z_max: float) -> np.ndarray:
    in_range = (points[:, 2] >= z_min) & (points[:, 2] < z_max)

    return points_in_frustum(points, intrinsics) & in_range


def _place_base(config: DatasetConfig, intrinsics: CameraIntrinsics, local_points: np.ndarray,
                rng: np.random.Generator) -> RigidTransform:
    # retry random placements until the whole trajectory stays in view
    best = None

    best_fraction = -1.0

    for attempt in range(config.placement_attempts):
        yaw = rng.uniform(-config.base_yaw_range, config.base_yaw_range)

        translation = np.asarray(config.base_translation) + rng.uniform(-1.0, 1.0, size=3) * np.asarray(config.base_jitter)

        placement = RigidTransform(
            rotation=rotation_about_axis((0.0, 1.0, 0.0), yaw) @ UPRIGHT_ROTATION,
            translation=translation,
        )

        fraction = float(np.mean(_coverage(placement.apply(local_points), intrinsics, config.z_min, config.z_max)))

        if fraction > best_fraction:
            best, best_fraction = placement, fraction

        if fraction >= config.min_in_frame:
            break

    if best_fraction < config.min_in_frame:
        logging.warning(f"best base placement keeps only {best_fraction:.1%} of joints in view")

    return best


def _generate_sequence(config: DatasetConfig, seed: int, index: int, out_dir: str) -> Dict:
    rng = _sequence_rng(seed, index)

    name = sequence_dir_name(index)

    sequence_dir = Path(out_dir) / name

    try:
        sequence_dir.mkdir(parents=True, exist_ok=True)

    except OSError as os_err:
        raise DatasetIOError(f"unable to create sequence directory: {os_err.strerror}", path=str(sequence_dir)) from os_err

    intrinsics = _jitter_intrinsics(config.intrinsics, config.intrinsics_jitter, rng)

    local_arm = default_arm_model(base_pose=RigidTransform.identity())

    angles = sample_trajectory(
        model=local_arm,
        spec=config.trajectory,
        duration=config.duration,
        rate=config.fps,
        seed=int(rng.integers(0, 2 ** 32)),
    )

    local_points = np.concatenate([forward_kinematics(local_arm, q).joints for q in angles])

    base_pose = _place_base(config, intrinsics, local_points, rng)

    arm = local_arm.with_base_pose(base_pose)

    scene = SceneConfig(
        ground_height=float(base_pose.translation[1]) if config.ground_plane else None,
        back_plane_depth=config.back_plane_depth,
        max_range=config.max_range,
    )

    records = []

    for frame, q in enumerate(angles):
        pose = forward_kinematics(arm, q, timestamp=frame / config.fps)

        pose.valid = _coverage(pose.joints, intrinsics, config.z_min, config.z_max)

        write_dpt(sequence_dir / depth_file_name(frame), render_depth(arm, pose, intrinsics, scene))

        records.append({"frame": frame, **pose.to_dict()})

    poses_path = sequence_dir / POSES_FILE

    try:
        poses_path.write_text(json.dumps(records, sort_keys=True))

    except OSError as os_err:
        raise DatasetIOError(f"unable to write poses: {os_err.strerror}", path=str(poses_path)) from os_err

    logging.debug(f"generated {name} with {len(records)} frames")

    return {
        "name": name,
        "n_frames": len(records),
        "intrinsics": intrinsics.to_dict(),
        "base_pose": base_pose.to_dict(),
    }


def generate_dataset(config: DatasetConfig, seed: int, out_dir: Union[str, Path]) -> Dict:
    """
    Render config.n_sequences sequences into out_dir and write the manifest. Output is a
    function of (config, seed) only, regeneration is byte-identical.

    Keyword arguments:
    config -- the generation settings
    seed -- the dataset seed
    out_dir -- destination directory, created when missing
    """
    out_dir = Path(out_dir)

    try:
        out_dir.mkdir(parents=True, exist_ok=True)

    except OSError as os_err:
        raise DatasetIOError(f"unable to create dataset directory: {os_err.strerror}", path=str(out_dir)) from os_err

    workers = config.workers or thread_limit(default=os.cpu_count() or 1)

    workers = max(1, min(workers, config.n_sequences))

    logging.info(f"generating {config.n_sequences} sequences of {config.duration} s into {out_dir} with {workers} workers")

    indices = list(range(config.n_sequences))

    if workers == 1:
        sequences = [_generate_sequence(config, seed, index, str(out_dir)) for index in indices]

    else:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            sequences = list(executor.map(
                _generate_sequence,
                [config] * len(indices),
                [seed] * len(indices),
                indices,
                [str(out_dir)] * len(indices),
            ))

    arm = default_arm_model(base_pose=RigidTransform.identity())

    manifest = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "seed": seed,
        "config": config.to_dict(),
        "intrinsics": config.intrinsics.to_dict(),
        "z_range": [config.z_min, config.z_max],
        "num_joints": arm.num_keypoints,
        "joint_names": list(arm.joint_names),
        "joint_groups": config.joint_groups,
        "rates": {"fps": config.fps, "past_rate": DEFAULT_PAST_RATE},
        "normalization": {
            "xy_half_extent": config.xy_half_extent,
            "z_min": config.z_min,
            "z_max": config.z_max,
        },
        "arm": arm.to_dict(),
        "splits": split_sequences(config.n_sequences),
        "sequences": sequences,
    }

    manifest_path = out_dir / MANIFEST_FILE

    try:
        manifest_path.write_text(json.dumps(manifest, sort_keys=True, indent=2))

    except OSError as os_err:
        raise DatasetIOError(f"unable to write manifest: {os_err.strerror}", path=str(manifest_path)) from os_err

    return manifest


def _read_text(path: Path) -> str:
    try:
        return path.read_text()

    except OSError as os_err:
        raise DatasetIOError(f"unable to read: {os_err.strerror}", path=str(path)) from os_err


def _byte_offset(text: str, position: int) -> int:
    return len(text[:position].encode())


def _read_json(path: Path):
    text = _read_text(path)

    try:
        return json.loads(text)

    except json.JSONDecodeError as json_err:
        raise DatasetParseError(json_err.msg, path=str(path), offset=_byte_offset(text, json_err.pos)) from json_err


def _read_records(path: Path) -> List[Tuple[int, object]]:
    """
    Elements of a top-level JSON array paired with the byte offset where each starts

    Keyword arguments:
    path -- the JSON file
    """
    text = _read_text(path)

    decoder = json.JSONDecoder()

    def fail(message: str, position: int):
        return DatasetParseError(message, path=str(path), offset=_byte_offset(text, position))

    position = _JSON_WHITESPACE.match(text, 0).end()

    if text[position:position + 1] != "[":
        raise fail("expected an array of pose records", position)

    position = _JSON_WHITESPACE.match(text, position + 1).end()

    records = []

    if text[position:position + 1] == "]":
        end = position + 1

    else:
        while True:
            try:
                record, end = decoder.raw_decode(text, position)

            except json.JSONDecodeError as json_err:
                raise fail(json_err.msg, json_err.pos) from json_err

            records.append((_byte_offset(text, position), record))

            position = _JSON_WHITESPACE.match(text, end).end()

            separator = text[position:position + 1]

            if separator == "]":
                end = position + 1

                break

            if separator != ",":
                raise fail("expected ',' or ']'", position)

            position = _JSON_WHITESPACE.match(text, position + 1).end()

    trailing = _JSON_WHITESPACE.match(text, end).end()

    if trailing != len(text):
        raise fail("extra data after the pose array", trailing)

    return records


class SimDataset:
    """
    Read access to a generated dataset directory
    """
    def __init__(self, dataset_dir: Union[str, Path]):
        """
        Load the dataset manifest

        Keyword arguments:
        dataset_dir -- the dataset root
        """
        self.dataset_dir = Path(dataset_dir)

        manifest_path = self.dataset_dir / MANIFEST_FILE

        if not manifest_path.exists():
            raise DatasetIOError("manifest not found", path=str(manifest_path))

        self.manifest = _read_json(manifest_path)

        if not isinstance(self.manifest, dict) or self.manifest.get("format") != DATASET_FORMAT:
            raise DatasetParseError(f"not a {DATASET_FORMAT} manifest", path=str(manifest_path))

        self._sequences = {entry["name"]: entry for entry in self.manifest["sequences"]}

        self._poses = {}

    @property
    def fps(self) -> float:
        return float(self.manifest["rates"]["fps"])

    @property
    def num_joints(self) -> int:
        return int(self.manifest["num_joints"])

    @property
    def joint_names(self) -> List[str]:
        return list(self.manifest["joint_names"])

    @property
    def joint_groups(self) -> Dict[str, List[str]]:
        return dict(self.manifest.get("joint_groups", {}))

    @property
    def normalization(self) -> Dict[str, float]:
        return dict(self.manifest["normalization"])

    @property
    def seed(self) -> int:
        return int(self.manifest["seed"])

    def sequence_names(self, split: str = "all") -> List[str]:
        """
        Names of the sequences in a split

        Keyword arguments:
        split -- one of train, val, test or all (default: all)
        """
        if split not in SPLITS:
            raise InvalidArgumentError(f"unknown split '{split}', expected one of {', '.join(SPLITS)}")

        names = [entry["name"] for entry in self.manifest["sequences"]]

        return [names[index] for index in self.manifest["splits"][split]]

    def intrinsics(self, sequence: str) -> CameraIntrinsics:
        return CameraIntrinsics.from_dict(self._entry(sequence)["intrinsics"])

    def num_frames(self, sequence: str) -> int:
        return int(self._entry(sequence)["n_frames"])

    def _entry(self, sequence: str) -> Dict:
        if sequence not in self._sequences:
            raise InvalidArgumentError(f"unknown sequence '{sequence}'")

        return self._sequences[sequence]

    def poses(self, sequence: str) -> List[Pose3D]:
        """
        Ground-truth poses of every frame of a sequence

        Keyword arguments:
        sequence -- the sequence name
        """
        if sequence not in self._poses:
            self._entry(sequence)

            self._poses[sequence] = _load_poses(self.dataset_dir / sequence / POSES_FILE, self.num_joints)

        return [pose.copy() for pose in self._poses[sequence]]

    def depth(self, sequence: str, frame: int) -> DepthFrame:
        """
        Depth frame of a sequence

        Keyword arguments:
        sequence -- the sequence name
        frame -- the frame index
        """
        return read_dpt(self.dataset_dir / sequence / depth_file_name(frame), timestamp=frame / self.fps)


def _load_poses(path: Path, num_joints: int) -> List[Pose3D]:
    records = _read_records(path)

    path = str(path)

    poses = []

    for position, (offset, record) in enumerate(records):
        try:
            if record["frame"] != position:
                raise DatasetParseError(f"record {position} holds frame {record['frame']}", path=path, offset=offset)

            pose = Pose3D.from_dict(record)

        except (KeyError, TypeError, ValueError) as err:
            raise DatasetParseError(f"malformed pose record {position}: {err}", path=path, offset=offset) from err

        if pose.num_joints != num_joints:
            raise DatasetParseError(f"record {position} has {pose.num_joints} joints, expected {num_joints}",
                                    path=path, offset=offset)

        poses.append(pose)

    return poses


def frames_per_step(fps: float, rate: float) -> int:
    """
    Integer frame stride that resamples an fps stream to rate

    Keyword arguments:
    fps -- stream rate in Hz
    rate -- target rate in Hz
    """
    if not rate > 0:
        raise InvalidArgumentError(f"rate must be positive, got {rate}")

    stride = fps / rate

    if not math.isclose(stride, round(stride)) or round(stride) < 1:
        raise InvalidArgumentError(f"{rate} Hz does not evenly divide the {fps} Hz stream")

    return int(round(stride))


def offsets_to_frames(offsets: Sequence[float], fps: float) -> List[int]:
    frames = []

    for offset in offsets:
        count = offset * fps

        if not offset > 0 or not math.isclose(count, round(count)):
            raise InvalidArgumentError(f"future offset {offset} s is not a positive whole number of frames at {fps} Hz")

        frames.append(int(round(count)))

    return frames


def load_samples(dataset_dir: Union[str, Path], split: str = "all", M: int = DEFAULT_PAST_COUNT,
                 past_rate: float = DEFAULT_PAST_RATE,
                 future_offsets: Sequence[float] = DEFAULT_FUTURE_OFFSETS) -> Iterator[DatasetSample]:
    """
    Stream sliding-window samples in sequence then frame order. Past poses sit at frames
    i - s m for m = M..1 with s = fps / past_rate; frames without full history or future are
    skipped.

    Keyword arguments:
    dataset_dir -- the dataset root
    split -- one of train, val, test or all (default: all)
    M -- number of past poses (default: 10)
    past_rate -- rate of the past poses in Hz (default: 10)
    future_offsets -- future horizons in seconds (default: 0.5, 1.0, 1.5, 2.0)
    """
    if M < 0:
        raise InvalidArgumentError(f"M must be >= 0, got {M}")

    dataset = SimDataset(dataset_dir)

    stride = frames_per_step(dataset.fps, past_rate)

    future_frames = offsets_to_frames(future_offsets, dataset.fps)

    history = stride * M

    horizon = max(future_frames, default=0)

    for sequence in dataset.sequence_names(split):
        poses = dataset.poses(sequence)

        intrinsics = dataset.intrinsics(sequence)

        if len(poses) <= history + horizon:
            logging.warning(f"{sequence} has {len(poses)} frames, too short for {history} past and {horizon} future frames")

            continue

        for frame in range(history, len(poses) - horizon):
            yield DatasetSample(
                depth=dataset.depth(sequence, frame),
                intrinsics=intrinsics,
                past_poses=PoseSequence(
                    poses=[poses[frame - stride * step] for step in range(M, 0, -1)],
                    rate=past_rate,
                ),
                current_pose=poses[frame],
                future_poses=[poses[frame + offset] for offset in future_frames],
                future_offsets=tuple(future_offsets),
                sequence=sequence,
                frame=frame,
            )


@dataclass
class DatasetReport:
    """Summary of a dataset validation pass"""
    n_sequences: int
    n_frames: int
    in_frame_fraction: float
    valid_fraction: float

    def to_dict(self) -> Dict:
        return {
            "n_sequences": self.n_sequences,
            "n_frames": self.n_frames,
            "in_frame_fraction": self.in_frame_fraction,
            "valid_fraction": self.valid_fraction,
        }


def validate_dataset(dataset_dir: Union[str, Path]) -> DatasetReport:
    """
    Parse every file of a dataset and measure how many joints project inside the image

    Keyword arguments:
    dataset_dir -- the dataset root
    """
    dataset = SimDataset(dataset_dir)

    inside = 0

    valid = 0

    total = 0

    frames = 0

    for sequence in dataset.sequence_names("all"):
        poses = dataset.poses(sequence)

        if len(poses) != dataset.num_frames(sequence):
            raise DatasetParseError(
                f"{len(poses)} poses for {dataset.num_frames(sequence)} frames",
                path=str(dataset.dataset_dir / sequence / POSES_FILE),
            )

        intrinsics = dataset.intrinsics(sequence)

        for frame, pose in enumerate(poses):
            depth = dataset.depth(sequence, frame)

            if depth.shape != intrinsics.shape:
                raise DatasetParseError(
                    f"frame shape {depth.shape} does not match intrinsics {intrinsics.shape}",
                    path=str(dataset.dataset_dir / sequence / depth_file_name(frame)),
                )

            inside += int(np.sum(points_in_frustum(pose.joints, intrinsics)))

            valid += int(np.sum(pose.valid))

            total += pose.num_joints

        frames += len(poses)

    total = max(total, 1)

    return DatasetReport(
        n_sequences=len(dataset.sequence_names("all")),
        n_frames=frames,
        in_frame_fraction=inside / total,
        valid_fraction=valid / total,
    )
