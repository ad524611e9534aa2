"""
Losses, learning-rate schedule, training windows, autoregressive rollout, both evaluation
protocols, the linear baseline and the forecasting ablation.
"""
import itertools
import json
import math
import os

from pathlib import Path

import numpy as np
import pytest
import torch

from nowcast.augment import AugmentParams
from nowcast.exceptions import ConfigError, InvalidArgumentError, NonFiniteLossError
from nowcast.geometry import DepthFrame
from nowcast.model.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from nowcast.model.network import build_network
from nowcast.sim.dataset import DatasetSample, PoseSequence, SimDataset, load_samples
from nowcast.spdh import Pose3D, codec_error_bound, decode_maps
from nowcast.training import trainer
from nowcast.training.ablation import SUMMARY_FILE, run_ablation
from nowcast.training.baseline import BaselinePredictor, LinearForecaster
from nowcast.training.evaluation import evaluate, evaluate_predictor, resolve_offsets
from nowcast.training.losses import loss_rpe, loss_rpf, total_loss
from nowcast.training.rollout import RolloutState, new_state, rollout
from nowcast.training.trainer import (
    BEST_CHECKPOINT,
    FINAL_CHECKPOINT,
    METRICS_LOG,
    TrainConfig,
    WindowDataset,
    batch_losses,
    check_dataset,
    encode_targets,
    learning_rate_at,
    train,
)

from conftest import TINY_INTRINSICS, TINY_OFFSETS, tiny_model_config


PAST_COUNT = 3

# decoded joints are always flagged valid, so an untrained network still yields metrics
ALWAYS_VALID = -1e9


def _train_config(**changes) -> TrainConfig:
    values = dict(
        epochs=3,
        batch_size=8,
        future_offsets=TINY_OFFSETS,
        augment=False,
        validate=True,
    )

    values.update(changes)

    return TrainConfig(**values)


def _windows(dataset_dir, count: int = 4):
    return list(itertools.islice(load_samples(dataset_dir, "train", PAST_COUNT, 10.0, TINY_OFFSETS), count))


class OraclePredictor:
    """Encodes and decodes the true poses of the single test sequence"""
    def __init__(self, dataset_dir, model_config):
        dataset = SimDataset(dataset_dir)

        (sequence,) = dataset.sequence_names("test")

        self.fps = dataset.fps

        self.poses = dataset.poses(sequence)

        self.intrinsics = dataset.intrinsics(sequence)

        self.current_spec = model_config.current_spec()

        self.future_spec = model_config.future_spec()

        self.calls = 0

    def predict(self, depth, intrinsics, past):
        self.calls += 1

        frame = round(depth.timestamp * self.fps)

        current = decode_maps(encode_targets(self.poses[frame], intrinsics, self.current_spec), intrinsics,
                              timestamp=depth.timestamp)

        forecasts = [
            decode_maps(
                encode_targets(self.poses[frame + round(offset * self.fps)], intrinsics, self.future_spec),
                intrinsics,
                timestamp=depth.timestamp + offset,
            )
            for offset in TINY_OFFSETS
        ]

        return current, forecasts


class FrameIndexPredictor:
    """Returns a pose whose coordinates all equal the frame index and records every past it is fed"""
    def __init__(self, num_joints: int = 2, fps: float = 30.0):
        self.num_joints = num_joints

        self.fps = fps

        self.pasts = []

    def predict(self, depth, intrinsics, past):
        self.pasts.append(past)

        frame = round(depth.timestamp * self.fps)

        current = Pose3D(joints=np.full((self.num_joints, 3), float(frame)), timestamp=depth.timestamp)

        return current, [current]


class TestLosses:
    def test_zero_for_identical_maps(self):
        maps = torch.rand(2, 10, 8, 8)

        assert loss_rpe(maps, maps.clone()).item() == 0.0

    def test_present_loss_is_mean_per_map_error(self):
        pred = torch.zeros(1, 4, 8, 8)

        gt = torch.zeros(1, 4, 8, 8)

        gt[0, 0] = 2.0

        # one map of four has squared error 4 everywhere
        assert loss_rpe(pred, gt).item() == pytest.approx(1.0)

    def test_forecast_loss_averages_steps(self):
        pred = torch.zeros(1, 8, 4, 4)

        gt = torch.zeros(1, 8, 4, 4)

        gt[0, 4:] = 1.0

        assert loss_rpf(pred, gt, future_count=2).item() == pytest.approx(0.5)

        assert loss_rpf(pred.reshape(1, 2, 4, 4, 4), gt.reshape(1, 2, 4, 4, 4)).item() == pytest.approx(0.5)

    def test_forecast_loss_needs_step_count_for_stacked_channels(self):
        with pytest.raises(InvalidArgumentError):
            loss_rpf(torch.zeros(1, 8, 4, 4), torch.zeros(1, 8, 4, 4))

    def test_shape_mismatch_raises(self):
        with pytest.raises(InvalidArgumentError):
            loss_rpe(torch.zeros(1, 4, 8, 8), torch.zeros(1, 4, 8, 4))

    def test_weights(self):
        rpe, rpf = torch.tensor(2.0), torch.tensor(3.0)

        assert total_loss(rpe, rpf).item() == pytest.approx(5.0)

        assert total_loss(rpe, rpf, (1.0, 0.0)).item() == pytest.approx(2.0)


class TestTrainConfig:
    @pytest.mark.parametrize("epoch, expected", [(0, 1e-3), (14, 1e-3), (15, 1e-4), (20, 1e-4), (23, 1e-5), (29, 1e-5)])
    def test_step_schedule(self, epoch, expected):
        assert learning_rate_at(epoch, TrainConfig()) == pytest.approx(expected)

    def test_milestones_follow_epochs(self):
        assert TrainConfig().milestones() == [15, 23]

        assert TrainConfig().milestones(epochs=4) == [2, 3]

    def test_rejects_zero_loss_weights(self):
        with pytest.raises(InvalidArgumentError):
            TrainConfig(loss_weights=(0.0, 0.0))

    def test_rejects_unknown_settings(self):
        with pytest.raises(ConfigError):
            TrainConfig.from_dict({"epochs": 2, "momentum": 0.9})

    def test_dict_round_trip(self):
        config = _train_config(loss_weights=(1.0, 0.0))

        assert TrainConfig.from_dict(config.to_dict()) == config


class TestTargets:
    def test_out_of_range_joint_gets_empty_maps(self, model_config):
        joints = np.tile([0.0, 0.0, 2.0], (model_config.num_joints, 1))

        joints[1, 2] = 10.0

        maps = encode_targets(Pose3D(joints=joints), TINY_INTRINSICS, model_config.current_spec())

        assert not maps.uv[1].any()

        assert maps.uv[0].max() == pytest.approx(1.0, abs=0.1)

    def test_input_pose_is_not_modified(self, model_config):
        joints = np.tile([0.0, 0.0, 9.0], (model_config.num_joints, 1))

        pose = Pose3D(joints=joints)

        encode_targets(pose, TINY_INTRINSICS, model_config.current_spec())

        assert pose.valid.all()


class TestWindowDataset:
    def test_item_shapes(self, tiny_dataset, model_config):
        windows = WindowDataset(_windows(tiny_dataset), model_config, seed=0)

        xyz, past, current, future = windows[0]

        assert xyz.shape == (3, 32, 32)

        assert past.shape == (PAST_COUNT, model_config.num_joints, 3)

        assert current.shape == (2 * model_config.num_joints, 32, 32)

        assert future.shape == (len(TINY_OFFSETS) * 2 * model_config.num_joints, 8, 8)

        assert {tensor.dtype for tensor in (xyz, past, current, future)} == {torch.float32}

    def test_same_epoch_same_item(self, tiny_dataset, model_config):
        windows = WindowDataset(_windows(tiny_dataset), model_config, seed=0, augment_params=AugmentParams(),
                                jitter_cm=1.0)

        first = windows[1]

        second = windows[1]

        for left, right in zip(first, second):
            torch.testing.assert_close(left, right)

        windows.set_epoch(1)

        assert not torch.equal(windows[1][1], first[1])

    def test_estimation_only_batch_has_zero_forecast_loss(self, tiny_dataset, model_config):
        windows = WindowDataset(_windows(tiny_dataset), model_config, seed=0)

        batch = [torch.stack(tensors) for tensors in zip(*(windows[index] for index in range(len(windows))))]

        network = build_network(model_config)

        loss, rpe, rpf = batch_losses(network, batch, _train_config(loss_weights=(1.0, 0.0)), "cpu")

        assert rpf.item() == 0.0

        assert loss.item() == pytest.approx(rpe.item())


class TestCheckDataset:
    def test_joint_count_mismatch(self, tiny_dataset):
        with pytest.raises(ConfigError):
            check_dataset(tiny_model_config(num_joints=4), _train_config(), SimDataset(tiny_dataset))

    def test_offset_count_mismatch(self, tiny_dataset, model_config):
        with pytest.raises(ConfigError):
            check_dataset(model_config, _train_config(future_offsets=(0.5,)), SimDataset(tiny_dataset))

    def test_frame_size_mismatch(self, tiny_dataset):
        with pytest.raises(ConfigError):
            check_dataset(tiny_model_config(input_height=48), _train_config(), SimDataset(tiny_dataset))

    def test_adopts_dataset_normalization(self, tiny_dataset):
        adopted = check_dataset(tiny_model_config(xy_half_extent=9.0), _train_config(), SimDataset(tiny_dataset))

        assert adopted.xy_half_extent == SimDataset(tiny_dataset).normalization["xy_half_extent"]


class TestRollout:
    def test_past_is_empty_before_any_estimate(self):
        assert RolloutState(past_count=2, stride=1, past_rate=10.0).past(0.0) is None

    def test_invalid_joints_keep_previous_coordinates(self):
        state = RolloutState(past_count=2, stride=1, past_rate=10.0)

        state.push(Pose3D(joints=np.ones((2, 3)), timestamp=0.0))

        state.push(Pose3D(joints=[[np.nan] * 3, [5.0] * 3], timestamp=0.1, valid=[False, True]))

        latest = state.past(0.2).poses[-1]

        np.testing.assert_allclose(latest.joints, [[1.0] * 3, [5.0] * 3])

    def test_strided_history_and_warmup(self):
        predictor = FrameIndexPredictor()

        frames = [DepthFrame.empty(TINY_INTRINSICS, timestamp=index / 30.0) for index in range(20)]

        state = new_state(past_count=2, fps=30.0, past_rate=10.0)

        steps = list(rollout(predictor, frames, TINY_INTRINSICS, state, num_joints=2))

        assert [step.frame for step in steps] == list(range(20))

        assert [step.warmup for step in steps] == [index < 6 for index in range(20)]

        # one bootstrap pass with an all-zero past precedes the first real pass
        assert len(predictor.pasts) == 21

        assert not predictor.pasts[0].as_array().any()

        real = predictor.pasts[1:]

        np.testing.assert_allclose(real[0].as_array(), 0.0)

        for frame in range(6, 20):
            past = real[frame]

            assert past.as_array()[:, 0, 0].tolist() == [frame - 6, frame - 3]

            np.testing.assert_allclose([pose.timestamp for pose in past.poses],
                                       [frame / 30.0 - 0.2, frame / 30.0 - 0.1])


class TestEvaluation:
    def test_oracle_is_within_codec_bound_in_both_modes(self, tiny_dataset, model_config):
        dataset = SimDataset(tiny_dataset)

        intrinsics = dataset.intrinsics(dataset.sequence_names("test")[0])

        present_bound = codec_error_bound(model_config.current_spec(), intrinsics) * 100.0

        future_bound = codec_error_bound(model_config.future_spec(), intrinsics) * 100.0

        reports = {}

        for mode in ("gt_past", "autoregressive"):
            reports[mode] = evaluate_predictor(OraclePredictor(tiny_dataset, model_config), tiny_dataset, mode,
                                               past_count=PAST_COUNT, future_offsets=TINY_OFFSETS)

            report = reports[mode]

            assert sorted(report.per_horizon) == [0.0, 0.5, 1.0]

            assert report.add_mean <= 2.0 * present_bound

            for offset in TINY_OFFSETS:
                assert report.per_horizon[offset].add_mean <= 2.0 * future_bound

        # the oracle ignores its past, so both protocols score the same frames identically
        assert reports["gt_past"].n_frames == reports["autoregressive"].n_frames

        assert reports["gt_past"].add_mean == pytest.approx(reports["autoregressive"].add_mean)

        assert reports["gt_past"].metadata["split"] == "test"

    def test_unknown_mode(self, tiny_dataset, model_config):
        with pytest.raises(InvalidArgumentError):
            evaluate_predictor(OraclePredictor(tiny_dataset, model_config), tiny_dataset, "teacher_forced")

    def test_offsets_must_match_forecast_steps(self, model_config):
        checkpoint = Checkpoint(config=model_config, state={}, seed=0, metadata={"future_offsets": [0.5, 1.0, 1.5]})

        with pytest.raises(ConfigError):
            resolve_offsets(checkpoint)

        assert resolve_offsets(checkpoint, future_offsets=[0.25, 0.5]) == (0.25, 0.5)

    def test_incompatible_checkpoint(self, tiny_dataset, tmp_path):
        path = save_checkpoint(tmp_path / "four.nwck", build_network(tiny_model_config(num_joints=4)), seed=0)

        with pytest.raises(ConfigError):
            evaluate(path, tiny_dataset, "gt_past")


@pytest.fixture(scope="module")
def trained_run(tiny_dataset, tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("run")

    result = train(tiny_model_config(peak_threshold=ALWAYS_VALID), _train_config(), tiny_dataset, out_dir)

    return result, out_dir


class TestTrain:
    def test_loss_decreases(self, trained_run):
        result, _ = trained_run

        losses = [entry["loss_rpe"] + entry["loss_rpf"] for entry in result.history if entry["split"] == "train"]

        assert len(losses) == 3

        assert losses[-1] < losses[0]

    def test_writes_checkpoints_and_log(self, trained_run):
        result, out_dir = trained_run

        assert (out_dir / FINAL_CHECKPOINT).is_file()

        assert (out_dir / BEST_CHECKPOINT).is_file()

        entries = [json.loads(line) for line in (out_dir / METRICS_LOG).read_text().splitlines()]

        assert entries == result.history

        train_entries = [entry for entry in entries if entry["split"] == "train"]

        assert [entry["epoch"] for entry in train_entries] == [0, 1, 2]

        # milestones ceil(1.5) and ceil(2.25)
        assert [entry["lr"] for entry in train_entries] == pytest.approx([1e-3, 1e-3, 1e-4])

    def test_validation_is_logged(self, trained_run):
        result, _ = trained_run

        val_entries = [entry for entry in result.history if entry["split"] == "val"]

        assert [entry["epoch"] for entry in val_entries] == [0, 1, 2]

        for entry in val_entries:
            assert set(entry) == {"epoch", "split", "loss_rpe", "loss_rpf", "lr", "wall_s", "add_cm"}

            assert math.isfinite(entry["loss_rpe"]) and math.isfinite(entry["loss_rpf"])

            assert math.isfinite(entry["add_cm"])

    def test_train_records_carry_the_loss_fields(self, trained_run):
        result, _ = trained_run

        for entry in result.history:
            assert {"epoch", "split", "loss_rpe", "loss_rpf", "lr", "wall_s"} <= set(entry)

    def test_checkpoint_evaluates_in_both_modes(self, trained_run, tiny_dataset):
        result, _ = trained_run

        gt_past = evaluate(result.final_path, tiny_dataset, "gt_past")

        autoregressive = evaluate(result.final_path, tiny_dataset, "autoregressive")

        assert sorted(gt_past.per_horizon) == sorted(autoregressive.per_horizon) == [0.0, 0.5, 1.0]

        assert gt_past.n_frames == autoregressive.n_frames

    def test_same_seed_same_weights(self, tiny_dataset, tmp_path):
        config = _train_config(max_steps=2, validate=False, augment=True)

        first = train(tiny_model_config(), config, tiny_dataset, tmp_path / "first").network.state_dict()

        second = train(tiny_model_config(), config, tiny_dataset, tmp_path / "second").network.state_dict()

        for name, tensor in first.items():
            torch.testing.assert_close(tensor, second[name])

    def test_max_steps_cuts_training_short(self, tiny_dataset, tmp_path):
        result = train(tiny_model_config(), _train_config(max_steps=3, validate=False), tiny_dataset, tmp_path)

        assert [entry["epoch"] for entry in result.history] == [0]

    def test_non_finite_loss_stops_training(self, tiny_dataset, tmp_path, monkeypatch):
        def diverged(*args):
            nan = torch.tensor(float("nan"))

            return nan, nan, torch.tensor(0.0)

        monkeypatch.setattr(trainer, "batch_losses", diverged)

        with pytest.raises(NonFiniteLossError) as raised:
            train(tiny_model_config(), _train_config(validate=False), tiny_dataset, tmp_path)

        assert raised.value.epoch == 0 and raised.value.batch == 0

    def test_interrupted_best_write_keeps_previous_best(self, tiny_dataset, tmp_path, monkeypatch):
        # validation ADD improves every epoch, so epoch 1 rewrites best.nwck
        scores = iter([3.0, 2.0, 1.0])

        monkeypatch.setattr(trainer, "_validation_add", lambda *args: next(scores))

        real_replace = os.replace

        written = {}

        def interrupted_replace(source, destination):
            if Path(destination).name == BEST_CHECKPOINT and written:
                raise KeyboardInterrupt

            real_replace(source, destination)

            written[Path(destination).name] = Path(destination).read_bytes()

        monkeypatch.setattr(os, "replace", interrupted_replace)

        with pytest.raises(KeyboardInterrupt):
            train(tiny_model_config(), _train_config(epochs=2, max_samples=8), tiny_dataset, tmp_path)

        monkeypatch.undo()

        best_path = tmp_path / BEST_CHECKPOINT

        assert best_path.read_bytes() == written[BEST_CHECKPOINT]

        checkpoint = load_checkpoint(best_path)

        assert checkpoint.metadata["epoch"] == 0

        assert not (tmp_path / FINAL_CHECKPOINT).exists()

    @pytest.mark.slow
    def test_overfits_a_few_windows(self, tiny_dataset, tmp_path):
        config = _train_config(epochs=60, max_samples=8, teacher_forcing_jitter_cm=0.0, validate=False,
                               lr_milestones=(1.0,))

        result = train(tiny_model_config(), config, tiny_dataset, tmp_path)

        first, last = result.history[0], result.history[-1]

        assert last["loss_rpe"] < 0.5 * first["loss_rpe"]

        assert last["loss_rpf"] < 0.5 * first["loss_rpf"]


class TestBaseline:
    def _linear_samples(self, count: int, rng: np.random.Generator):
        samples = []

        for _ in range(count):
            start = rng.uniform(-0.5, 0.5, (1, 3)) + [0.0, 0.0, 2.0]

            velocity = rng.uniform(-0.2, 0.2, (1, 3))

            def at(time: float) -> Pose3D:
                return Pose3D(joints=start + velocity * time, timestamp=time)

            samples.append(DatasetSample(
                depth=DepthFrame.empty(TINY_INTRINSICS),
                intrinsics=TINY_INTRINSICS,
                past_poses=PoseSequence(poses=[at(-0.3), at(-0.2), at(-0.1)], rate=10.0),
                current_pose=at(0.0),
                future_poses=[at(offset) for offset in TINY_OFFSETS],
                future_offsets=TINY_OFFSETS,
            ))

        return samples

    def test_recovers_constant_velocity_motion(self):
        rng = np.random.default_rng(0)

        forecaster = LinearForecaster(past_count=3, future_count=2, num_joints=1).fit(self._linear_samples(50, rng))

        (sample,) = self._linear_samples(1, rng)

        current, forecasts = forecaster.predict(sample.past_poses)

        assert current.timestamp == pytest.approx(0.0)

        np.testing.assert_allclose(current.joints, sample.current_pose.joints, atol=1e-4)

        for forecast, truth in zip(forecasts, sample.future_poses):
            assert forecast.timestamp == pytest.approx(truth.timestamp)

            np.testing.assert_allclose(forecast.joints, truth.joints, atol=1e-4)

    def test_predict_before_fit_raises(self):
        forecaster = LinearForecaster(past_count=3, future_count=2, num_joints=1)

        with pytest.raises(InvalidArgumentError):
            forecaster.predict(PoseSequence(poses=[Pose3D(joints=np.zeros((1, 3)))], rate=10.0))

    def test_evaluates_as_a_predictor(self, tiny_dataset):
        samples = load_samples(tiny_dataset, "train", PAST_COUNT, 10.0, TINY_OFFSETS)

        forecaster = LinearForecaster(past_count=PAST_COUNT, future_count=2, num_joints=5).fit(samples)

        report = evaluate_predictor(BaselinePredictor(forecaster), tiny_dataset, "gt_past", past_count=PAST_COUNT,
                                    future_offsets=TINY_OFFSETS)

        assert sorted(report.per_horizon) == [0.0, 0.5, 1.0]

        assert math.isfinite(report.add_mean)


class TestAblation:
    def test_trains_both_variants(self, tiny_dataset, tmp_path):
        summary = run_ablation(
            tiny_model_config(peak_threshold=ALWAYS_VALID),
            _train_config(max_steps=2, validate=False),
            tiny_dataset,
            tmp_path,
            seeds=(0,),
        )

        assert set(summary.add_cm) == {"forecasting", "estimation_only"}

        assert all(len(values) == 1 for values in summary.add_cm.values())

        assert summary.paired_wins in (0, 1)

        written = json.loads((tmp_path / SUMMARY_FILE).read_text())

        assert written["seeds"] == [0]

        assert (tmp_path / "seed_0" / "estimation_only" / FINAL_CHECKPOINT).is_file()
