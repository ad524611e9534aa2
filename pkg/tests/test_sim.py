"""
Arm simulator: kinematics, trajectories, depth rendering, the .dpt format and the dataset
layout produced by generate_dataset.
"""
import json
import math

import numpy as np
import pytest

from nowcast.exceptions import DatasetIOError, DatasetParseError, InvalidArgumentError
from nowcast.geometry import CameraIntrinsics, DepthFrame, RigidTransform
from nowcast.sim.dataset import (
    SimDataset,
    frames_per_step,
    generate_dataset,
    load_samples,
    offsets_to_frames,
    split_sequences,
    validate_dataset,
)
from nowcast.sim.dpt import DPT_HEADER, decode_dpt, encode_dpt, read_dpt
from nowcast.sim.kinematics import ArmModel, default_arm_model, forward_kinematics
from nowcast.sim.render import SceneConfig, render_capsules, render_depth
from nowcast.sim.trajectory import TrajectorySpec, _plan_segments, minimum_jerk, sample_trajectory

from conftest import tiny_dataset_config


K = CameraIntrinsics(fx=55.0, fy=55.0, cx=32.0, cy=24.0, width=64, height=48)


def planar_arm() -> ArmModel:
    return ArmModel(
        link_lengths=(0.5, 0.5),
        joint_axes=[(0.0, 0.0, 1.0), (0.0, 0.0, 1.0)],
        joint_limits=[(-math.pi, math.pi), (-math.pi, math.pi)],
        base_pose=RigidTransform.identity(),
    )


class TestKinematics:
    def test_zero_configuration(self):
        pose = forward_kinematics(planar_arm(), [0.0, 0.0])

        np.testing.assert_allclose(pose.joints, [[0, 0, 0], [0.5, 0, 0], [1.0, 0, 0]], atol=1e-12)

    def test_quarter_turn_of_the_base(self):
        pose = forward_kinematics(planar_arm(), [math.pi / 2, 0.0])

        np.testing.assert_allclose(pose.joints, [[0, 0, 0], [0, 0.5, 0], [0, 1.0, 0]], atol=1e-12)

    def test_links_stay_rigid(self):
        arm = default_arm_model()

        rng = np.random.default_rng(5)

        for _ in range(20):
            angles = rng.uniform(arm.joint_limits[:, 0], arm.joint_limits[:, 1])

            lengths = np.linalg.norm(np.diff(forward_kinematics(arm, angles).joints, axis=0), axis=1)

            np.testing.assert_allclose(lengths, arm.link_lengths, atol=1e-12)

    def test_wrong_angle_count_raises(self):
        with pytest.raises(InvalidArgumentError):
            forward_kinematics(planar_arm(), [0.0])

    def test_angle_outside_limits_raises(self):
        with pytest.raises(InvalidArgumentError):
            forward_kinematics(default_arm_model(), [0.0, 0.0, 0.5, 0.0])

    def test_default_arm_has_five_named_keypoints(self):
        arm = default_arm_model()

        assert arm.num_keypoints == 5

        assert arm.joint_names == ["base", "shoulder", "elbow", "wrist", "tool"]

    def test_model_dict_round_trip(self):
        arm = default_arm_model()

        restored = ArmModel.from_dict(arm.to_dict())

        angles = [0.3, 0.7, 0.9, -0.2]

        np.testing.assert_allclose(forward_kinematics(restored, angles).joints, forward_kinematics(arm, angles).joints)


class TestTrajectory:
    def test_minimum_jerk_endpoints(self):
        assert minimum_jerk(np.array(0.0)) == 0.0

        assert minimum_jerk(np.array(1.0)) == 1.0

        assert minimum_jerk(np.array(0.5)) == pytest.approx(0.5)

    def test_minimum_jerk_starts_and_stops_smoothly(self):
        step = 1e-4

        assert minimum_jerk(np.array(step)) / step < 1e-6

        assert (1.0 - minimum_jerk(np.array(1.0 - step))) / step < 1e-6

    def test_sample_count(self):
        assert len(sample_trajectory(default_arm_model(), TrajectorySpec(), duration=2.0, rate=30.0, seed=0)) == 60

    def test_deterministic_in_seed(self):
        first = sample_trajectory(default_arm_model(), TrajectorySpec(), 2.0, 30.0, seed=11)

        second = sample_trajectory(default_arm_model(), TrajectorySpec(), 2.0, 30.0, seed=11)

        np.testing.assert_array_equal(np.stack(first), np.stack(second))

    def test_angles_stay_within_limits(self):
        arm = default_arm_model()

        angles = np.stack(sample_trajectory(arm, TrajectorySpec(), 6.0, 30.0, seed=2))

        assert np.all(angles >= arm.joint_limits[:, 0] - 1e-12)

        assert np.all(angles <= arm.joint_limits[:, 1] + 1e-12)

    def test_arm_rests_at_waypoints(self):
        arm = default_arm_model()

        spec = TrajectorySpec(waypoint_hold=0.3)

        rate = 30.0

        angles = np.stack(sample_trajectory(arm, spec, 6.0, rate, seed=4))

        segments = _plan_segments(arm, spec, 6.0, np.random.default_rng(4))

        checked = 0

        for segment in segments[:-1]:
            arrival = math.ceil((segment.start + segment.duration) * rate)

            departure = math.floor(segment.end * rate)

            for frame in range(arrival, min(departure, len(angles) - 1)):
                assert np.max(np.abs(angles[frame + 1] - angles[frame])) < 1e-3

                checked += 1

        assert checked > 0

    def test_invalid_rate_raises(self):
        with pytest.raises(InvalidArgumentError):
            sample_trajectory(default_arm_model(), TrajectorySpec(), 2.0, 0.0, seed=0)


class TestRender:
    def test_arm_behind_camera_is_invisible(self):
        arm = default_arm_model(base_pose=RigidTransform(translation=(0.0, 0.0, -5.0)))

        pose = forward_kinematics(arm, [0.0, 0.5, 0.5, 0.0])

        assert not render_depth(arm, pose, K).valid_mask.any()

    def test_sphere_on_optical_axis(self):
        radius = 0.1

        center = np.array([[0.0, 0.0, 2.0]])

        depth = render_capsules(center, center, radius, K)

        assert depth.values[24, 32] == pytest.approx(2.0 - radius, abs=1e-6)

    def test_depth_within_capsule_support(self):
        arm = default_arm_model(base_pose=RigidTransform(
            rotation=[[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 1.0]],
            translation=(0.0, 0.4, 2.4),
        ))

        pose = forward_kinematics(arm, [0.4, 0.9, 1.0, 0.3])

        depth = render_depth(arm, pose, K)

        values = depth.values[depth.valid_mask]

        assert values.size

        z = pose.joints[:, 2]

        assert values.min() >= z.min() - arm.link_radius - 1e-5

        assert values.max() <= z.max() + arm.link_radius + 1e-5

    def test_back_plane_fills_misses(self):
        arm = ArmModel(link_lengths=(0.1,), joint_axes=[(0.0, 0.0, 1.0)], joint_limits=[(-1.0, 1.0)],
                       base_pose=RigidTransform(translation=(0.0, 0.0, -10.0)))

        pose = forward_kinematics(arm, [0.0])

        depth = render_depth(arm, pose, K, SceneConfig(back_plane_depth=3.0))

        np.testing.assert_allclose(depth.values, 3.0)


class TestDpt:
    def test_encoding_layout(self):
        frame = DepthFrame(values=np.arange(6, dtype=np.float32).reshape(2, 3))

        data = encode_dpt(frame)

        assert data[:4] == b"DPT1"

        assert len(data) == DPT_HEADER.size + 6 * 4

        np.testing.assert_array_equal(decode_dpt(data).values, frame.values)

    def test_bad_magic(self):
        data = b"XXXX" + encode_dpt(DepthFrame(values=np.ones((2, 2))))[4:]

        with pytest.raises(DatasetParseError) as raised:
            decode_dpt(data, path="frame.dpt")

        assert raised.value.offset == 0

    def test_truncated_payload(self):
        data = encode_dpt(DepthFrame(values=np.ones((2, 2))))[:-3]

        with pytest.raises(DatasetParseError):
            decode_dpt(data)

    def test_negative_value_reports_its_offset(self):
        data = bytearray(encode_dpt(DepthFrame(values=np.ones((2, 2)))))

        data[DPT_HEADER.size + 4:DPT_HEADER.size + 8] = np.float32(-1.0).tobytes()

        with pytest.raises(DatasetParseError) as raised:
            decode_dpt(bytes(data))

        assert raised.value.offset == DPT_HEADER.size + 4

    def test_missing_file(self, tmp_path):
        with pytest.raises(DatasetIOError):
            read_dpt(tmp_path / "missing.dpt")


class TestTiming:
    def test_frames_per_step(self):
        assert frames_per_step(30.0, 10.0) == 3

    def test_rate_must_divide_stream(self):
        with pytest.raises(InvalidArgumentError):
            frames_per_step(30.0, 7.0)

    def test_offsets_to_frames(self):
        assert offsets_to_frames([0.5, 1.0, 1.5, 2.0], 30.0) == [15, 30, 45, 60]

    @pytest.mark.parametrize("offset", [0.0, 0.01])
    def test_offsets_must_be_whole_frames(self, offset):
        with pytest.raises(InvalidArgumentError):
            offsets_to_frames([offset], 30.0)


class TestSplits:
    def test_three_sequences(self):
        splits = split_sequences(3)

        assert (splits["train"], splits["val"], splits["test"]) == ([0], [1], [2])

    def test_ten_sequences(self):
        splits = split_sequences(10)

        assert splits["test"] == [8, 9]

        assert splits["val"] == [7]

        assert splits["train"] == list(range(7))

    def test_splits_are_disjoint_and_complete(self):
        splits = split_sequences(23)

        merged = splits["train"] + splits["val"] + splits["test"]

        assert sorted(merged) == list(range(23))


class TestGenerate:
    def test_sequence_count_and_length(self, tiny_dataset):
        dataset = SimDataset(tiny_dataset)

        assert len(dataset.sequence_names("all")) == 3

        assert [dataset.num_frames(name) for name in dataset.sequence_names("all")] == [120, 120, 120]

        assert dataset.num_joints == 5

    def test_regeneration_is_byte_identical(self, tmp_path):
        config = tiny_dataset_config(n_sequences=2, duration=1.0)

        generate_dataset(config, seed=3, out_dir=tmp_path / "a")

        generate_dataset(config, seed=3, out_dir=tmp_path / "b")

        first = sorted(path.relative_to(tmp_path / "a") for path in (tmp_path / "a").rglob("*") if path.is_file())

        second = sorted(path.relative_to(tmp_path / "b") for path in (tmp_path / "b").rglob("*") if path.is_file())

        assert first == second

        for relative in first:
            assert (tmp_path / "a" / relative).read_bytes() == (tmp_path / "b" / relative).read_bytes()

    def test_different_seeds_differ(self, tmp_path):
        config = tiny_dataset_config(n_sequences=1, duration=1.0)

        generate_dataset(config, seed=1, out_dir=tmp_path / "a")

        generate_dataset(config, seed=2, out_dir=tmp_path / "b")

        assert (tmp_path / "a" / "seq_000" / "poses.json").read_bytes() != (tmp_path / "b" / "seq_000" / "poses.json").read_bytes()

    def test_joints_project_inside_the_image(self, tiny_dataset):
        report = validate_dataset(tiny_dataset)

        assert report.n_frames == 360

        assert report.in_frame_fraction >= 0.95

    def test_depth_frames_match_intrinsics(self, tiny_dataset):
        dataset = SimDataset(tiny_dataset)

        sequence = dataset.sequence_names("test")[0]

        depth = dataset.depth(sequence, 10)

        assert depth.shape == dataset.intrinsics(sequence).shape

        assert depth.timestamp == pytest.approx(10 / 30.0)

        assert depth.valid_mask.any()

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DatasetIOError):
            SimDataset(tmp_path)

    def test_corrupt_poses_report_the_file(self, tmp_path):
        broken = tmp_path / "broken"

        generate_dataset(tiny_dataset_config(n_sequences=1, duration=0.5), seed=1, out_dir=broken)

        (broken / "seq_000" / "poses.json").write_text("[{\"frame\": 0,")

        with pytest.raises(DatasetParseError) as raised:
            SimDataset(broken).poses("seq_000")

        assert raised.value.path.endswith("poses.json")

        assert 0 < raised.value.offset <= len("[{\"frame\": 0,")

    @pytest.mark.parametrize("damage", ["missing_frame", "wrong_frame", "joint_count"])
    def test_bad_record_reports_its_offset(self, tmp_path, damage):
        broken = tmp_path / "broken"

        generate_dataset(tiny_dataset_config(n_sequences=1, duration=0.5), seed=1, out_dir=broken)

        poses_path = broken / "seq_000" / "poses.json"

        records = json.loads(poses_path.read_text())

        damaged = dict(records[9])

        if damage == "missing_frame":
            del damaged["frame"]

        elif damage == "wrong_frame":
            damaged["frame"] = 3

        else:
            damaged["joints"] = damaged["joints"][:2]

            damaged["valid"] = damaged["valid"][:2]

        head = json.dumps(records[:9])[:-1] + ", "

        poses_path.write_text(head + json.dumps(damaged) + ", " + json.dumps(records[10:])[1:])

        with pytest.raises(DatasetParseError) as raised:
            SimDataset(broken).poses("seq_000")

        assert raised.value.offset == len(head.encode())

        assert "record 9" in str(raised.value)


class TestLoadSamples:
    def test_window_count(self, tiny_dataset):
        samples = list(load_samples(tiny_dataset, "test", M=10, past_rate=10.0, future_offsets=(0.5, 1.0, 1.5, 2.0)))

        n_frames, stride, horizon = 120, 3, 60

        # the earliest past pose sits stride * M frames back and must exist, so the first
        # window is frame 30 with frame 0 as its oldest past pose; the last keeps its 2 s future
        # inside the sequence
        assert len(samples) == n_frames - stride * 10 - horizon == 30

        assert [samples[0].frame, samples[-1].frame] == [30, 59]

        assert samples[0].past_poses.poses[0].timestamp == pytest.approx(0.0)

        assert samples[-1].frame + horizon == n_frames - 1

    def test_one_sample_per_frame_without_context(self, tiny_dataset):
        assert len(list(load_samples(tiny_dataset, "test", M=0, future_offsets=()))) == 120

    def test_past_spacing(self, tiny_dataset):
        sample = next(load_samples(tiny_dataset, "test", M=10, past_rate=10.0, future_offsets=(0.5,)))

        timestamps = [pose.timestamp for pose in sample.past_poses.poses]

        np.testing.assert_allclose(np.diff(timestamps), 0.1, atol=1e-9)

        assert sample.current_pose.timestamp - timestamps[-1] == pytest.approx(0.1)

    def test_future_poses_follow_offsets(self, tiny_dataset):
        sample = next(load_samples(tiny_dataset, "test", M=3, past_rate=10.0, future_offsets=(0.5, 1.0)))

        gaps = [pose.timestamp - sample.current_pose.timestamp for pose in sample.future_poses]

        np.testing.assert_allclose(gaps, [0.5, 1.0], atol=1e-9)

    def test_unknown_split_raises(self, tiny_dataset):
        with pytest.raises(InvalidArgumentError):
            list(load_samples(tiny_dataset, "holdout"))
