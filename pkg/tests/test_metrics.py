"""
ADD and mAP against a brute-force loop, report breakdowns, CSV/JSON output and the SVG chart.
"""
import csv
import json
import math

import numpy as np
import pytest

from nowcast.exceptions import EmptyEvaluationError, InvalidArgumentError
from nowcast.metrics import (
    ErrorAccumulator,
    HorizonResults,
    add_metric,
    horizon_report,
    map_metric,
    mode_gap,
    render_horizon_chart,
    write_horizon_chart,
    write_report_files,
)
from nowcast.spdh import Pose3D


JOINT_NAMES = ["base", "shoulder", "elbow", "wrist", "tool"]


def _pose(offsets_cm, valid=None, base=None) -> Pose3D:
    """Pose whose joints sit offsets_cm (along x) away from base"""
    base = np.zeros((len(offsets_cm), 3)) + [0.0, 0.0, 2.0] if base is None else base

    joints = base.copy()

    joints[:, 0] += np.asarray(offsets_cm, dtype=np.float64) / 100.0

    return Pose3D(joints=joints, valid=valid)


def _random_pairs(seed: int, frames: int = 40, joints: int = 5):
    rng = np.random.default_rng(seed)

    pred, gt = [], []

    for _ in range(frames):
        truth = rng.uniform(-1.0, 1.0, (joints, 3)) + [0.0, 0.0, 2.5]

        predicted = truth + rng.normal(0.0, 0.05, (joints, 3))

        pred.append(Pose3D(joints=predicted, valid=rng.random(joints) > 0.2))

        gt.append(Pose3D(joints=truth, valid=rng.random(joints) > 0.1))

    return pred, gt


def _brute_force(pred, gt, thresholds):
    errors, frame_means = [], []

    for predicted, truth in zip(pred, gt):
        frame = []

        for joint in range(truth.num_joints):
            if predicted.valid[joint] and truth.valid[joint]:
                frame.append(100.0 * math.dist(predicted.joints[joint], truth.joints[joint]))

        errors.extend(frame)

        if frame:
            frame_means.append(sum(frame) / len(frame))

    mean = sum(errors) / len(errors)

    frame_mean = sum(frame_means) / len(frame_means)

    std = math.sqrt(sum((value - frame_mean) ** 2 for value in frame_means) / len(frame_means))

    maps = {threshold: sum(1 for error in errors if error < threshold) / len(errors) for threshold in thresholds}

    return mean, std, maps


def _results(offsets=(0.0, 0.5, 1.0), error_cm=None) -> HorizonResults:
    """Per-horizon results whose error grows by 1 cm per horizon step"""
    results = HorizonResults()

    for step, offset in enumerate(offsets):
        for frame in range(4):
            error = (step + 1.0) if error_cm is None else error_cm

            offsets_cm = [error] * 5

            offsets_cm[4] = 3.0 * error

            results.add(offset, _pose(offsets_cm), _pose([0.0] * 5))

    return results


class TestAdd:
    def test_matches_brute_force(self):
        pred, gt = _random_pairs(0)

        mean, std = add_metric(pred, gt)

        expected_mean, expected_std, _ = _brute_force(pred, gt, [])

        assert mean == pytest.approx(expected_mean)

        assert std == pytest.approx(expected_std)

    def test_single_joint_error(self):
        mean, std = add_metric([_pose([3.0, 0.0])], [_pose([0.0, 0.0])])

        assert mean == pytest.approx(1.5)

        assert std == pytest.approx(0.0)

    def test_invalid_joints_are_excluded(self):
        mean, _ = add_metric([_pose([50.0, 2.0], valid=[False, True])], [_pose([0.0, 0.0])])

        assert mean == pytest.approx(2.0)

    def test_no_jointly_valid_joints_raises(self):
        with pytest.raises(EmptyEvaluationError):
            add_metric([_pose([1.0], valid=[False])], [_pose([0.0])])

    def test_mismatched_lengths_raise(self):
        with pytest.raises(InvalidArgumentError):
            add_metric([_pose([1.0])], [])

    def test_mismatched_joint_counts_raise(self):
        with pytest.raises(InvalidArgumentError):
            add_metric([_pose([1.0])], [_pose([0.0, 0.0])])


class TestMap:
    def test_matches_brute_force(self):
        pred, gt = _random_pairs(1)

        thresholds = (2.0, 4.0, 6.0, 8.0, 10.0)

        _, _, expected = _brute_force(pred, gt, thresholds)

        assert map_metric(pred, gt, thresholds) == pytest.approx(expected)

    def test_threshold_is_strict(self):
        accumulator = ErrorAccumulator(errors=[np.array([2.0, 1.0])])

        assert accumulator.map_at((2.0,))[2.0] == pytest.approx(0.5)

    def test_monotone_in_threshold(self):
        pred, gt = _random_pairs(2)

        fractions = list(map_metric(pred, gt).values())

        assert fractions == sorted(fractions)


class TestAccumulator:
    def test_merge_equals_single_pass(self):
        pred, gt = _random_pairs(3)

        whole = ErrorAccumulator()

        whole.extend(pred, gt)

        first, second = ErrorAccumulator(), ErrorAccumulator()

        first.extend(pred[:10], gt[:10])

        second.extend(pred[10:], gt[10:])

        merged = first.merge(second)

        assert merged.add_stats() == pytest.approx(whole.add_stats())

        assert merged.n_joints == whole.n_joints


class TestHorizonReport:
    def test_present_row_is_the_headline(self):
        report = horizon_report(_results(), JOINT_NAMES, mode="gt_past")

        assert sorted(report.per_horizon) == [0.0, 0.5, 1.0]

        assert report.add_mean == pytest.approx(report.per_horizon[0.0].add_mean)

        # four joints at 1 cm, the tool at 3 cm
        assert report.add_mean == pytest.approx(7.0 / 5.0)

        assert report.per_horizon[1.0].add_mean == pytest.approx(3.0 * 7.0 / 5.0)

        assert report.n_frames == 4

        assert report.n_joints_evaluated == 20

    def test_per_joint_and_group(self):
        report = horizon_report(_results(), JOINT_NAMES, joint_groups={"arm": ["shoulder", "elbow"], "end": ["tool"]})

        assert list(report.per_joint) == JOINT_NAMES

        assert report.per_joint["tool"].add_mean == pytest.approx(3.0)

        assert report.per_group["arm"].add_mean == pytest.approx(1.0)

        assert report.per_group["end"].n_joints_evaluated == 4

    def test_missing_present_raises(self):
        with pytest.raises(EmptyEvaluationError):
            horizon_report(_results(offsets=(0.5,)), JOINT_NAMES)

    def test_horizon_without_valid_joints_is_left_out(self):
        results = _results()

        results.add(2.0, _pose([1.0] * 5, valid=[False] * 5), _pose([0.0] * 5))

        assert 2.0 not in horizon_report(results, JOINT_NAMES).per_horizon

    def test_mode_gap(self):
        reference = horizon_report(_results(error_cm=1.0), JOINT_NAMES)

        other = horizon_report(_results(error_cm=2.5), JOINT_NAMES)

        gap = mode_gap(reference, other)

        assert set(gap) == {"0", "0.5", "1"}

        assert gap["0.5"]["add_mean"] == pytest.approx(1.5 * 7.0 / 5.0)

        # 1 cm joints fall below 2 cm, 2.5 cm joints do not
        assert gap["0"]["map_at"]["2"] == pytest.approx(-0.8)


class TestReportFiles:
    def test_writes_tables_for_every_mode(self, tmp_path):
        reports = {
            "gt_past": horizon_report(_results(), JOINT_NAMES, mode="gt_past"),
            "autoregressive": horizon_report(_results(error_cm=2.0), JOINT_NAMES, mode="autoregressive"),
        }

        written = {path.name for path in write_report_files(reports, tmp_path / "eval")}

        for mode in reports:
            assert {f"report_{mode}.json", f"{mode}_map.csv", f"{mode}_horizons.csv",
                    f"{mode}_joints.csv", f"{mode}_groups.csv"} <= written

        assert "gap.json" in written

    def test_horizon_table_has_header_present_and_forecast_rows(self, tmp_path):
        reports = {"gt_past": horizon_report(_results(), JOINT_NAMES, mode="gt_past")}

        write_report_files(reports, tmp_path)

        with open(tmp_path / "gt_past_horizons.csv", newline="") as csv_file:
            rows = list(csv.reader(csv_file))

        assert rows[0][0] == "horizon_s"

        assert [row[0] for row in rows[1:]] == ["0", "0.5", "1"]

        assert not (tmp_path / "gap.json").exists()

    def test_json_report_is_readable(self, tmp_path):
        write_report_files({"gt_past": horizon_report(_results(), JOINT_NAMES, mode="gt_past")}, tmp_path)

        report = json.loads((tmp_path / "report_gt_past.json").read_text())

        assert report["mode"] == "gt_past"

        assert report["add_mean"] == pytest.approx(7.0 / 5.0)

        assert set(report["map_at"]) == {"2", "4", "6", "8", "10"}


class TestChart:
    def test_one_polyline_per_mode(self):
        reports = {
            "gt_past": horizon_report(_results(), JOINT_NAMES),
            "autoregressive": horizon_report(_results(error_cm=2.0), JOINT_NAMES),
        }

        svg = render_horizon_chart(reports)

        assert svg.startswith("<svg")

        assert svg.count("<polyline") == 2

        assert 'data-mode="gt_past"' in svg and 'data-mode="autoregressive"' in svg

    def test_write_chart(self, tmp_path):
        path = write_horizon_chart({"gt_past": horizon_report(_results(), JOINT_NAMES)}, tmp_path / "chart.svg")

        assert "mAP@10cm" in path.read_text()
