"""
Evaluation reports: per-horizon, per-joint and per-group breakdowns with JSON and CSV output
"""
import csv
import json
import logging

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Union

from nowcast.exceptions import DatasetIOError, EmptyEvaluationError
from nowcast.metrics.metrics import DEFAULT_THRESHOLDS_CM, ErrorAccumulator
from nowcast.spdh import Pose3D


PRESENT = 0.0


def _key(value: float) -> str:
    return f"{value:g}"


@dataclass
class MetricStats:
    """ADD and mAP of one slice of an evaluation"""
    add_mean: float
    add_std: float
    map_at: Dict[float, float]
    n_frames: int
    n_joints_evaluated: int

    @classmethod
    def from_accumulator(cls, accumulator: ErrorAccumulator, thresholds: Sequence[float]) -> "MetricStats":
        add_mean, add_std = accumulator.add_stats()

        return cls(
            add_mean=add_mean,
            add_std=add_std,
            map_at=accumulator.map_at(thresholds),
            n_frames=accumulator.n_frames,
            n_joints_evaluated=accumulator.n_joints,
        )

    def to_dict(self) -> Dict:
        return {
            "add_mean": self.add_mean,
            "add_std": self.add_std,
            "map_at": {_key(threshold): fraction for threshold, fraction in self.map_at.items()},
            "n_frames": self.n_frames,
            "n_joints_evaluated": self.n_joints_evaluated,
        }


@dataclass
class MetricsReport:
    """
    Present-time metrics plus breakdowns. per_horizon is keyed by offset in seconds (0 is the
    present); horizons without predictions are absent. per_joint and per_group describe the
    present-time estimates.
    """
    add_mean: float
    add_std: float
    map_at: Dict[float, float]
    n_frames: int
    n_joints_evaluated: int
    per_horizon: Dict[float, MetricStats] = field(default_factory=dict)
    per_joint: Dict[str, MetricStats] = field(default_factory=dict)
    per_group: Dict[str, MetricStats] = field(default_factory=dict)
    mode: Optional[str] = None
    metadata: Dict = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {
            "mode": self.mode,
            "add_mean": self.add_mean,
            "add_std": self.add_std,
            "map_at": {_key(threshold): fraction for threshold, fraction in self.map_at.items()},
            "n_frames": self.n_frames,
            "n_joints_evaluated": self.n_joints_evaluated,
            "per_horizon": {_key(offset): stats.to_dict() for offset, stats in self.per_horizon.items()},
            "per_joint": {name: stats.to_dict() for name, stats in self.per_joint.items()},
            "per_group": {name: stats.to_dict() for name, stats in self.per_group.items()},
            "metadata": self.metadata,
        }


@dataclass
class HorizonResults:
    """
    Predicted and ground-truth poses grouped by horizon offset in seconds, 0 being the present
    """
    predictions: Dict[float, List[Pose3D]] = field(default_factory=dict)
    ground_truth: Dict[float, List[Pose3D]] = field(default_factory=dict)

    def add(self, offset: float, predicted: Pose3D, truth: Pose3D) -> None:
        self.predictions.setdefault(offset, []).append(predicted)

        self.ground_truth.setdefault(offset, []).append(truth)

    def extend(self, other: "HorizonResults") -> None:
        for offset in other.predictions:
            self.predictions.setdefault(offset, []).extend(other.predictions[offset])

            self.ground_truth.setdefault(offset, []).extend(other.ground_truth[offset])


def _stats(pred: Sequence[Pose3D], gt: Sequence[Pose3D], thresholds: Sequence[float],
           joints: Optional[Sequence[int]] = None) -> Optional[MetricStats]:
    accumulator = ErrorAccumulator()

    accumulator.extend(pred, gt, joints)

    if not accumulator.n_joints:
        return None

    return MetricStats.from_accumulator(accumulator, thresholds)


def horizon_report(results: HorizonResults, joint_names: Sequence[str],
                   joint_groups: Optional[Mapping[str, Sequence[str]]] = None,
                   thresholds: Sequence[float] = DEFAULT_THRESHOLDS_CM, mode: Optional[str] = None) -> MetricsReport:
    """
    Compute every horizon independently. The present row comes from the estimation head, the
    others from the forecasting head.

    Keyword arguments:
    results -- poses grouped by horizon
    joint_names -- names of the J joints
    joint_groups -- named subsets of joint_names (default: none)
    thresholds -- mAP thresholds in centimeters (default: 2, 4, 6, 8, 10)
    mode -- label of the evaluation protocol (default: None)
    """
    per_horizon = {}

    for offset in sorted(results.predictions):
        stats = _stats(results.predictions[offset], results.ground_truth[offset], thresholds)

        if stats is None:
            logging.warning(f"no jointly valid joints at horizon {offset} s, leaving it out of the report")

            continue

        per_horizon[offset] = stats

    if PRESENT not in per_horizon:
        raise EmptyEvaluationError("no present-time predictions to evaluate")

    present_pred = results.predictions[PRESENT]

    present_gt = results.ground_truth[PRESENT]

    per_joint = {}

    for index, name in enumerate(joint_names):
        stats = _stats(present_pred, present_gt, thresholds, joints=[index])

        if stats is not None:
            per_joint[name] = stats

    per_group = {}

    for group, members in (joint_groups or {}).items():
        indices = [joint_names.index(member) for member in members if member in joint_names]

        stats = _stats(present_pred, present_gt, thresholds, joints=indices) if indices else None

        if stats is not None:
            per_group[group] = stats

    present = per_horizon[PRESENT]

    return MetricsReport(
        add_mean=present.add_mean,
        add_std=present.add_std,
        map_at=present.map_at,
        n_frames=present.n_frames,
        n_joints_evaluated=present.n_joints_evaluated,
        per_horizon=per_horizon,
        per_joint=per_joint,
        per_group=per_group,
        mode=mode,
    )


def mode_gap(reference: MetricsReport, other: MetricsReport) -> Dict[str, Dict]:
    """
    Per-horizon difference other minus reference, for horizons present in both

    Keyword arguments:
    reference -- usually the ground-truth-past report
    other -- usually the autoregressive report
    """
    gap = {}

    for offset in sorted(set(reference.per_horizon) & set(other.per_horizon)):
        left = reference.per_horizon[offset]

        right = other.per_horizon[offset]

        gap[_key(offset)] = {
            "add_mean": right.add_mean - left.add_mean,
            "map_at": {_key(threshold): right.map_at[threshold] - left.map_at[threshold] for threshold in left.map_at},
        }

    return gap


def _write_csv(path: Path, header: List[str], rows: List[List]) -> None:
    with open(path, "w", newline="") as csv_file:
        writer = csv.writer(csv_file)

        writer.writerow(header)

        writer.writerows(rows)


def _stats_rows(items: Mapping, thresholds: Sequence[float]) -> List[List]:
    return [
        [_key(key) if isinstance(key, float) else key, stats.add_mean, stats.add_std]
        + [stats.map_at[threshold] for threshold in thresholds]
        + [stats.n_frames, stats.n_joints_evaluated]
        for key, stats in items.items()
    ]


def write_report_files(reports: Mapping[str, MetricsReport], out_dir: Union[str, Path]) -> List[Path]:
    """
    Write report_<mode>.json plus per-threshold, per-horizon, per-joint and per-group CSV tables
    for every mode, and the per-horizon gap when both protocols were evaluated

    Keyword arguments:
    reports -- reports keyed by mode
    out_dir -- destination directory
    """
    out_dir = Path(out_dir)

    written = []

    try:
        out_dir.mkdir(parents=True, exist_ok=True)

        for mode, report in reports.items():
            thresholds = list(report.map_at)

            stats_header = ["add_mean_cm", "add_std_cm"] + [f"map_{_key(t)}cm" for t in thresholds] + ["n_frames", "n_joints"]

            path = out_dir / f"report_{mode}.json"

            path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True))

            written.append(path)

            path = out_dir / f"{mode}_map.csv"

            _write_csv(path, ["threshold_cm", "map"], [[_key(t), report.map_at[t]] for t in thresholds])

            written.append(path)

            for suffix, label, items in (
                ("horizons", "horizon_s", report.per_horizon),
                ("joints", "joint", report.per_joint),
                ("groups", "group", report.per_group),
            ):
                path = out_dir / f"{mode}_{suffix}.csv"

                _write_csv(path, [label] + stats_header, _stats_rows(items, thresholds))

                written.append(path)

        if "gt_past" in reports and "autoregressive" in reports:
            path = out_dir / "gap.json"

            path.write_text(json.dumps(mode_gap(reports["gt_past"], reports["autoregressive"]), indent=2, sort_keys=True))

            written.append(path)

    except OSError as os_err:
        raise DatasetIOError(f"unable to write report: {os_err.strerror}", path=str(out_dir)) from os_err

    return written
