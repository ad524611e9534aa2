"""
Pose accuracy metrics

ADD is the mean Euclidean joint error in centimeters, mAP at a threshold the fraction of joints
whose error is strictly below it. Only joints valid in both prediction and ground truth count;
all (frame, joint) pairs are pooled globally.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from nowcast.exceptions import EmptyEvaluationError, InvalidArgumentError
from nowcast.spdh import Pose3D


DEFAULT_THRESHOLDS_CM = (2.0, 4.0, 6.0, 8.0, 10.0)

METERS_TO_CM = 100.0


def _check_pairs(pred: Sequence[Pose3D], gt: Sequence[Pose3D]) -> None:
    if len(pred) != len(gt):
        raise InvalidArgumentError(f"{len(pred)} predictions for {len(gt)} ground-truth poses")

    for index, (predicted, truth) in enumerate(zip(pred, gt)):
        if predicted.num_joints != truth.num_joints:
            raise InvalidArgumentError(
                f"frame {index}: prediction has {predicted.num_joints} joints, ground truth {truth.num_joints}"
            )


def frame_errors(predicted: Pose3D, truth: Pose3D, joints: Optional[Sequence[int]] = None) -> np.ndarray:
    """
    Errors in centimeters of the jointly valid joints of one frame

    Keyword arguments:
    predicted -- the predicted pose
    truth -- the ground-truth pose
    joints -- restrict to these joint indices (default: all)
    """
    mask = predicted.valid & truth.valid

    if joints is not None:
        selected = np.zeros_like(mask)

        selected[list(joints)] = True

        mask &= selected

    difference = predicted.joints[mask] - truth.joints[mask]

    return np.sqrt(np.sum(difference ** 2, axis=1)) * METERS_TO_CM


@dataclass
class ErrorAccumulator:
    """
    Collects per-joint errors frame by frame so that partial results can be merged
    """
    errors: List[np.ndarray] = field(default_factory=list)

    def add(self, predicted: Pose3D, truth: Pose3D, joints: Optional[Sequence[int]] = None) -> None:
        self.errors.append(frame_errors(predicted, truth, joints))

    def extend(self, pred: Sequence[Pose3D], gt: Sequence[Pose3D], joints: Optional[Sequence[int]] = None) -> None:
        _check_pairs(pred, gt)

        for predicted, truth in zip(pred, gt):
            self.add(predicted, truth, joints)

    def merge(self, other: "ErrorAccumulator") -> "ErrorAccumulator":
        return ErrorAccumulator(errors=self.errors + other.errors)

    @property
    def n_frames(self) -> int:
        return sum(1 for errors in self.errors if errors.size)

    @property
    def n_joints(self) -> int:
        return sum(errors.size for errors in self.errors)

    def pooled(self) -> np.ndarray:
        if not self.n_joints:
            raise EmptyEvaluationError("no jointly valid joints to evaluate")

        return np.concatenate(self.errors)

    def add_stats(self) -> Tuple[float, float]:
        """ADD mean over all pooled joints and the population std of per-frame mean errors"""
        pooled = self.pooled()

        frame_means = np.array([errors.mean() for errors in self.errors if errors.size])

        return float(pooled.mean()), float(frame_means.std())

    def map_at(self, thresholds: Sequence[float] = DEFAULT_THRESHOLDS_CM) -> Dict[float, float]:
        pooled = self.pooled()

        return {float(threshold): float(np.mean(pooled < threshold)) for threshold in thresholds}


def add_metric(pred: Sequence[Pose3D], gt: Sequence[Pose3D]) -> Tuple[float, float]:
    """
    ADD mean and std in centimeters

    Keyword arguments:
    pred -- predicted poses, one per frame
    gt -- ground-truth poses, one per frame
    """
    accumulator = ErrorAccumulator()

    accumulator.extend(pred, gt)

    return accumulator.add_stats()


def map_metric(pred: Sequence[Pose3D], gt: Sequence[Pose3D],
               thresholds: Sequence[float] = DEFAULT_THRESHOLDS_CM) -> Dict[float, float]:
    """
    Fraction of jointly valid joints with error strictly below each threshold (centimeters)

    Keyword arguments:
    pred -- predicted poses, one per frame
    gt -- ground-truth poses, one per frame
    thresholds -- thresholds in centimeters (default: 2, 4, 6, 8, 10)
    """
    accumulator = ErrorAccumulator()

    accumulator.extend(pred, gt)

    return accumulator.map_at(thresholds)
