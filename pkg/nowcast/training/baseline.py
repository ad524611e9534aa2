"""
Linear forecasting baseline

A ridge-regularized least-squares map from the M flattened past poses to the present pose and
each future pose. It never looks at the depth frame, which makes it the yardstick for how much
the visual branch contributes.
"""
import logging

from typing import Iterable, List, Optional, Tuple

import numpy as np

from nowcast.exceptions import InvalidArgumentError
from nowcast.sim.dataset import DatasetSample, PoseSequence
from nowcast.spdh import Pose3D


class LinearForecaster:
    """
    Least-squares regressor (past poses -> present + T future poses). The weights include a
    bias row.
    """
    def __init__(self, past_count: int, future_count: int, num_joints: int, ridge: float = 1e-6):
        """
        Keyword arguments:
        past_count -- M
        future_count -- T
        num_joints -- J
        ridge -- Tikhonov regularization strength (default: 1e-6)
        """
        if min(past_count, future_count, num_joints) < 1:
            raise InvalidArgumentError("past_count, future_count and num_joints must be >= 1")

        if ridge < 0:
            raise InvalidArgumentError(f"ridge must be >= 0, got {ridge}")

        self.past_count = past_count

        self.future_count = future_count

        self.num_joints = num_joints

        self.ridge = ridge

        self.weights: Optional[np.ndarray] = None

        self.future_offsets: Tuple[float, ...] = ()

    def _features(self, past: np.ndarray) -> np.ndarray:
        past = np.asarray(past, dtype=np.float64)

        if past.shape[-3:] != (self.past_count, self.num_joints, 3):
            raise InvalidArgumentError(
                f"expected {self.past_count} past poses of {self.num_joints} joints, got shape {past.shape}"
            )

        flat = past.reshape(past.shape[:-3] + (-1,))

        return np.concatenate([flat, np.ones(flat.shape[:-1] + (1,))], axis=-1)

    def fit(self, samples: Iterable[DatasetSample]) -> "LinearForecaster":
        """
        Solve the regularized normal equations over a set of windows

        Keyword arguments:
        samples -- training windows with M past and T future poses
        """
        inputs = []

        targets = []

        for sample in samples:
            if len(sample.future_poses) != self.future_count:
                raise InvalidArgumentError(f"sample has {len(sample.future_poses)} future poses, expected {self.future_count}")

            inputs.append(sample.past_poses.as_array())

            poses = [sample.current_pose] + list(sample.future_poses)

            targets.append(np.stack([pose.joints for pose in poses]).reshape(-1))

            self.future_offsets = tuple(sample.future_offsets)

        if not inputs:
            raise InvalidArgumentError("cannot fit on an empty sample set")

        features = self._features(np.stack(inputs))

        targets = np.stack(targets)

        gram = features.T @ features + self.ridge * np.eye(features.shape[1])

        self.weights = np.linalg.solve(gram, features.T @ targets)

        residual = features @ self.weights - targets

        logging.info(f"linear baseline fit on {len(inputs)} windows, rms residual {np.sqrt(np.mean(residual ** 2)):.4f} m")

        return self

    def predict(self, past: PoseSequence, timestamp: Optional[float] = None) -> Tuple[Pose3D, List[Pose3D]]:
        """
        Present and future poses following a past sequence

        Keyword arguments:
        past -- the M past poses
        timestamp -- present time (default: one past step after the last past pose)
        """
        if self.weights is None:
            raise InvalidArgumentError("the forecaster has not been fit")

        outputs = (self._features(past.as_array()) @ self.weights).reshape(1 + self.future_count, self.num_joints, 3)

        if timestamp is None:
            timestamp = past.poses[-1].timestamp + 1.0 / past.rate

        offsets = self.future_offsets or (0.0,) * self.future_count

        current = Pose3D(joints=outputs[0], timestamp=timestamp)

        forecasts = [
            Pose3D(joints=joints, timestamp=timestamp + offset)
            for joints, offset in zip(outputs[1:], offsets)
        ]

        return current, forecasts


class BaselinePredictor:
    """Predictor adapter over a LinearForecaster, the depth frame is ignored"""
    def __init__(self, forecaster: LinearForecaster):
        self.forecaster = forecaster

    def predict(self, depth, intrinsics, past):
        return self.forecaster.predict(past, timestamp=depth.timestamp)
