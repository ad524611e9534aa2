"""
Autoregressive rollout

Streams a sequence through a predictor, feeding its own present-time estimates back as past
poses. Estimates are kept in `stride` interleaved rings so that the past of frame i is exactly
the estimates of frames i - stride m, m = 1..M, as in the training windows.
"""
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Iterable, Iterator, List, Optional, Protocol, Tuple

import numpy as np

from nowcast.exceptions import InvalidArgumentError
from nowcast.geometry import CameraIntrinsics, DepthFrame
from nowcast.sim.dataset import PoseSequence, frames_per_step
from nowcast.spdh import Pose3D


class Predictor(Protocol):
    """Anything that maps a frame and its past poses to a present pose and T forecasts"""
    def predict(self, depth: DepthFrame, intrinsics: CameraIntrinsics,
                past: PoseSequence) -> Tuple[Pose3D, List[Pose3D]]:
        ...


@dataclass
class RolloutState:
    """
    Buffer of estimated poses. warmup stays set until every past slot of the next frame holds
    a real estimate, i.e. for the first M stride frames.
    """
    past_count: int
    stride: int
    past_rate: float
    frame_counter: int = 0
    rings: List[Deque[Pose3D]] = field(default_factory=list)
    last_estimate: Optional[Pose3D] = None
    first_estimate: Optional[Pose3D] = None

    def __post_init__(self):
        if self.past_count < 1 or self.stride < 1:
            raise InvalidArgumentError("past_count and stride must be >= 1")

        if not self.rings:
            self.rings = [deque(maxlen=self.past_count) for _ in range(self.stride)]

    @property
    def warmup(self) -> bool:
        return self.frame_counter < self.past_count * self.stride

    def past(self, timestamp: float) -> Optional[PoseSequence]:
        """
        The M past poses of the next frame, oldest first, timestamped at 1/past_rate spacing
        before timestamp. Missing slots replicate the earliest available estimate. None before
        any estimate exists.

        Keyword arguments:
        timestamp -- timestamp of the next frame
        """
        ring = self.rings[self.frame_counter % self.stride]

        if not ring and self.first_estimate is None:
            return None

        available = list(ring) if ring else [self.first_estimate]

        slots = [available[0]] * (self.past_count - len(available)) + available

        return PoseSequence(
            poses=[
                Pose3D(
                    joints=pose.joints,
                    timestamp=timestamp - (self.past_count - index) / self.past_rate,
                    valid=pose.valid,
                )
                for index, pose in enumerate(slots)
            ],
            rate=self.past_rate,
        )

    def push(self, estimate: Pose3D) -> None:
        """
        Store the present estimate of the current frame and advance. Joints flagged invalid
        keep the coordinates of the previous estimate.

        Keyword arguments:
        estimate -- the decoded present pose
        """
        estimate = estimate.copy()

        if self.last_estimate is not None:
            invalid = ~estimate.valid

            estimate.joints[invalid] = self.last_estimate.joints[invalid]

        self.rings[self.frame_counter % self.stride].append(estimate)

        if self.frame_counter == 0:
            self.first_estimate = estimate

        self.last_estimate = estimate

        self.frame_counter += 1


@dataclass
class RolloutStep:
    """Outputs of one frame"""
    frame: int
    current: Pose3D
    forecasts: List[Pose3D]
    warmup: bool


def _zero_past(state: RolloutState, num_joints: int, timestamp: float) -> PoseSequence:
    return PoseSequence(
        poses=[
            Pose3D(joints=np.zeros((num_joints, 3)), timestamp=timestamp - (state.past_count - index) / state.past_rate)
            for index in range(state.past_count)
        ],
        rate=state.past_rate,
    )


def rollout(predictor: Predictor, frames: Iterable[DepthFrame], intrinsics: CameraIntrinsics,
            state: RolloutState, num_joints: int) -> Iterator[RolloutStep]:
    """
    Run the predictor over consecutive frames. The very first frame is bootstrapped: a pass
    with an all-zero past yields a first estimate, which is then replicated as the past of
    the real first pass.

    Keyword arguments:
    predictor -- the pose predictor
    frames -- depth frames in stream order
    intrinsics -- the camera model
    state -- the rollout buffer, updated in place
    num_joints -- J
    """
    for depth in frames:
        past = state.past(depth.timestamp)

        if past is None:
            bootstrap, _ = predictor.predict(depth, intrinsics, _zero_past(state, num_joints, depth.timestamp))

            state.first_estimate = bootstrap

            past = state.past(depth.timestamp)

        warmup = state.warmup

        frame = state.frame_counter

        current, forecasts = predictor.predict(depth, intrinsics, past)

        state.push(current)

        yield RolloutStep(frame=frame, current=current, forecasts=forecasts, warmup=warmup)


def new_state(past_count: int, fps: float, past_rate: float) -> RolloutState:
    """
    Empty rollout state for a stream at fps feeding past poses at past_rate

    Keyword arguments:
    past_count -- M
    fps -- stream rate in Hz
    past_rate -- past pose rate in Hz
    """
    return RolloutState(past_count=past_count, stride=frames_per_step(fps, past_rate), past_rate=past_rate)
