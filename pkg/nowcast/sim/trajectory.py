"""
Pick-and-place style joint trajectories: random waypoints within the joint limits, joined by
minimum-jerk segments with a hold at every waypoint.
"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from nowcast.exceptions import InvalidArgumentError
from nowcast.sim.kinematics import ArmModel


def minimum_jerk(tau: np.ndarray) -> np.ndarray:
    """
    Normalized minimum-jerk profile s(tau) = 10 tau^3 - 15 tau^4 + 6 tau^5. Velocity and
    acceleration vanish at both ends.

    Keyword arguments:
    tau -- normalized time, clipped to [0, 1]
    """
    tau = np.clip(tau, 0.0, 1.0)

    return tau ** 3 * (10.0 - 15.0 * tau + 6.0 * tau ** 2)


@dataclass(frozen=True)
class TrajectorySpec:
    """
    Waypoint schedule of a trajectory. With n_waypoints unset, waypoints keep coming until the
    requested duration is covered.
    """
    n_waypoints: Optional[int] = None
    waypoint_hold: float = 0.3
    segment_duration: Tuple[float, float] = (1.0, 2.5)
    interpolation: str = "minimum-jerk"

    def __post_init__(self):
        low, high = self.segment_duration

        if not 0 < low <= high:
            raise InvalidArgumentError(f"segment duration range must satisfy 0 < min <= max, got {self.segment_duration}")

        if self.waypoint_hold < 0:
            raise InvalidArgumentError(f"waypoint hold must be non-negative, got {self.waypoint_hold}")

        if self.n_waypoints is not None and self.n_waypoints < 1:
            raise InvalidArgumentError(f"n_waypoints must be >= 1, got {self.n_waypoints}")

        if self.interpolation != "minimum-jerk":
            raise InvalidArgumentError(f"unsupported interpolation '{self.interpolation}'")

    def to_dict(self) -> Dict:
        return {
            "n_waypoints": self.n_waypoints,
            "waypoint_hold": self.waypoint_hold,
            "segment_duration": list(self.segment_duration),
            "interpolation": self.interpolation,
        }

    @classmethod
    def from_dict(cls, values: Dict) -> "TrajectorySpec":
        return cls(
            n_waypoints=values.get("n_waypoints"),
            waypoint_hold=values.get("waypoint_hold", 0.3),
            segment_duration=tuple(values.get("segment_duration", (1.0, 2.5))),
            interpolation=values.get("interpolation", "minimum-jerk"),
        )


@dataclass
class _Segment:
    start: float
    duration: float
    hold: float
    source: np.ndarray
    target: np.ndarray

    @property
    def end(self) -> float:
        return self.start + self.duration + self.hold


def _plan_segments(model: ArmModel, spec: TrajectorySpec, total: float, rng: np.random.Generator) -> List[_Segment]:
    low = model.joint_limits[:, 0]

    high = model.joint_limits[:, 1]

    current = rng.uniform(low, high)

    segments = []

    clock = 0.0

    while clock <= total:
        if spec.n_waypoints is not None and len(segments) >= spec.n_waypoints:
            break

        target = rng.uniform(low, high)

        duration = float(rng.uniform(*spec.segment_duration))

        segments.append(_Segment(start=clock, duration=duration, hold=spec.waypoint_hold, source=current, target=target))

        clock += duration + spec.waypoint_hold

        current = target

    return segments


def sample_trajectory(model: ArmModel, spec: TrajectorySpec, duration: float, rate: float,
                      seed: int) -> List[np.ndarray]:
    """
    Sample joint angle vectors at 1/rate spacing. Deterministic in seed.

    Keyword arguments:
    model -- the arm providing joint limits
    spec -- the waypoint schedule
    duration -- trajectory length in seconds
    rate -- sampling rate in Hz
    seed -- seed of the waypoint and timing draws
    """
    if not (duration > 0 and rate > 0):
        raise InvalidArgumentError(f"duration and rate must be positive, got {duration} s at {rate} Hz")

    rng = np.random.default_rng(seed)

    segments = _plan_segments(model, spec, duration, rng)

    n_samples = int(round(duration * rate))

    angles = []

    cursor = 0

    for index in range(n_samples):
        time = index / rate

        while cursor < len(segments) - 1 and time >= segments[cursor].end:
            cursor += 1

        segment = segments[cursor]

        progress = minimum_jerk(np.asarray((time - segment.start) / segment.duration))

        angles.append(segment.source + float(progress) * (segment.target - segment.source))

    return angles
