"""
Capsule Depth Rendering

Ray casts the arm as sphere-swept segments between consecutive keypoints. Pixel rays are
d = ((u - cx) / fx, (v - cy) / fy, 1), so the ray parameter of a hit is its depth.
"""
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from nowcast.geometry import DEFAULT_MAX_RANGE, INVALID_DEPTH, CameraIntrinsics, DepthFrame
from nowcast.sim.kinematics import ArmModel
from nowcast.spdh import Pose3D


DEGENERATE_LENGTH = 1e-12


@dataclass(frozen=True)
class SceneConfig:
    """
    Static scene around the arm. Planes are optional; hits beyond max_range are invalid.
    """
    ground_height: Optional[float] = None
    back_plane_depth: Optional[float] = None
    max_range: float = DEFAULT_MAX_RANGE

    def to_dict(self) -> Dict:
        return {
            "ground_height": self.ground_height,
            "back_plane_depth": self.back_plane_depth,
            "max_range": self.max_range,
        }


def pixel_rays(intrinsics: CameraIntrinsics) -> np.ndarray:
    """
    Unnormalized ray directions with unit z component, shape (H, W, 3)

    Keyword arguments:
    intrinsics -- the camera model
    """
    rows, cols = np.indices(intrinsics.shape, dtype=np.float64)

    return np.stack([
        (cols - intrinsics.cx) / intrinsics.fx,
        (rows - intrinsics.cy) / intrinsics.fy,
        np.ones(intrinsics.shape),
    ], axis=-1)


def _nearest_root(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    # smallest positive root of a t^2 + b t + c = 0, inf when there is none
    discriminant = b * b - 4.0 * a * c

    hit = (discriminant >= 0) & (a > 0)

    root = np.sqrt(np.where(hit, discriminant, 0.0))

    with np.errstate(divide="ignore", invalid="ignore"):
        near = np.where(hit, (-b - root) / (2.0 * a), np.inf)

        far = np.where(hit, (-b + root) / (2.0 * a), np.inf)

    return np.where(near > 0, near, np.where(far > 0, far, np.inf))


def _sphere_hits(rays: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    a = np.einsum("...i,...i->...", rays, rays)

    b = -2.0 * (rays @ center)

    c = np.full(a.shape, center @ center - radius ** 2)

    return _nearest_root(a, b, c)


def _cylinder_hits(rays: np.ndarray, start: np.ndarray, end: np.ndarray, radius: float) -> np.ndarray:
    axis = end - start

    length = np.linalg.norm(axis)

    if length < DEGENERATE_LENGTH:
        return np.full(rays.shape[:-1], np.inf)

    axis = axis / length

    offset = -start

    rays_perp = rays - (rays @ axis)[..., None] * axis

    offset_perp = offset - (offset @ axis) * axis

    a = np.einsum("...i,...i->...", rays_perp, rays_perp)

    b = 2.0 * (rays_perp @ offset_perp)

    c = np.full(a.shape, offset_perp @ offset_perp - radius ** 2)

    t = _nearest_root(a, b, c)

    with np.errstate(invalid="ignore"):
        along = np.where(np.isfinite(t), (t[..., None] * rays - start) @ axis, -1.0)

    return np.where((along >= 0) & (along <= length), t, np.inf)


def render_capsules(starts: np.ndarray, ends: np.ndarray, radius: float, intrinsics: CameraIntrinsics,
                     timestamp: float = 0.0) -> DepthFrame:
    """
    Depth of a set of capsules, nearest hit wins, misses are invalid. A capsule whose start
    equals its end renders as a sphere.

    Keyword arguments:
    starts -- segment start points, shape (N, 3)
    ends -- segment end points, shape (N, 3)
    radius -- capsule radius in meters
    intrinsics -- the camera model
    timestamp -- timestamp of the produced frame (default: 0.0)
    """
    rays = pixel_rays(intrinsics)

    depth = np.full(intrinsics.shape, np.inf)

    for start, end in zip(np.asarray(starts, dtype=np.float64).reshape(-1, 3),
                          np.asarray(ends, dtype=np.float64).reshape(-1, 3)):
        depth = np.minimum(depth, _sphere_hits(rays, start, radius))

        depth = np.minimum(depth, _sphere_hits(rays, end, radius))

        depth = np.minimum(depth, _cylinder_hits(rays, start, end, radius))

    depth[~np.isfinite(depth)] = INVALID_DEPTH

    return DepthFrame(values=depth.astype(np.float32), timestamp=timestamp)


def render_depth(model: ArmModel, pose: Pose3D, intrinsics: CameraIntrinsics,
                 scene: Optional[SceneConfig] = None) -> DepthFrame:
    """
    Depth image of an arm pose, optionally in front of a ground plane and a back plane

    Keyword arguments:
    model -- the arm, provides the capsule radius
    pose -- keypoints produced by forward_kinematics for this arm
    intrinsics -- the camera model
    scene -- static scene planes and range limit (default: arm only, default max range)
    """
    scene = scene or SceneConfig()

    rays = pixel_rays(intrinsics)

    arm = render_capsules(pose.joints[:-1], pose.joints[1:], model.link_radius, intrinsics).values.astype(np.float64)

    depth = np.where(arm > INVALID_DEPTH, arm, np.inf)

    if scene.ground_height is not None and scene.ground_height > 0:
        with np.errstate(divide="ignore"):
            ground = np.where(rays[..., 1] > 0, scene.ground_height / rays[..., 1], np.inf)

        depth = np.minimum(depth, ground)

    if scene.back_plane_depth is not None:
        depth = np.minimum(depth, scene.back_plane_depth)

    depth[~np.isfinite(depth) | (depth > scene.max_range)] = INVALID_DEPTH

    return DepthFrame(values=depth.astype(np.float32), timestamp=pose.timestamp)
