"""
Semi-perspective decoupled heatmaps: Gaussian rendering, depth binning and the
encode/decode round trip against its analytic error bound.
"""
import math

import numpy as np
import pytest

from nowcast.exceptions import InvalidArgumentError, OutOfRangeError
from nowcast.geometry import CameraIntrinsics, backproject_pixel
from nowcast.spdh import (
    HeatmapSpec,
    Pose3D,
    SPDHMaps,
    bin_to_z,
    codec_error_bound,
    decode_maps,
    encode_pose,
    render_gaussian,
    z_to_bin,
)


K = CameraIntrinsics(fx=500.0, fy=500.0, cx=160.0, cy=120.0, width=320, height=240)

SMALL_K = CameraIntrinsics(fx=55.0, fy=55.0, cx=31.5, cy=23.5, width=64, height=48)

BINNING = HeatmapSpec(map_height=200, map_width=8, z_min=0.5, z_max=4.5)


def _random_pose(rng: np.random.Generator, spec: HeatmapSpec, intrinsics: CameraIntrinsics, joints: int) -> Pose3D:
    """Joints whose projection stays within the sampled extent of the map grid"""
    u_max = (spec.map_width - 1) * spec.stride

    v_max = (spec.map_height - 1) * spec.stride

    points = [
        backproject_pixel(
            rng.uniform(0.0, u_max),
            rng.uniform(0.0, v_max),
            rng.uniform(spec.z_min, spec.z_max),
            intrinsics,
        ).as_array()
        for _ in range(joints)
    ]

    return Pose3D(joints=np.stack(points))


class TestPose3D:
    def test_defaults_to_all_valid(self):
        assert Pose3D(joints=np.zeros((4, 3))).valid.tolist() == [True] * 4

    def test_rejects_bad_shape(self):
        with pytest.raises(InvalidArgumentError):
            Pose3D(joints=np.zeros((4, 2)))

    def test_invalid_joints_may_be_non_finite(self):
        pose = Pose3D(joints=[[np.nan, 0.0, 0.0], [0.0, 0.0, 1.0]], valid=[False, True])

        assert pose.valid.tolist() == [False, True]

    def test_valid_joints_must_be_finite(self):
        with pytest.raises(InvalidArgumentError):
            Pose3D(joints=[[np.nan, 0.0, 0.0]])


class TestSpec:
    def test_bin_count_follows_map_height(self):
        spec = HeatmapSpec(map_height=24, map_width=32)

        assert spec.n_z_bins == 24

        assert spec.delta_z == pytest.approx(4.0 / 24)

    def test_bin_count_must_match_map_height(self):
        with pytest.raises(InvalidArgumentError):
            HeatmapSpec(map_height=24, map_width=32, n_z_bins=10)

    def test_for_input_divides_by_stride(self):
        spec = HeatmapSpec.for_input(96, 128, 4)

        assert spec.shape == (24, 32)

        assert spec.stride == 4

    def test_for_input_rejects_indivisible_input(self):
        with pytest.raises(InvalidArgumentError):
            HeatmapSpec.for_input(30, 32, 4)


class TestGaussian:
    spec = HeatmapSpec(map_height=32, map_width=32)

    def test_peak_at_center(self):
        heatmap = render_gaussian(10, 10, self.spec, 2.0)

        assert heatmap[10, 10] == pytest.approx(1.0)

        assert np.unravel_index(np.argmax(heatmap), heatmap.shape) == (10, 10)

    def test_value_two_pixels_away(self):
        assert render_gaussian(10, 10, self.spec, 2.0)[10, 12] == pytest.approx(math.exp(-0.5))

    def test_far_outside_center_is_all_zero(self):
        assert not render_gaussian(-100, -100, self.spec, 2.0).any()

    def test_non_positive_sigma_raises(self):
        with pytest.raises(InvalidArgumentError):
            render_gaussian(10, 10, self.spec, 0.0)


class TestBinning:
    @pytest.mark.parametrize("z, expected", [(0.5, 0), (2.0, 75), (4.4999, 199)])
    def test_z_to_bin(self, z, expected):
        assert z_to_bin(z, BINNING) == expected

    @pytest.mark.parametrize("z", [0.49, 4.5, 10.0])
    def test_out_of_range_depth_raises(self, z):
        with pytest.raises(OutOfRangeError):
            z_to_bin(z, BINNING)

    @pytest.mark.parametrize("index, expected", [(0, 0.51), (75, 2.01)])
    def test_bin_to_z(self, index, expected):
        assert bin_to_z(index, BINNING) == pytest.approx(expected)

    def test_half_bin_quantization(self):
        for z in np.random.default_rng(1).uniform(0.5, 4.5, 500):
            assert abs(bin_to_z(z_to_bin(z, BINNING), BINNING) - z) <= BINNING.delta_z / 2 + 1e-12

    def test_bin_outside_grid_raises(self):
        with pytest.raises(InvalidArgumentError):
            bin_to_z(200, BINNING)


class TestEncode:
    spec = HeatmapSpec.for_input(240, 320, 1)

    def test_joint_on_optical_axis(self):
        maps = encode_pose(Pose3D(joints=[[0.0, 0.0, 2.5]]), K, self.spec)

        assert np.unravel_index(np.argmax(maps.uv[0]), self.spec.shape) == (120, 160)

        row, col = np.unravel_index(np.argmax(maps.uz[0]), self.spec.shape)

        assert abs(row - self.spec.n_z_bins // 2) <= 1

        assert col == 160

    def test_invalid_joints_get_zero_maps(self):
        pose = Pose3D(joints=[[0.0, 0.0, 2.5], [0.0, 0.0, 2.5]], valid=[False, False])

        maps = encode_pose(pose, K, self.spec)

        assert not maps.uv.any()

        assert not maps.uz.any()

    def test_depth_out_of_range_names_the_joint(self):
        pose = Pose3D(joints=[[0.0, 0.0, 2.0], [0.0, 0.0, 6.0]])

        with pytest.raises(OutOfRangeError) as raised:
            encode_pose(pose, K, self.spec)

        assert raised.value.joint_index == 1

    def test_projection_outside_image_raises(self):
        with pytest.raises(OutOfRangeError):
            encode_pose(Pose3D(joints=[[5.0, 0.0, 1.0]]), K, self.spec)

    def test_stacked_layout_puts_uv_first(self):
        maps = encode_pose(Pose3D(joints=[[0.0, 0.0, 2.5], [0.1, 0.0, 2.5]]), K, self.spec)

        stacked = maps.stacked()

        assert stacked.shape == (4,) + self.spec.shape

        np.testing.assert_array_equal(stacked[1], maps.uv[1])

        np.testing.assert_array_equal(stacked[2], maps.uz[0])


class TestDecode:
    spec = HeatmapSpec.for_input(48, 64, 1)

    def test_all_zero_maps_are_invalid(self):
        zeros = np.zeros((3,) + self.spec.shape)

        pose = decode_maps(SPDHMaps(uv=zeros, uz=zeros, spec=self.spec), SMALL_K)

        assert not pose.valid.any()

    def test_ties_resolve_to_first_row_major_index(self):
        constant = np.full((1,) + self.spec.shape, 0.5)

        pose = decode_maps(SPDHMaps(uv=constant, uz=constant, spec=self.spec), SMALL_K)

        expected = backproject_pixel(0.0, 0.0, bin_to_z(0, self.spec), SMALL_K).as_array()

        np.testing.assert_allclose(pose.joints[0], expected)

        assert pose.valid[0]

    def test_maps_without_spec_raise(self):
        zeros = np.zeros((2,) + self.spec.shape)

        with pytest.raises(InvalidArgumentError):
            decode_maps(SPDHMaps(uv=zeros, uz=zeros), SMALL_K)

    def test_timestamp_is_carried(self):
        zeros = np.zeros((1,) + self.spec.shape)

        assert decode_maps(SPDHMaps(uv=zeros, uz=zeros, spec=self.spec), SMALL_K, timestamp=2.5).timestamp == 2.5


class TestRoundTrip:
    @pytest.mark.parametrize("stride, n_poses", [(1, 1000), (4, 300)])
    def test_error_within_analytic_bound(self, stride, n_poses):
        spec = HeatmapSpec.for_input(SMALL_K.height, SMALL_K.width, stride)

        bound = codec_error_bound(spec, SMALL_K)

        rng = np.random.default_rng(42)

        worst = 0.0

        for _ in range(n_poses):
            pose = _random_pose(rng, spec, SMALL_K, joints=3)

            decoded = decode_maps(encode_pose(pose, SMALL_K, spec), SMALL_K)

            assert decoded.valid.all()

            worst = max(worst, float(np.max(np.linalg.norm(decoded.joints - pose.joints, axis=1))))

        assert worst <= bound + 1e-9

    def test_bound_grows_with_stride(self):
        fine = codec_error_bound(HeatmapSpec.for_input(48, 64, 1), SMALL_K)

        coarse = codec_error_bound(HeatmapSpec.for_input(48, 64, 4), SMALL_K)

        assert 0 < fine < coarse
