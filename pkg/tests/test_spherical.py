"""
地理令牌系统 - 球面旋转编码测试
/tests/test_spherical.py
"""
import math

import numpy as np
import pytest

from geotoken.backend.encoding.spherical import (
    GeoAngles,
    GeoRotary,
    RopeFrequencies,
    apply_geo_rotation,
    axis_rotation_x,
    axis_rotation_z,
    euler_rotation,
    geo_attention_score,
    geo_blocks,
    relative_geo_rotation,
    rope_attention_score,
    rope_frequencies,
    rope_rotate,
    sinusoidal_encoding,
    spherical_block,
)
from geotoken.backend.errors import DomainError, InvalidDimensionError


def dense_rotation(dim: int, angles: GeoAngles) -> np.ndarray:
    """显式构造 dim x dim 块对角矩阵, 作为对照"""
    block = spherical_block(angles)
    dense = np.zeros((dim, dim))
    for start in range(0, dim, 3):
        dense[start:start + 3, start:start + 3] = block
    return dense


def random_angles(rng: np.random.Generator) -> GeoAngles:
    return GeoAngles(rng.uniform(-math.pi / 2, math.pi / 2), rng.uniform(-math.pi, math.pi))


class TestGeoAngles:

    def test_from_degrees(self):
        a = GeoAngles.from_degrees(90.0, -90.0)
        assert a.lat_phi == pytest.approx(math.pi / 2)
        assert a.lon_theta == pytest.approx(-math.pi / 2)
        assert GeoAngles.from_degrees(0.0, 270.0).lon_theta == pytest.approx(-math.pi / 2)

    def test_longitude_normalized(self):
        a = GeoAngles(0.3, 3 * math.pi + 0.5)
        assert -math.pi <= a.lon_theta < math.pi
        assert a.lon_theta == pytest.approx(-math.pi + 0.5)

    def test_latitude_out_of_range(self):
        with pytest.raises(DomainError):
            GeoAngles(math.pi / 2 + 1e-6, 0.0)

    def test_non_finite_rejected(self):
        with pytest.raises(DomainError):
            GeoAngles(float("nan"), 0.0)

    def test_shifted_wraps_longitude(self):
        a = GeoAngles(0.1, math.pi - 0.1).shifted(dlon=0.3)
        assert a.lon_theta == pytest.approx(-math.pi + 0.2)

    @pytest.mark.parametrize("theta", [
        math.nextafter(-math.pi, -4.0),
        math.nextafter(math.pi, 4.0),
        math.pi,
        -3 * math.pi,
        math.nextafter(3 * math.pi, 0.0),
    ])
    def test_longitude_never_reaches_pi(self, theta):
        lon = GeoAngles(0.0, theta).lon_theta
        assert -math.pi <= lon < math.pi
        assert GeoAngles(0.0, 0.0).shifted(dlon=theta).lon_theta < math.pi

    def test_to_degrees(self):
        lat, lon = GeoAngles.from_degrees(46.4157, 21.0756).to_degrees()
        assert lat == pytest.approx(46.4157, abs=1e-12)
        assert lon == pytest.approx(21.0756, abs=1e-12)


class TestSinusoidal:

    def test_position_zero(self):
        np.testing.assert_array_equal(sinusoidal_encoding(0, 6), [0, 1, 0, 1, 0, 1])

    def test_position_one(self):
        np.testing.assert_allclose(sinusoidal_encoding(1, 2), [0.841471, 0.540302], atol=1e-6)
        np.testing.assert_allclose(
            sinusoidal_encoding(1, 4),
            [math.sin(1), math.cos(1), math.sin(0.01), math.cos(0.01)],
            atol=1e-15,
        )

    def test_bounded(self):
        enc = sinusoidal_encoding(12345, 64)
        assert np.all(np.abs(enc) <= 1.0)

    @pytest.mark.parametrize("dim", [0, 3, 7])
    def test_invalid_dimension(self, dim):
        with pytest.raises(InvalidDimensionError):
            sinusoidal_encoding(1, dim)


class TestRope:

    def test_frequencies(self):
        assert rope_frequencies(2).thetas == pytest.approx((0.01,), rel=1e-14)
        assert rope_frequencies(4).thetas == pytest.approx((0.1, 0.001), rel=1e-14)
        expected = tuple(10000.0 ** (-e / 8) for e in (1, 3, 5, 7))
        assert rope_frequencies(8).thetas == pytest.approx(expected, rel=1e-14)

    def test_odd_dimension(self):
        with pytest.raises(InvalidDimensionError):
            rope_frequencies(5)

    def test_frequencies_must_decrease(self):
        with pytest.raises(DomainError):
            RopeFrequencies(dim=4, thetas=(0.1, 0.2))

    def test_zero_rotation(self, rng):
        x = rng.normal(size=8)
        np.testing.assert_array_equal(rope_rotate(x, 0, rope_frequencies(8)), x)

    def test_quarter_turn(self):
        freqs = RopeFrequencies(dim=2, thetas=(math.pi / 2,))
        np.testing.assert_allclose(rope_rotate(np.array([1.0, 0.0]), 1, freqs), [0.0, 1.0], atol=1e-15)

    def test_norm_preserved(self, rng):
        x = rng.normal(size=8)
        out = rope_rotate(x, 7, rope_frequencies(8))
        assert np.linalg.norm(out) == pytest.approx(np.linalg.norm(x), abs=1e-12)

    def test_composition(self, rng):
        freqs = rope_frequencies(8)
        x = rng.normal(size=8)
        np.testing.assert_allclose(rope_rotate(rope_rotate(x, 3, freqs), 5, freqs),
                                   rope_rotate(x, 8, freqs), atol=1e-12)

    def test_score_depends_on_offset_only(self, rng):
        freqs = rope_frequencies(8)
        q, k = rng.normal(size=8), rng.normal(size=8)
        assert rope_attention_score(q, k, 9, 4, freqs) == pytest.approx(
            rope_attention_score(q, k, 25, 20, freqs), abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidDimensionError):
            rope_rotate(np.ones(6), 1, rope_frequencies(8))


class TestRotationBlocks:

    def test_euler_identity(self):
        np.testing.assert_array_equal(euler_rotation(0.0, 0.0, 0.0), np.eye(3))

    def test_euler_quarter_x(self):
        np.testing.assert_allclose(euler_rotation(math.pi / 2, 0.0, 0.0),
                                   [[1, 0, 0], [0, 0, -1], [0, 1, 0]], atol=1e-15)

    def test_spherical_examples(self):
        np.testing.assert_array_equal(spherical_block(GeoAngles(0.0, 0.0)), np.eye(3))
        np.testing.assert_allclose(spherical_block(GeoAngles(0.0, math.pi / 2)),
                                   [[0, -1, 0], [1, 0, 0], [0, 0, 1]], atol=1e-15)
        np.testing.assert_allclose(spherical_block(GeoAngles(math.pi / 2, 0.0)),
                                   [[1, 0, 0], [0, 0, -1], [0, 1, 0]], atol=1e-15)

    def test_orthonormal_over_many_angles(self, rng):
        worst_orth, worst_det = 0.0, 0.0
        for _ in range(10_000):
            m = spherical_block(random_angles(rng))
            worst_orth = max(worst_orth, np.abs(m.T @ m - np.eye(3)).max())
            worst_det = max(worst_det, abs(np.linalg.det(m) - 1.0))
        assert worst_orth < 1e-12
        assert worst_det < 1e-12

    def test_euler_with_zero_psi_matches_exactly(self, rng):
        for _ in range(200):
            a = random_angles(rng)
            np.testing.assert_array_equal(euler_rotation(a.lat_phi, 0.0, a.lon_theta), spherical_block(a))

    def test_euler_is_rotation(self, rng):
        m = euler_rotation(0.4, -1.1, 2.7)
        np.testing.assert_allclose(m.T @ m, np.eye(3), atol=1e-12)
        assert np.linalg.det(m) == pytest.approx(1.0, abs=1e-12)

    def test_factorization(self, rng):
        for _ in range(100):
            a = random_angles(rng)
            np.testing.assert_allclose(spherical_block(a),
                                       axis_rotation_z(a.lon_theta) @ axis_rotation_x(a.lat_phi), atol=1e-14)

    def test_geo_blocks_identity_for_missing_tags(self):
        blocks = geo_blocks([None, GeoAngles(0.2, 0.3), None])
        np.testing.assert_array_equal(blocks[0], np.eye(3))
        np.testing.assert_array_equal(blocks[2], np.eye(3))
        np.testing.assert_array_equal(blocks[1], spherical_block(GeoAngles(0.2, 0.3)))


class TestGeoRotary:

    def test_dimension_must_divide_by_three(self):
        with pytest.raises(InvalidDimensionError):
            GeoRotary(28)

    def test_identity_angles(self, rng):
        x = rng.normal(size=27)
        np.testing.assert_array_equal(apply_geo_rotation(x, GeoAngles(0.0, 0.0), GeoRotary(27)), x)

    def test_unit_vector(self):
        out = apply_geo_rotation(np.array([1.0, 0.0, 0.0]), GeoAngles(0.0, math.pi / 2), GeoRotary(3))
        np.testing.assert_allclose(out, [0.0, 1.0, 0.0], atol=1e-15)

    def test_length_mismatch(self):
        with pytest.raises(InvalidDimensionError):
            apply_geo_rotation(np.ones(24), GeoAngles(0.1, 0.1), GeoRotary(27))

    @pytest.mark.parametrize("dim", [3, 27, 300])
    def test_matches_dense_oracle(self, rng, dim):
        rot = GeoRotary(dim)
        for _ in range(1000):
            x = rng.normal(size=dim)
            angles = random_angles(rng)
            out = apply_geo_rotation(x, angles, rot)
            np.testing.assert_allclose(out, dense_rotation(dim, angles) @ x, rtol=0, atol=1e-12)
            assert np.linalg.norm(out) == pytest.approx(np.linalg.norm(x), abs=1e-12)

    def test_apply_rows_matches_per_row(self, rng):
        rot = GeoRotary(9)
        x = rng.normal(size=(4, 9))
        tags = [random_angles(rng) for _ in range(4)]
        out = rot.apply_rows(x, geo_blocks(tags))
        for row, angles in enumerate(tags):
            np.testing.assert_allclose(out[row], rot.apply(x[row], angles), atol=1e-14)


class TestGeoAttentionScore:

    def test_identical_tags_give_raw_product(self, rng):
        rot = GeoRotary(27)
        q, k = rng.normal(size=27), rng.normal(size=27)
        a = random_angles(rng)
        assert geo_attention_score(q, k, a, a, rot) == pytest.approx(float(q @ k), abs=1e-12)

    def test_common_longitude_shift(self, rng):
        rot = GeoRotary(27)
        q, k = rng.normal(size=27), rng.normal(size=27)
        aq, ak = random_angles(rng), random_angles(rng)
        base = geo_attention_score(q, k, aq, ak, rot)
        shifted = geo_attention_score(q, k, aq.shifted(dlon=0.77), ak.shifted(dlon=0.77), rot)
        assert shifted == pytest.approx(base, abs=1e-9)

    def test_common_latitude_shift_changes_score(self):
        rot = GeoRotary(6)
        q = np.array([0.3, -1.2, 0.8, 1.5, 0.1, -0.4])
        k = np.array([-0.7, 0.9, 0.2, 0.5, -1.1, 0.6])
        aq, ak = GeoAngles(0.2, -0.5), GeoAngles(-0.4, 1.1)
        base = geo_attention_score(q, k, aq, ak, rot)
        shifted = geo_attention_score(q, k, aq.shifted(dlat=0.3), ak.shifted(dlat=0.3), rot)
        assert abs(shifted - base) > 1e-6

    def test_matches_dense_oracle(self, rng):
        rot = GeoRotary(27)
        q, k = rng.normal(size=27), rng.normal(size=27)
        aq, ak = random_angles(rng), random_angles(rng)
        expected = float((dense_rotation(27, aq) @ q) @ (dense_rotation(27, ak) @ k))
        assert geo_attention_score(q, k, aq, ak, rot) == pytest.approx(expected, abs=1e-12)

    def test_relative_rotation_form(self, rng):
        rot = GeoRotary(27)
        q, k = rng.normal(size=27), rng.normal(size=27)
        aq, ak = random_angles(rng), random_angles(rng)
        k_rel = rot.apply_block(k, relative_geo_rotation(aq, ak))
        assert geo_attention_score(q, k, aq, ak, rot) == pytest.approx(float(q @ k_rel), abs=1e-12)
