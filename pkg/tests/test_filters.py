import numpy as np
import pytest

from app.errors import DomainError
from app.filters.blur import gaussian_blur, gaussian_kernel
from app.filters.dihedral import DIHEDRAL_ORDER, apply_dihedral, inverse_element, random_dihedral
from app.filters.stain import StainMatrix, od_to_rgb, rgb_to_od, sample_stain_factors, stain_jitter


class TestStain:

    def test_od_round_trip_is_exact_for_every_level(self):
        levels = np.arange(256, dtype=np.uint8)
        np.testing.assert_array_equal(od_to_rgb(rgb_to_od(levels)), levels)

    def test_white_has_zero_density(self):
        assert rgb_to_od(np.array([255]))[0] == pytest.approx(0.0, abs=1e-15)

    def test_black_density(self):
        assert rgb_to_od(np.array([0]))[0] == pytest.approx(np.log10(256.0), abs=1e-12)

    def test_white_survives_any_factors(self):
        white = np.full((2, 2, 3), 255, dtype=np.uint8)
        np.testing.assert_array_equal(stain_jitter(white, (1.7, 0.3)), white)

    def test_basis_is_orthonormal_residual(self):
        matrix = StainMatrix.from_vectors()
        np.testing.assert_allclose(np.linalg.norm(matrix.rows, axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(matrix.rows @ matrix.inverse, np.eye(3), atol=1e-12)
        assert abs(matrix.rows[2] @ matrix.rows[0]) <= 1e-12
        assert abs(matrix.rows[2] @ matrix.rows[1]) <= 1e-12

    def test_parallel_vectors_are_rejected(self):
        with pytest.raises(ValueError):
            StainMatrix.from_vectors((0.6, 0.7, 0.3), (1.2, 1.4, 0.6))

    def test_unit_factors_keep_the_patch(self, generator):
        pixels = generator.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
        out = stain_jitter(pixels, (1.0, 1.0))
        assert out.dtype == np.uint8 and out.shape == pixels.shape
        assert np.max(np.abs(out.astype(int) - pixels.astype(int))) <= 1

    def test_factors_are_clamped(self, generator):
        pixels = generator.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
        np.testing.assert_array_equal(stain_jitter(pixels, (5.0, -1.0)), stain_jitter(pixels, (1.8, 0.2)))

    def test_stronger_hematoxylin_darkens(self):
        hematoxylin = StainMatrix.from_vectors().rows[0]
        pixels = np.broadcast_to(od_to_rgb(0.5 * hematoxylin), (4, 4, 3)).copy()
        assert stain_jitter(pixels, (1.5, 1.0)).astype(int).sum() < pixels.astype(int).sum()

    def test_factor_sampling(self, generator):
        assert sample_stain_factors(generator, 0.0) == (1.0, 1.0)
        factors = np.array([sample_stain_factors(generator, 0.1) for _ in range(2000)])
        assert abs(factors.mean() - 1.0) < 0.01
        assert abs(factors.std() - 0.1) < 0.01


class TestDihedral:

    def test_eight_distinct_elements(self, generator):
        pixels = generator.integers(0, 256, size=(6, 6, 3), dtype=np.uint8)
        images = {apply_dihedral(pixels, e).tobytes() for e in range(DIHEDRAL_ORDER)}
        assert len(images) == 8

    def test_identity_and_quarter_turn(self):
        pixels = np.arange(4).reshape(2, 2)
        np.testing.assert_array_equal(apply_dihedral(pixels, 0), pixels)
        np.testing.assert_array_equal(apply_dihedral(pixels, 1), [[2, 0], [3, 1]])

    def test_half_turn_is_an_involution(self, generator):
        pixels = generator.integers(0, 256, size=(5, 5, 3), dtype=np.uint8)
        np.testing.assert_array_equal(apply_dihedral(apply_dihedral(pixels, 2), 2), pixels)

    @pytest.mark.parametrize("element", range(DIHEDRAL_ORDER))
    def test_inverse(self, element, generator):
        pixels = generator.integers(0, 256, size=(5, 5, 3), dtype=np.uint8)
        restored = apply_dihedral(apply_dihedral(pixels, element), inverse_element(element))
        np.testing.assert_array_equal(restored, pixels)

    def test_non_square_patch(self):
        with pytest.raises(DomainError):
            apply_dihedral(np.zeros((4, 5, 3), dtype=np.uint8), 1)

    def test_element_range(self):
        with pytest.raises(DomainError):
            apply_dihedral(np.zeros((4, 4, 3), dtype=np.uint8), 8)

    def test_random_element_is_a_group_member(self, generator):
        pixels = generator.integers(0, 256, size=(6, 6, 3), dtype=np.uint8)
        members = {apply_dihedral(pixels, e).tobytes() for e in range(DIHEDRAL_ORDER)}
        for _ in range(20):
            assert random_dihedral(pixels, generator).tobytes() in members


class TestBlur:

    @pytest.mark.parametrize("radius", [0.3, 1.0, 2.0])
    def test_kernel_is_normalised(self, radius):
        kernel = gaussian_kernel(radius)
        assert kernel.sum() == pytest.approx(1.0, abs=1e-12)
        assert kernel.size == 2 * int(np.ceil(3 * radius)) + 1
        np.testing.assert_allclose(kernel, kernel[::-1])

    def test_tiny_radius_is_identity(self, generator):
        pixels = generator.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
        np.testing.assert_array_equal(gaussian_blur(pixels, 0.04), pixels)

    def test_constant_patch_is_unchanged(self):
        pixels = np.full((10, 10, 3), 123, dtype=np.uint8)
        np.testing.assert_array_equal(gaussian_blur(pixels, 1.7), pixels)

    def test_blur_smooths(self, generator):
        pixels = generator.integers(0, 256, size=(32, 32, 3), dtype=np.uint8)
        out = gaussian_blur(pixels, 2.0)
        assert out.dtype == np.uint8 and out.shape == pixels.shape
        assert out.astype(float).std() < pixels.astype(float).std()

    def test_negative_radius(self):
        with pytest.raises(ValueError):
            gaussian_blur(np.zeros((4, 4, 3), dtype=np.uint8), -1.0)
