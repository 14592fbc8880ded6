import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsegen.basis import (apply, apply_inverse, dct_basis, haar_basis, identity_basis, kron_basis,
                             make_basis, padded_haar_basis)

R2 = 1 / math.sqrt(2)


class TestDct:
    def test_two_point(self):
        np.testing.assert_allclose(dct_basis(2).matrix, [[R2, R2], [R2, -R2]], atol=1e-15)

    def test_one_point(self):
        np.testing.assert_array_equal(dct_basis(1).matrix, [[1.0]])

    def test_eight_point_orthonormal(self):
        assert dct_basis(8).orthonormality_error() < 1e-12

    def test_matches_scipy_orthonormal_dct(self):
        from scipy.fft import dct

        v = np.random.default_rng(0).normal(size=16)
        np.testing.assert_allclose(apply(dct_basis(16), v), dct(v, type=2, norm="ortho"), atol=1e-12)

    def test_zero_size(self):
        with pytest.raises(ValueError):
            dct_basis(0)

    def test_constant_maps_to_dc(self):
        np.testing.assert_allclose(apply(dct_basis(2), [1.0, 1.0]), [math.sqrt(2), 0.0], atol=1e-15)


class TestHaar:
    def test_two_point(self):
        np.testing.assert_allclose(haar_basis(2).matrix, [[R2, R2], [R2, -R2]], atol=1e-15)

    def test_four_point_rows(self):
        h = haar_basis(4).matrix
        rows = [tuple(np.round(r, 12)) for r in h]
        assert (0.5, 0.5, 0.5, 0.5) in rows
        assert (0.5, 0.5, -0.5, -0.5) in rows
        assert haar_basis(4).orthonormality_error() < 1e-12

    def test_non_power_of_two(self):
        with pytest.raises(ValueError):
            haar_basis(3)

    def test_piecewise_constant_has_two_coefficients(self):
        c = apply(haar_basis(4), [1.0, 1.0, 0.0, 0.0])
        assert np.sum(np.abs(c) > 1e-12) == 2

    @pytest.mark.parametrize("n", [3, 5, 28])
    def test_padded_variant_orthonormal(self, n):
        b = padded_haar_basis(n)
        assert b.orthonormality_error() < 1e-12
        # coarsest row stays constant up to sign
        assert np.ptp(b.matrix[0]) < 1e-12


@pytest.mark.parametrize("kind", ["dct", "haar"])
@pytest.mark.parametrize("n", [2, 4, 8, 64, 256])
def test_orthonormality(kind, n):
    b = dct_basis(n) if kind == "dct" else haar_basis(n)
    assert b.orthonormality_error() <= 1e-10


class TestApply:
    def test_identity(self):
        v = np.array([1.0, -2.0, 3.0])
        np.testing.assert_array_equal(apply(identity_basis(3), v), v)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            apply(dct_basis(4), np.ones(3))
        with pytest.raises(ValueError):
            apply_inverse(dct_basis(4), np.ones(5))

    @settings(max_examples=30, deadline=None)
    @given(st.sampled_from(["dct", "haar"]), st.sampled_from([4, 16, 64]), st.integers(0, 2**32 - 1))
    def test_isometry_and_round_trip(self, kind, n, seed):
        b = make_basis(kind, n, image=False)
        v = np.random.default_rng(seed).normal(size=n)
        c = apply(b, v)
        assert np.linalg.norm(c) == pytest.approx(np.linalg.norm(v), rel=1e-10)
        np.testing.assert_allclose(apply_inverse(b, c), v, atol=1e-9)

    def test_batched_rows(self):
        b = dct_basis(8)
        v = np.random.default_rng(1).normal(size=(3, 8))
        np.testing.assert_allclose(b.forward(v), np.stack([apply(b, r) for r in v]), atol=1e-14)


class TestImageBases:
    @pytest.mark.parametrize("kind", ["dct", "haar"])
    def test_kronecker_matches_separable_transform(self, kind):
        b1 = dct_basis(4) if kind == "dct" else haar_basis(4)
        b2 = kron_basis(b1)
        img = np.random.default_rng(3).normal(size=(4, 4))
        # separable 2-D transform: B1 X B1^T, flattened row-major
        expected = (b1.matrix @ img @ b1.matrix.T).ravel()
        np.testing.assert_allclose(apply(b2, img.ravel()), expected, atol=1e-9)

    @pytest.mark.parametrize("kind", ["dct", "haar"])
    def test_mnist_sized_basis(self, kind):
        b = make_basis(kind, 784)
        assert b.n == 784 and b.orthonormality_error() < 1e-10

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            make_basis("wavelet", 8)
