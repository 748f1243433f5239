import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nogap import wavelet as wv
from nogap.errors import ConfigError, ShapeError

NAMES = ("db4", "db6", "db8")


class TestFilters:
    @pytest.mark.parametrize("name", NAMES)
    def test_admissibility(self, name):
        f = wv.filter_coeffs(name)
        assert f.dec_lo.sum() == pytest.approx(np.sqrt(2), abs=1e-12)
        assert f.dec_hi.sum() == pytest.approx(0.0, abs=1e-12)
        assert np.sum(f.dec_lo**2) + np.sum(f.dec_hi**2) == pytest.approx(2.0, abs=1e-10)

    @pytest.mark.parametrize("name, taps", [("db4", 8), ("db6", 12), ("db8", 16)])
    def test_lengths(self, name, taps):
        f = wv.filter_coeffs(name)
        assert f.length == taps
        assert f.vanishing_moments == taps // 2

    @pytest.mark.parametrize("name", NAMES)
    def test_vanishing_moments(self, name):
        f = wv.filter_coeffs(name)
        k = np.arange(f.length, dtype=float)
        for p in range(f.vanishing_moments):
            assert abs(np.sum(k**p * f.dec_hi)) < 1e-8 * max(1.0, np.sum(k**p))

    @pytest.mark.parametrize("name", NAMES)
    def test_one_more_moment_fails(self, name):
        f = wv.filter_coeffs(name)
        k = np.arange(f.length, dtype=float)
        p = f.vanishing_moments
        assert abs(np.sum(k**p * f.dec_hi)) > 1e-3

    @pytest.mark.parametrize("name", NAMES)
    def test_reconstruction_filters_are_time_reversed(self, name):
        f = wv.filter_coeffs(name)
        np.testing.assert_array_equal(f.rec_lo, f.dec_lo[::-1])
        np.testing.assert_array_equal(f.rec_hi, f.dec_hi[::-1])
        signs = (-1.0) ** np.arange(f.length)
        np.testing.assert_allclose(f.rec_hi, signs * f.rec_lo[::-1])

    @pytest.mark.parametrize("name", NAMES)
    def test_even_shift_orthogonality(self, name):
        lo = wv.filter_coeffs(name).dec_lo
        L = len(lo)
        for shift in range(2, L, 2):
            assert abs(np.dot(lo[shift:], lo[: L - shift])) < 1e-12

    @pytest.mark.parametrize("name", NAMES)
    def test_matches_pywavelets_table(self, name):
        pywt = pytest.importorskip("pywt")
        ref = pywt.Wavelet(name)
        np.testing.assert_allclose(wv.filter_coeffs(name).dec_lo, ref.dec_lo, atol=1e-14)
        np.testing.assert_allclose(wv.filter_coeffs(name).dec_hi, ref.dec_hi, atol=1e-14)

    def test_unsupported_name(self):
        with pytest.raises(ConfigError):
            wv.filter_coeffs("haar")

    def test_filters_read_only(self):
        with pytest.raises(ValueError):
            wv.filter_coeffs("db4").dec_lo[0] = 1.0


class TestDwtExamples:
    @pytest.mark.parametrize("name", NAMES)
    @pytest.mark.parametrize("levels", [1, 2, 3])
    def test_constant_signal(self, name, levels):
        c = 1.7
        coeffs = wv.dwt(np.full(64, c), name, levels)
        for d in coeffs.details:
            np.testing.assert_allclose(d, 0.0, atol=1e-12)
        np.testing.assert_allclose(coeffs.approx, c * np.sqrt(2) ** levels, rtol=1e-12)

    def test_constant_field_2d(self):
        coeffs = wv.dwt(np.full((16, 16), -0.5), "db4", 2)
        np.testing.assert_allclose(coeffs.approx, -0.5 * 2.0**2, rtol=1e-12)
        for band in coeffs.details:
            for arr in band:
                np.testing.assert_allclose(arr, 0.0, atol=1e-12)

    def test_parseval_db6(self):
        x = np.random.default_rng(0).normal(size=64)
        coeffs = wv.dwt(x, "db6", 3)
        assert coeffs.energy() == pytest.approx(np.sum(x**2), abs=1e-10)

    def test_ll_band_size(self):
        coeffs = wv.dwt(np.random.default_rng(1).normal(size=(16, 16)), "db4", 2)
        assert coeffs.approx.shape == (4, 4)
        assert [b[0].shape for b in coeffs.details] == [(8, 8), (4, 4)]

    def test_indivisible_length_names_axis(self):
        with pytest.raises(ShapeError, match="axis 1"):
            wv.dwt(np.zeros((16, 20)), "db4", 3)

    def test_levels_must_be_positive(self):
        with pytest.raises(ShapeError):
            wv.dwt(np.zeros(16), "db4", 0)

    def test_three_dimensional_signal_rejected(self):
        with pytest.raises(ShapeError):
            wv.dwt(np.zeros((4, 4, 4)), "db4", 1)

    def test_coefficient_count_is_critical(self):
        coeffs = wv.dwt(np.zeros(64), "db8", 4)
        total = coeffs.approx.size + sum(d.size for d in coeffs.details)
        assert total == 64


class TestIdwt:
    @pytest.mark.parametrize("name", NAMES)
    @pytest.mark.parametrize("levels", [1, 2, 3, 4])
    def test_round_trip_64(self, name, levels):
        x = np.random.default_rng(levels).normal(size=64)
        back = wv.idwt(wv.dwt(x, name, levels))
        assert np.max(np.abs(back - x)) < 1e-10

    def test_zero_coefficients(self):
        coeffs = wv.dwt(np.zeros(32), "db4", 2)
        np.testing.assert_array_equal(wv.idwt(coeffs), np.zeros(32))

    def test_constant_restored(self):
        coeffs = wv.dwt(np.full(32, 3.0), "db6", 2)
        np.testing.assert_allclose(wv.idwt(coeffs), 3.0, rtol=1e-12)

    def test_level_count_mismatch(self):
        coeffs = wv.dwt(np.zeros(32), "db4", 2)
        with pytest.raises(ShapeError):
            wv.WaveletCoeffs(coeffs.approx, coeffs.details[:1], 2, (32,), "db4")

    def test_wrong_detail_shape(self):
        coeffs = wv.dwt(np.zeros(32), "db4", 2)
        bad = wv.WaveletCoeffs(coeffs.approx, [np.zeros(16), np.zeros(5)], 2, (32,), "db4")
        with pytest.raises(ShapeError):
            wv.idwt(bad)

    def test_wrong_approx_shape(self):
        coeffs = wv.dwt(np.zeros(32), "db4", 2)
        bad = wv.WaveletCoeffs(np.zeros(4), coeffs.details, 2, (32,), "db4")
        with pytest.raises(ShapeError):
            wv.idwt(bad)


class TestAgainstPywavelets:
    """Periodization-mode pywt agrees once the input is advanced by L/2 - 1 samples."""

    @pytest.mark.parametrize("name", NAMES)
    def test_single_level_matches_with_phase_offset(self, name):
        pywt = pytest.importorskip("pywt")
        x = np.random.default_rng(5).normal(size=64)
        offset = wv.filter_coeffs(name).length // 2 - 1
        ca_ref, cd_ref = pywt.dwt(np.roll(x, -offset), name, mode="periodization")
        packed = wv.dwt_packed(x, name, 1, (0,))
        np.testing.assert_allclose(packed[:32], ca_ref, atol=1e-12)
        np.testing.assert_allclose(packed[32:], cd_ref, atol=1e-12)


class TestPackedTransforms:
    def test_orthogonal_matrix(self):
        n = 32
        M = np.stack([wv.dwt_packed(e, "db8", 3, (0,)) for e in np.eye(n)], axis=1)
        np.testing.assert_allclose(M.T @ M, np.eye(n), atol=1e-12)

    def test_idwt_is_adjoint(self):
        rng = np.random.default_rng(6)
        x, y = rng.normal(size=(2, 16, 8)), rng.normal(size=(2, 16, 8))
        lhs = np.sum(wv.dwt_packed(x, "db4", 2, (1, 2)) * y)
        rhs = np.sum(x * wv.idwt_packed(y, "db4", 2, (1, 2)))
        assert lhs == pytest.approx(rhs, rel=1e-12)

    @pytest.mark.parametrize("axes", [(1,), (1, 2)])
    def test_approx_coeffs_is_leading_block(self, axes):
        x = np.random.default_rng(7).normal(size=(3, 32, 16, 2))
        packed = wv.dwt_packed(x, "db6", 2, axes)
        approx = wv.approx_coeffs(x, "db6", 2, axes)
        key = [slice(None)] * 4
        for ax in axes:
            key[ax] = slice(0, x.shape[ax] >> 2)
        np.testing.assert_allclose(approx, packed[tuple(key)], atol=1e-13)

    def test_approx_synthesis_zeroes_details(self):
        x = np.random.default_rng(8).normal(size=(2, 16, 16, 1))
        packed = wv.dwt_packed(x, "db4", 2, (1, 2))
        keep = np.zeros_like(packed)
        keep[:, :4, :4] = packed[:, :4, :4]
        expect = wv.idwt_packed(keep, "db4", 2, (1, 2))
        got = wv.approx_synthesis(packed[:, :4, :4], "db4", 2, (1, 2))
        np.testing.assert_allclose(got, expect, atol=1e-13)


_names = st.sampled_from(NAMES)


@settings(max_examples=40, deadline=None)
@given(
    name=_names,
    levels=st.integers(1, 4),
    x=arrays(np.float64, 64, elements=st.floats(-1e3, 1e3)),
)
def test_perfect_reconstruction_property(name, levels, x):
    back = wv.idwt(wv.dwt(x, name, levels))
    assert np.max(np.abs(back - x)) < 1e-10 * max(1.0, np.max(np.abs(x)))


@settings(max_examples=25, deadline=None)
@given(name=_names, levels=st.integers(1, 4), seed=st.integers(0, 2**31))
def test_energy_and_round_trip_2d(name, levels, seed):
    x = np.random.default_rng(seed).normal(size=(32, 32))
    coeffs = wv.dwt(x, name, levels)
    assert coeffs.energy() == pytest.approx(np.sum(x**2), rel=1e-9)
    assert np.max(np.abs(wv.idwt(coeffs) - x)) < 1e-10


@settings(max_examples=25, deadline=None)
@given(name=_names, a=st.floats(-5, 5), b=st.floats(-5, 5), seed=st.integers(0, 2**31))
def test_linearity(name, a, b, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=(2, 32))
    lhs = wv.dwt(a * x + b * y, name, 2).packed()
    rhs = a * wv.dwt(x, name, 2).packed() + b * wv.dwt(y, name, 2).packed()
    np.testing.assert_allclose(lhs, rhs, atol=1e-11)
