import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nogap import datagen as dg
from nogap.errors import ConfigError, FormatError, ShapeError


def cole_hopf_sine(x, nu, t, terms=60):
    """Exact viscous Burgers solution for u0 = sin(2 pi x) via the heat-equation series."""
    from scipy.special import ive

    z = 1.0 / (4 * math.pi * nu)
    n = np.arange(1, terms + 1)
    # ive(n, z) = iv(n, z) exp(-z); the common factor cancels in the ratio
    coef = ive(n, z) * np.exp(-nu * (2 * math.pi * n) ** 2 * t)
    num = 8 * math.pi * nu * np.sum(n[:, None] * coef[:, None] * np.sin(2 * math.pi * np.outer(n, x)), axis=0)
    den = ive(0, z) + 2 * np.sum(coef[:, None] * np.cos(2 * math.pi * np.outer(n, x)), axis=0)
    return num / den


class TestGrf:
    def test_deterministic(self):
        np.testing.assert_array_equal(dg.grf_sample(3, 2, 64), dg.grf_sample(3, 2, 64))

    def test_samples_independent_of_batch(self):
        full = dg.grf_sample(5, 4, 32)
        np.testing.assert_array_equal(full[2:], dg.grf_sample(5, 2, 32, start=2))

    def test_zero_mean_and_analytic_variance(self):
        n, res = 10_000, 32
        u = dg.grf_sample(1, n, res)
        point = u[:, 7]
        assert abs(point.mean()) < 3 * point.std() / math.sqrt(n)
        sd = dg.grf_spectrum(np.arange(1, res // 2))
        expected = 2.0 * np.sum(sd**2)  # cosine and sine partner per mode
        assert abs(point.var() - expected) < 0.05 * expected

    def test_spectrum_value(self):
        assert dg.grf_spectrum(1) == pytest.approx(25.0 / (4 * math.pi**2 + 25.0))

    def test_no_mean_mode(self):
        u = dg.grf_sample(0, 3, 64)
        np.testing.assert_allclose(u.mean(axis=1), 0.0, atol=1e-13)

    def test_odd_resolution(self):
        with pytest.raises(ShapeError):
            dg.grf_sample(0, 1, 33)

    def test_max_mode_range(self):
        with pytest.raises(ConfigError):
            dg.grf_sample(0, 1, 16, max_mode=8)


class TestBurgers:
    def test_constant_stays_constant(self):
        u = dg.burgers_solve(np.full(64, 0.7), nu=0.1, t_end=0.5)
        np.testing.assert_allclose(u, 0.7, atol=1e-13)

    def test_energy_decays(self):
        u0 = dg.grf_sample(2, 4, 128)
        u1 = dg.burgers_solve(u0)
        assert np.all(np.sum(u1**2, axis=1) <= np.sum(u0**2, axis=1))

    def test_cole_hopf(self):
        x = np.arange(256) / 256
        u = dg.burgers_solve(np.sin(2 * np.pi * x), nu=0.1, t_end=1.0)
        ref = cole_hopf_sine(x, 0.1, 1.0)
        assert np.linalg.norm(u - ref) / np.linalg.norm(ref) < 1e-6

    def test_grid_convergence(self):
        u0 = dg.grf_sample(4, 1, 256)[0]
        fine = dg.burgers_solve(u0)[::2]
        coarse = dg.burgers_solve(dg.spectral_resample(u0, 128))
        assert np.linalg.norm(coarse - fine) / np.linalg.norm(fine) < 1e-4

    def test_batched_matches_single(self):
        u0 = dg.grf_sample(6, 2, 64)
        both = dg.burgers_solve(u0, t_end=0.2)
        np.testing.assert_allclose(both[1], dg.burgers_solve(u0[1], t_end=0.2), atol=1e-14)

    def test_resample_round_trip(self):
        u = dg.grf_sample(7, 1, 64, max_mode=10)[0]
        np.testing.assert_allclose(dg.spectral_resample(dg.spectral_resample(u, 128), 64), u, atol=1e-12)


class TestAdvection:
    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**31), index=st.integers(0, 1000))
    def test_half_domain_shift(self, seed, index):
        u0, u1 = dg.advection_sample(seed, 40, index)
        np.testing.assert_array_equal(u1, np.roll(u0, 20))
        assert abs(u0.sum() - u1.sum()) < 1e-12

    def test_centre_moves_to_zero(self):
        x = np.arange(40) / 40
        _, u1 = dg.advection_pair(0.5, 0.4, 1.5)
        peak = x[np.argmax(u1)]
        assert min(peak, 1 - peak) < 1e-12

    def test_profile_shape(self):
        x = np.array([0.5, 0.5 + 0.2, 0.5 + 0.21])
        np.testing.assert_allclose(dg.advection_profile(x, 0.5, 0.4, 1.5), [3.0, 1.5, 0.0], atol=1e-12)

    def test_parameters_in_box(self):
        ds = dg.generate("advection", 50, 0)
        heights = ds.inputs[..., 0].max(axis=1)
        assert np.all((heights >= 2.0) & (heights <= 4.0))

    def test_fractional_shift_rejected(self):
        with pytest.raises(ShapeError):
            dg.advection_pair(0.5, 0.4, 1.5, resolution=41)


class TestPoisson:
    def test_zero(self):
        g = dg.poisson_grid(9)
        X, Y = np.meshgrid(g, g, indexing="ij")
        assert np.all(dg.poisson_u(X, Y, 0.0, 0.0) == 0) and np.all(dg.poisson_f(X, Y, 0.0, 0.0) == 0)

    def test_alpha_term(self):
        g = dg.poisson_grid(9)
        X, Y = np.meshgrid(g, g, indexing="ij")
        ref = -(np.pi**2) * np.sin(np.pi * X) * (1 + 2 * np.cos(np.pi * Y))
        np.testing.assert_allclose(dg.poisson_f(X, Y, 1.0, 0.0), ref, atol=1e-12)

    @staticmethod
    def _fd_error(res, seed):
        f, u = dg.poisson_sample(seed, res)
        h = 2.0 / (res - 1)
        lap = (u[2:, 1:-1] + u[:-2, 1:-1] + u[1:-1, 2:] + u[1:-1, :-2] - 4 * u[1:-1, 1:-1]) / h**2
        return np.max(np.abs(lap - f[1:-1, 1:-1]))

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_second_order_consistency(self, seed):
        assert self._fd_error(33, seed) / self._fd_error(65, seed) >= 3.5

    def test_boundary_zero(self):
        _, u = dg.poisson_sample(3)
        np.testing.assert_allclose(u[0], 0.0, atol=1e-12)
        np.testing.assert_allclose(u[-1], 0.0, atol=1e-12)

    def test_cropped_dataset(self):
        ds = dg.generate("poisson", 3, 0)
        assert ds.inputs.shape == (3, 32, 32, 1)
        f, u = dg.poisson_sample(0, 33, 1)
        np.testing.assert_array_equal(ds.outputs[1], u[:32, :32])


class TestDataset:
    def test_shape_validation(self):
        with pytest.raises(ShapeError):
            dg.Dataset([np.arange(4)], np.zeros((2, 5, 1)), np.zeros((2, 4)))

    def test_normalizer_positive(self):
        ds = dg.Dataset([np.arange(4)], np.ones((2, 4, 1)), np.ones((2, 4)))
        assert np.all(ds.input_norm.std > 0) and np.all(ds.output_norm.std > 0)

    def test_split_disjoint_and_shares_normalizers(self):
        train, test = dg.generate_split("advection", 5, 3, 9)
        whole = dg.generate("advection", 8, 9)
        np.testing.assert_array_equal(test.inputs, whole.inputs[5:])
        assert test.input_norm is train.input_norm

    def test_unknown_problem(self):
        with pytest.raises(ConfigError):
            dg.generate("darcy", 1, 0)

    def test_deterministic(self):
        a = dg.generate("burgers", 2, 4, resolution=64, solve_resolution=64)
        b = dg.generate("burgers", 2, 4, resolution=64, solve_resolution=64)
        np.testing.assert_array_equal(a.outputs, b.outputs)


class TestDatasetIO:
    def test_round_trip(self, tmp_path):
        ds = dg.generate("poisson", 2, 1)
        path = tmp_path / "p.ngpd"
        digest = dg.dataset_write(ds, path)
        back = dg.dataset_read(path)
        assert len(digest) == 40
        for a, b in zip(ds.grid, back.grid):
            assert np.array_equal(a, b)
        assert np.array_equal(ds.inputs, back.inputs)
        assert np.array_equal(ds.outputs, back.outputs)
        assert np.array_equal(ds.input_norm.std, back.input_norm.std)
        assert back.meta == ds.meta

    def test_meta_survives(self, tmp_path):
        ds = dg.generate("burgers", 1, 3, resolution=32, solve_resolution=64)
        dg.dataset_write(ds, tmp_path / "b.ngpd")
        meta = dg.dataset_read(tmp_path / "b.ngpd").meta
        assert meta["nu"] == 0.1 and meta["seed"] == 3 and meta["resolution"] == 32

    def test_truncated(self, tmp_path):
        path = tmp_path / "a.ngpd"
        dg.dataset_write(dg.generate("advection", 3, 0), path)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) // 2])
        with pytest.raises(FormatError):
            dg.dataset_read(path)

    def test_same_content_same_hash(self, tmp_path):
        ds = dg.generate("advection", 3, 0)
        assert dg.dataset_write(ds, tmp_path / "a") == dg.dataset_write(ds, tmp_path / "b")
