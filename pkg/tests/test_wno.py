import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nogap import autodiff as ad
from nogap import wavelet as wv
from nogap.errors import ConfigError, ShapeError
from nogap.wno import (
    WnoConfig,
    WnoParams,
    add_coordinates,
    wavelet_block,
    wno_forward,
    wno_init,
    zeros_like_params,
)


def tiny_config(**kw):
    base = dict(lift_width=4, proj_width=6, n_blocks=2, levels=1, wavelet="db4", spatial_dim=1, in_channels=2, grid=(16,))
    base.update(kw)
    return WnoConfig(**base)


def scalar_gelu(x):
    return 0.5 * x * (1.0 + math.tanh(math.sqrt(2.0 / math.pi) * (x + 0.044715 * x**3)))


def reference_block_1d(v, spectral, skip_w, skip_b, name, levels):
    """Loop-level reimplementation built from dwt/idwt on single channels."""
    B, n, w = v.shape
    out = np.zeros_like(v)
    for b in range(B):
        approx = [wv.dwt(v[b, :, c], name, levels).approx for c in range(w)]
        m = len(approx[0])
        for o in range(w):
            mixed = np.zeros(m)
            for k in range(m):
                for i in range(w):
                    mixed[k] += approx[i][k] * spectral[i, o, k]
            details = [np.zeros(n >> (lev + 1)) for lev in range(levels)]
            path_a = wv.idwt(wv.WaveletCoeffs(mixed, details, levels, (n,), name))
            for x in range(n):
                path_b = skip_b[o] + sum(v[b, x, i] * skip_w[i, o] for i in range(w))
                out[b, x, o] = scalar_gelu(path_a[x] + path_b)
    return out


class TestConfig:
    def test_defaults_valid(self):
        WnoConfig()

    @pytest.mark.parametrize("field", ["lift_width", "proj_width", "n_blocks", "levels"])
    def test_positive_sizes(self, field):
        with pytest.raises(ConfigError):
            tiny_config(**{field: 0})

    def test_wavelet_name(self):
        with pytest.raises(ConfigError):
            tiny_config(wavelet="sym4")

    def test_levels_against_grid(self):
        with pytest.raises(ConfigError, match="divisible"):
            tiny_config(grid=(40,), levels=4)

    def test_grid_dimension(self):
        with pytest.raises(ConfigError):
            tiny_config(spatial_dim=2)

    def test_param_shapes(self):
        cfg = tiny_config(levels=2)
        shapes = cfg.param_shapes()
        assert shapes["block0.spectral"] == (4, 4, 4)
        assert shapes["proj2.weight"] == (6, 1)


class TestInit:
    def test_deterministic(self):
        a = wno_init(tiny_config(), 7)
        b = wno_init(tiny_config(), 7)
        for k in a.names():
            assert np.array_equal(a.tensors[k], b.tensors[k])

    def test_lift_shape(self):
        p = wno_init(WnoConfig(lift_width=64, in_channels=2), 0)
        assert p.tensors["lift.weight"].shape == (2, 64)

    def test_lift_weight_moments(self):
        cfg = WnoConfig(lift_width=2, proj_width=2, in_channels=5000)
        w = wno_init(cfg, 3).tensors["lift.weight"].ravel()
        assert w.size == 10_000
        bound = 1 / math.sqrt(5000)
        expected = 2 * bound / math.sqrt(12.0)
        assert abs(w.std() - expected) < 0.1 * expected
        assert np.all(np.abs(w) <= bound)

    def test_spectral_scale(self):
        cfg = tiny_config(lift_width=8)
        s = wno_init(cfg, 0).tensors["block0.spectral"]
        assert s.min() >= 0 and s.max() < 1 / 64

    def test_rejects_wrong_shapes(self):
        cfg = tiny_config()
        t = dict(wno_init(cfg, 0).tensors)
        t["lift.bias"] = np.zeros(5)
        with pytest.raises(ShapeError):
            WnoParams(cfg, t)

    def test_rejects_non_finite(self):
        cfg = tiny_config()
        t = dict(wno_init(cfg, 0).tensors)
        t["proj2.bias"] = np.array([np.nan])
        with pytest.raises(ShapeError):
            WnoParams(cfg, t)

    def test_flatten_round_trip(self):
        p = wno_init(tiny_config(), 1)
        q = p.unflatten(p.flatten())
        for k in p.names():
            assert np.array_equal(p.tensors[k], q.tensors[k])


class TestBlock:
    def test_zero_kernel_identity_skip(self):
        v = np.random.default_rng(0).normal(size=(2, 16, 4))
        out = wavelet_block(v, np.zeros((4, 4, 8)), np.eye(4), np.zeros(4), "db4", 1)
        np.testing.assert_allclose(out.data, ad.gelu_value(v), atol=1e-15)

    def test_constant_field_identity_mix(self):
        v = np.tile(np.array([0.3, -1.2, 2.0, 0.0]), (1, 16, 1))
        spectral = np.zeros((4, 4, 4))
        for i in range(4):
            spectral[i, i, :] = 1.0
        out = wavelet_block(v, spectral, np.zeros((4, 4)), np.zeros(4), "db6", 2)
        np.testing.assert_allclose(out.data, ad.gelu_value(v), atol=1e-13)

    @pytest.mark.parametrize("levels, name", [(1, "db4"), (2, "db6")])
    def test_matches_loop_reference(self, levels, name):
        rng = np.random.default_rng(levels)
        v = rng.normal(size=(2, 16, 4))
        spectral = rng.normal(size=(4, 4, 16 >> levels))
        skip_w, skip_b = rng.normal(size=(4, 4)), rng.normal(size=4)
        got = wavelet_block(v, spectral, skip_w, skip_b, name, levels).data
        ref = reference_block_1d(v, spectral, skip_w, skip_b, name, levels)
        assert np.max(np.abs(got - ref)) < 1e-12

    def test_2d_matches_packed_reference(self):
        rng = np.random.default_rng(9)
        v = rng.normal(size=(1, 8, 8, 3))
        spectral = rng.normal(size=(3, 3, 4, 4))
        skip_w, skip_b = rng.normal(size=(3, 3)), rng.normal(size=3)
        got = wavelet_block(v, spectral, skip_w, skip_b, "db4", 1).data
        packed = wv.dwt_packed(v, "db4", 1, (1, 2))
        mixed = np.zeros_like(packed)
        mixed[:, :4, :4] = np.einsum("bxyi,ioxy->bxyo", packed[:, :4, :4], spectral)
        path_a = wv.idwt_packed(mixed, "db4", 1, (1, 2))
        expect = ad.gelu_value(path_a + v @ skip_w + skip_b)
        assert np.max(np.abs(got - expect)) < 1e-12

    def test_indivisible_grid(self):
        with pytest.raises(ShapeError):
            wavelet_block(np.zeros((1, 12, 2)), np.zeros((2, 2, 3)), np.eye(2), np.zeros(2), "db4", 3)


class TestForward:
    def test_zero_params_zero_output(self):
        cfg = tiny_config()
        x = np.random.default_rng(1).normal(size=(3, 16, 2))
        out = wno_forward(zeros_like_params(cfg), x)
        assert out.shape == (3, 16, 1)
        assert np.all(out.data == 0.0)

    def test_identical_batch_members(self):
        p = wno_init(tiny_config(), 2)
        x = np.random.default_rng(2).normal(size=(1, 16, 2))
        out = wno_forward(p, np.concatenate([x, x])).data
        np.testing.assert_array_equal(out[0], out[1])

    def test_channel_mismatch(self):
        p = wno_init(tiny_config(), 0)
        with pytest.raises(ShapeError, match="channels"):
            wno_forward(p, np.zeros((1, 16, 3)))

    def test_grid_mismatch(self):
        p = wno_init(tiny_config(), 0)
        with pytest.raises(ShapeError):
            wno_forward(p, np.zeros((1, 32, 2)))

    def test_mapping_needs_config(self):
        p = wno_init(tiny_config(), 0)
        with pytest.raises(ConfigError):
            wno_forward(p.tensors, np.zeros((1, 16, 2)))

    def test_gradcheck_all_parameters(self):
        cfg = tiny_config()
        p = wno_init(cfg, 4)
        rng = np.random.default_rng(4)
        x = rng.normal(size=(2, 16, 2))
        y = rng.normal(size=(2, 16, 1))

        def loss(flat):
            params = dict(zip(p.names(), _split(flat, cfg)))
            d = ad.sub(wno_forward(params, x, cfg), y)
            return ad.mean(ad.mul(d, d))

        assert ad.gradcheck(loss, p.flatten()) < 1e-5

    def test_every_parameter_receives_gradient(self):
        cfg = tiny_config(spatial_dim=2, in_channels=3, grid=(8, 8))
        p = wno_init(cfg, 5)
        x = np.random.default_rng(5).normal(size=(2, 8, 8, 3))
        with ad.Tape() as tape:
            watched = p.watch(tape)
            loss = ad.sum(ad.mul(wno_forward(watched, x, cfg), wno_forward(watched, x, cfg)))
        adj = ad.backward(tape, 1.0, loss.node)
        for name, t in watched.items():
            g = adj[t.node]
            assert np.all(np.isfinite(g)), name
            assert np.linalg.norm(g) > 0, name


def _split(flat, cfg):
    """Differentiable split of a flat parameter vector into named tensors."""
    flat_t = ad.as_tensor(flat)
    out, i = [], 0
    for shape in cfg.param_shapes().values():
        n = int(np.prod(shape))
        out.append(ad.reshape(ad.slice_(flat_t, (slice(i, i + n),)), shape))
        i += n
    return out


class TestCoordinates:
    def test_channels_appended(self):
        fields = np.zeros((2, 5, 1))
        out = add_coordinates(fields, [np.linspace(-1, 1, 5)])
        np.testing.assert_allclose(out[0, :, 1], np.linspace(0, 1, 5))

    def test_2d(self):
        g = np.arange(4) / 4
        out = add_coordinates(np.zeros((1, 4, 4, 1)), [g, g])
        assert out.shape == (1, 4, 4, 3)
        np.testing.assert_allclose(out[0, :, 0, 1], [0, 1 / 3, 2 / 3, 1])
        np.testing.assert_allclose(out[0, 0, :, 2], [0, 1 / 3, 2 / 3, 1])

    def test_axis_count_checked(self):
        with pytest.raises(ShapeError):
            add_coordinates(np.zeros((1, 4, 1)), [np.arange(4), np.arange(4)])


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31), perm_seed=st.integers(0, 2**31))
def test_batch_equivariance(seed, perm_seed):
    p = wno_init(tiny_config(), seed % 1000)
    x = np.random.default_rng(seed).normal(size=(5, 16, 2))
    perm = np.random.default_rng(perm_seed).permutation(5)
    a = wno_forward(p, x).data[perm]
    b = wno_forward(p, x[perm]).data
    np.testing.assert_allclose(a, b, atol=1e-14)


@settings(max_examples=20, deadline=None)
@given(
    levels=st.integers(1, 3),
    name=st.sampled_from(["db4", "db6", "db8"]),
    dim=st.sampled_from([1, 2]),
)
def test_output_grid_equals_input_grid(levels, name, dim):
    grid = (16,) * dim
    cfg = WnoConfig(lift_width=3, proj_width=4, n_blocks=1, levels=levels, wavelet=name,
                    spatial_dim=dim, in_channels=dim + 1, grid=grid)
    x = np.random.default_rng(0).normal(size=(2, *grid, dim + 1))
    assert wno_forward(wno_init(cfg, 0), x).shape == (2, *grid, 1)
