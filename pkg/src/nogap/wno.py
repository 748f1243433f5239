"""Wavelet neural operator used as the GP mean function.

Architecture: pointwise lift to ``lift_width`` channels, ``n_blocks`` wavelet
integral blocks, then a dense-gelu-dense projection to one output channel.
Each block computes ``gelu(W(v) + skip(v))`` where ``W`` transforms ``v`` to
the wavelet domain, mixes channels of the coarsest approximation
coefficients with per-location weights, discards the detail bands and
transforms back.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, ShapeError
from .wavelet import SUPPORTED, check_levels


@dataclass(frozen=True)
class WnoConfig:
    lift_width: int = 32
    proj_width: int = 64
    n_blocks: int = 2
    levels: int = 2
    wavelet: str = "db4"
    spatial_dim: int = 1
    in_channels: int = 2
    grid: tuple = (64,)

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(int(n) for n in self.grid))
        for name in ("lift_width", "proj_width", "n_blocks", "levels", "in_channels"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.wavelet not in SUPPORTED:
            raise ConfigError(f"wavelet must be one of {SUPPORTED}, got {self.wavelet!r}")
        if self.spatial_dim not in (1, 2) or len(self.grid) != self.spatial_dim:
            raise ConfigError(f"grid {self.grid} does not match spatial_dim={self.spatial_dim}")
        try:
            check_levels(self.grid, self.levels, range(self.spatial_dim))
        except ShapeError as err:
            raise ConfigError(str(err)) from err

    @property
    def coarse_shape(self) -> tuple:
        return tuple(n >> self.levels for n in self.grid)

    def param_shapes(self) -> dict:
        w, p = self.lift_width, self.proj_width
        shapes = {"lift.weight": (self.in_channels, w), "lift.bias": (w,)}
        for j in range(self.n_blocks):
            shapes[f"block{j}.spectral"] = (w, w) + self.coarse_shape
            shapes[f"block{j}.skip.weight"] = (w, w)
            shapes[f"block{j}.skip.bias"] = (w,)
        shapes.update(
            {
                "proj1.weight": (w, p),
                "proj1.bias": (p,),
                "proj2.weight": (p, 1),
                "proj2.bias": (1,),
            }
        )
        return shapes

    def as_dict(self) -> dict:
        return {
            "lift_width": self.lift_width,
            "proj_width": self.proj_width,
            "n_blocks": self.n_blocks,
            "levels": self.levels,
            "wavelet": self.wavelet,
            "spatial_dim": self.spatial_dim,
            "in_channels": self.in_channels,
            "grid": list(self.grid),
        }


@dataclass
class WnoParams:
    config: WnoConfig
    tensors: dict = field(default_factory=dict)

    def __post_init__(self):
        shapes = self.config.param_shapes()
        if set(shapes) != set(self.tensors):
            missing = set(shapes) ^ set(self.tensors)
            raise ShapeError(f"parameter names do not match config: {sorted(missing)}")
        for name, shape in shapes.items():
            arr = np.asarray(self.tensors[name], dtype=np.float64)
            if arr.shape != shape:
                raise ShapeError(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ShapeError(f"{name} contains non-finite values")
            self.tensors[name] = arr

    def names(self):
        return list(self.config.param_shapes())

    def replace(self, tensors: Mapping) -> "WnoParams":
        return WnoParams(self.config, {k: np.array(tensors[k]) for k in self.names()})

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.tensors[k].ravel() for k in self.names()])

    def unflatten(self, flat) -> "WnoParams":
        out, i = {}, 0
        for name, shape in self.config.param_shapes().items():
            n = int(np.prod(shape))
            out[name] = np.asarray(flat[i : i + n]).reshape(shape)
            i += n
        return WnoParams(self.config, out)

    def watch(self, tape: ad.Tape) -> dict:
        return {k: tape.watch(v) for k, v in self.tensors.items()}


def wno_init(config: WnoConfig, seed: int) -> WnoParams:
    """Deterministic initialisation.

    Dense layers draw uniformly from ``±1/sqrt(fan_in)``; spectral weights
    are ``U[0, 1) / (c_in * c_out)``.
    """
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in config.param_shapes().items():
        if name.endswith(".spectral"):
            tensors[name] = rng.random(shape) / (shape[0] * shape[1])
        else:
            layer = name.rsplit(".", 1)[0]
            fan_in = config.param_shapes()[layer + ".weight"][0]
            bound = 1.0 / np.sqrt(fan_in)
            tensors[name] = rng.uniform(-bound, bound, size=shape)
    return WnoParams(config, tensors)


def zeros_like_params(config: WnoConfig) -> WnoParams:
    return WnoParams(config, {k: np.zeros(s) for k, s in config.param_shapes().items()})


def add_coordinates(fields, coords) -> np.ndarray:
    """Append coordinate channels scaled to [0, 1] to ``fields[B, grid.., c]``."""
    fields = np.asarray(fields, dtype=np.float64)
    grid = fields.shape[1:-1]
    if len(coords) != len(grid):
        raise ShapeError(f"{len(coords)} coordinate axes for a {len(grid)}D grid")
    unit = [unit_coordinates(c) for c in coords]
    mesh = np.meshgrid(*unit, indexing="ij")
    chans = [np.broadcast_to(m, fields.shape[:-1])[..., None] for m in mesh]
    return np.concatenate([fields, *chans], axis=-1)


def unit_coordinates(c) -> np.ndarray:
    c = np.asarray(c, dtype=np.float64)
    span = c.max() - c.min()
    return (c - c.min()) / span if span > 0 else np.zeros_like(c)


def wavelet_block(v, spectral, skip_weight, skip_bias, wavelet: str, levels: int):
    """One integral block: ``gelu(idwt(mix(approx(dwt(v)))) + skip(v))``."""
    v = ad.as_tensor(v)
    axes = tuple(range(1, len(v.shape) - 1))
    check_levels(v.shape, levels, axes)
    approx = ad.dwt_approx_hook(v, wavelet, levels, axes)
    mixed = ad.channel_mix(approx, spectral)
    kernel_path = ad.idwt_approx_hook(mixed, wavelet, levels, axes)
    skip = ad.conv1x1_channels(v, skip_weight, skip_bias)
    return ad.gelu(ad.add(kernel_path, skip))


def wno_forward(params, inputs, config: WnoConfig | None = None):
    """Evaluate the operator on ``inputs[B, grid.., in_channels]``; returns ``[B, grid.., 1]``.

    ``params`` is a :class:`WnoParams` or a mapping of name to Tensor (for
    example the watched tensors of a tape).
    """
    if isinstance(params, WnoParams):
        config = params.config
        params = params.tensors
    if config is None:
        raise ConfigError("wno_forward needs a config when params is a plain mapping")
    p = {k: ad.as_tensor(v) for k, v in params.items()}
    x = ad.as_tensor(inputs)
    if x.shape[-1] != config.in_channels:
        raise ShapeError(f"input has {x.shape[-1]} channels, config expects {config.in_channels}")
    if tuple(x.shape[1:-1]) != config.grid:
        raise ShapeError(f"input grid {x.shape[1:-1]} != configured grid {config.grid}")
    v = ad.conv1x1_channels(x, p["lift.weight"], p["lift.bias"])
    for j in range(config.n_blocks):
        v = wavelet_block(
            v,
            p[f"block{j}.spectral"],
            p[f"block{j}.skip.weight"],
            p[f"block{j}.skip.bias"],
            config.wavelet,
            config.levels,
        )
    v = ad.gelu(ad.conv1x1_channels(v, p["proj1.weight"], p["proj1.bias"]))
    return ad.conv1x1_channels(v, p["proj2.weight"], p["proj2.bias"])


def resized(config: WnoConfig, **changes) -> WnoConfig:
    return replace(config, **changes)
