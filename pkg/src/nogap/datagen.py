"""Benchmark datasets: viscous Burgers, periodic wave advection, 2D Poisson.

Every generator is a deterministic function of ``(seed, parameters)``; sample
``i`` of a dataset draws from ``np.random.default_rng([seed, i])`` so samples
can be produced independently.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import container
from .errors import ConfigError, FormatError, ShapeError, SolverDivergence

PROBLEMS = ("burgers", "advection", "poisson")


@dataclass
class Normalizer:
    """Per-field standardisation statistics."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        self.std = np.atleast_1d(np.asarray(self.std, dtype=np.float64))
        if np.any(self.std <= 0):
            raise ValueError("normalizer std must be positive")

    @classmethod
    def fit(cls, values, channel_axis=None):
        v = np.asarray(values, dtype=np.float64)
        if channel_axis is None:
            std = v.std()
            return cls(v.mean(), std if std > 0 else 1.0)
        axes = tuple(i for i in range(v.ndim) if i != channel_axis % v.ndim)
        std = v.std(axis=axes)
        return cls(v.mean(axis=axes), np.where(std > 0, std, 1.0))

    def encode(self, x):
        return (np.asarray(x) - self.mean) / self.std

    def decode(self, z):
        return np.asarray(z) * self.std + self.mean


@dataclass
class Dataset:
    grid: list
    inputs: np.ndarray
    outputs: np.ndarray
    meta: dict = field(default_factory=dict)
    input_norm: Normalizer | None = None
    output_norm: Normalizer | None = None

    def __post_init__(self):
        self.grid = [np.asarray(g, dtype=np.float64) for g in self.grid]
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.outputs = np.asarray(self.outputs, dtype=np.float64)
        shape = tuple(len(g) for g in self.grid)
        if self.inputs.ndim != len(shape) + 2:
            raise ShapeError(f"inputs must be [N, grid.., channels], got {self.inputs.shape}")
        if self.inputs.shape[1:-1] != shape or self.outputs.shape[1:] != shape:
            raise ShapeError(
                f"inputs {self.inputs.shape} / outputs {self.outputs.shape} do not match grid {shape}"
            )
        if self.inputs.shape[0] != self.outputs.shape[0] or self.inputs.shape[0] < 1:
            raise ShapeError("inputs and outputs need the same positive sample count")
        if self.input_norm is None:
            self.input_norm = Normalizer.fit(self.inputs, channel_axis=-1)
        if self.output_norm is None:
            self.output_norm = Normalizer.fit(self.outputs)

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def grid_shape(self) -> tuple:
        return tuple(len(g) for g in self.grid)

    @property
    def problem(self) -> str:
        return self.meta.get("problem", "unknown")

    def subset(self, index) -> "Dataset":
        return Dataset(
            self.grid,
            self.inputs[index],
            self.outputs[index],
            dict(self.meta),
            self.input_norm,
            self.output_norm,
        )

    def with_normalizers(self, other: "Dataset") -> "Dataset":
        return Dataset(self.grid, self.inputs, self.outputs, dict(self.meta), other.input_norm, other.output_norm)


# -- Gaussian random field and Burgers -----------------------------------------


def grf_spectrum(k):
    """Standard deviation of Fourier mode ``k`` for N(0, 625(-Δ + 25 I)^-2) on [0, 1]."""
    return 25.0 / ((2 * np.pi * np.asarray(k, dtype=np.float64)) ** 2 + 25.0)


def grf_sample(seed, n: int, resolution: int, max_mode: int | None = None, start: int = 0) -> np.ndarray:
    """``n`` periodic GRF samples on ``resolution`` equispaced points of [0, 1).

    The field is ``sum_k sqrt(2) sd_k (xi_k cos(2πkx) + eta_k sin(2πkx))`` over
    ``1 <= k <= max_mode`` (default: all modes below Nyquist); the mean mode
    and the Nyquist mode are zero.
    """
    if resolution % 2:
        raise ShapeError(f"resolution must be even, got {resolution}")
    kmax = resolution // 2 - 1 if max_mode is None else int(max_mode)
    if not 1 <= kmax < resolution // 2:
        raise ConfigError(f"max_mode must lie in [1, {resolution // 2 - 1}]")
    k = np.arange(1, kmax + 1)
    sd = grf_spectrum(k)
    out = np.empty((n, resolution))
    for i in range(n):
        rng = np.random.default_rng([int(seed), start + i])
        xi = rng.standard_normal(kmax)
        eta = rng.standard_normal(kmax)
        coef = np.zeros(resolution // 2 + 1, dtype=complex)
        # irfft normalisation: value = (1/n) * sum, so scale by n/2 for cos/sin amplitude
        coef[1 : kmax + 1] = sd * (xi - 1j * eta) * (np.sqrt(2.0) * resolution / 2)
        out[i] = np.fft.irfft(coef, n=resolution)
    return out


def spectral_resample(u, resolution: int) -> np.ndarray:
    """Band-limited resampling of periodic samples along the last axis."""
    u = np.asarray(u, dtype=np.float64)
    n = u.shape[-1]
    U = np.fft.rfft(u, axis=-1)
    m = min(n, resolution) // 2
    V = np.zeros(u.shape[:-1] + (resolution // 2 + 1,), dtype=complex)
    V[..., :m] = U[..., :m]
    return np.fft.irfft(V, n=resolution, axis=-1) * (resolution / n)


def burgers_solve(u0, nu: float = 0.1, t_end: float = 1.0, dt: float | None = None) -> np.ndarray:
    """Integrate ``u_t + 0.5 (u^2)_x = nu u_xx`` on the periodic unit interval.

    Pseudo-spectral in space with 2/3-rule dealiasing of the quadratic term;
    diffusion is handled exactly by an integrating factor and the remainder
    by classical RK4. ``u0`` may be batched along leading axes; the time step
    defaults to ``0.25 dx^2 / nu``.
    """
    u0 = np.asarray(u0, dtype=np.float64)
    n = u0.shape[-1]
    if dt is None:
        dt = 0.25 * (1.0 / n) ** 2 / nu
    steps = max(1, int(math.ceil(t_end / dt - 1e-12)))
    dt = t_end / steps
    m = np.arange(n // 2 + 1)
    k = 2 * np.pi * m
    keep = m < n / 3.0
    lin = -nu * k**2
    E = np.exp(lin * dt / 2)
    E2 = E * E
    ik_half = -0.5j * k * keep

    def nonlin(v):
        u = np.fft.irfft(v, n=n, axis=-1)
        return ik_half * np.fft.rfft(u * u, axis=-1)

    v = np.fft.rfft(u0, axis=-1)
    for step in range(steps):
        a = nonlin(v)
        b = nonlin(E * (v + 0.5 * dt * a))
        c = nonlin(E * v + 0.5 * dt * b)
        d = nonlin(E2 * v + dt * E * c)
        v = E2 * v + (dt / 6.0) * (E2 * a + 2.0 * E * (b + c) + d)
        if step % 256 == 0 and not np.all(np.isfinite(v)):
            raise SolverDivergence(f"non-finite Burgers state at step {step}")
    u = np.fft.irfft(v, n=n, axis=-1)
    if not np.all(np.isfinite(u)):
        raise SolverDivergence("non-finite Burgers state at final time")
    return u


# -- advection ------------------------------------------------------------------

ADVECTION_BOX = ((0.3, 0.7), (0.3, 0.6), (1.0, 2.0))


def advection_profile(x, c, width, height):
    """Square wave of height ``height`` plus a half-ellipse bump, both of
    half-width ``width / 2`` around ``c``."""
    x = np.asarray(x, dtype=np.float64)
    a = 2.0 * height / width
    box = np.where(np.abs(x - c) <= width / 2, height, 0.0)
    return box + np.sqrt(np.maximum(height**2 - (a * (x - c)) ** 2, 0.0))


def advection_sample(seed, resolution: int = 40, index: int = 0, speed: float = 1.0, t_end: float = 0.5):
    """One (u0, u(t_end)) pair of the periodic transport ``u_t + speed u_x = 0``.

    The shift ``speed * t_end`` must be a whole number of cells so the exact
    solution is a circular permutation of grid values.
    """
    rng = np.random.default_rng([int(seed), int(index)])
    (c_lo, c_hi), (w_lo, w_hi), (h_lo, h_hi) = ADVECTION_BOX
    c = rng.uniform(c_lo, c_hi)
    w = rng.uniform(w_lo, w_hi)
    h = rng.uniform(h_lo, h_hi)
    return advection_pair(c, w, h, resolution, speed, t_end)


def advection_pair(c, width, height, resolution=40, speed=1.0, t_end=0.5):
    shift = speed * t_end * resolution
    if abs(shift - round(shift)) > 1e-9:
        raise ShapeError(f"transport distance {speed * t_end} is not a whole number of cells")
    i = np.arange(resolution)
    x = i / resolution
    xs = ((i - int(round(shift))) % resolution) / resolution
    return advection_profile(x, c, width, height), advection_profile(xs, c, width, height)


# -- Poisson --------------------------------------------------------------------


def poisson_u(x, y, alpha, beta):
    return alpha * np.sin(np.pi * x) * (1 + np.cos(np.pi * y)) + beta * np.sin(2 * np.pi * x) * (
        1 - np.cos(2 * np.pi * y)
    )


def poisson_f(x, y, alpha, beta):
    """Laplacian of :func:`poisson_u`, differentiated term by term."""
    p2 = np.pi**2
    return -alpha * p2 * np.sin(np.pi * x) * (1 + 2 * np.cos(np.pi * y)) - 4 * beta * p2 * np.sin(
        2 * np.pi * x
    ) * (1 - 2 * np.cos(2 * np.pi * y))


def poisson_grid(resolution: int = 33):
    return np.linspace(-1.0, 1.0, resolution)


def poisson_sample(seed, resolution: int = 33, index: int = 0):
    """(f, u) on the ``resolution x resolution`` grid of [-1, 1]^2, indexed [x, y]."""
    rng = np.random.default_rng([int(seed), int(index)])
    alpha, beta = rng.uniform(-2.0, 2.0, size=2)
    g = poisson_grid(resolution)
    X, Y = np.meshgrid(g, g, indexing="ij")
    return poisson_f(X, Y, alpha, beta), poisson_u(X, Y, alpha, beta)


# -- dataset assembly -----------------------------------------------------------

DEFAULT_RESOLUTION = {"burgers": 128, "advection": 40, "poisson": 32}


def generate(problem: str, n: int, seed: int, resolution: int | None = None, start: int = 0, **options) -> Dataset:
    """Samples ``start .. start + n - 1`` of ``problem`` as a dataset.

    Burgers is solved on ``solve_resolution`` (default 256) and subsampled;
    Poisson is generated on 33 x 33 and cropped to 32 x 32 by dropping the
    x = 1 and y = 1 lines.
    """
    if problem not in PROBLEMS:
        raise ConfigError(f"unknown problem {problem!r}; expected one of {PROBLEMS}")
    resolution = resolution or DEFAULT_RESOLUTION[problem]
    idx = range(start, start + n)
    meta = {"problem": problem, "seed": int(seed), "resolution": int(resolution), "start": int(start)}
    if problem == "burgers":
        nu = float(options.get("nu", 0.1))
        solve_res = int(options.get("solve_resolution", max(256, resolution)))
        if solve_res % resolution:
            raise ConfigError("solve_resolution must be a multiple of resolution")
        u0 = grf_sample(seed, n, solve_res, start=start)
        u1 = burgers_solve(u0, nu=nu)
        step = solve_res // resolution
        inputs, outputs = u0[:, ::step], u1[:, ::step]
        grid = [np.arange(resolution) / resolution]
        meta.update(nu=nu, solve_resolution=solve_res, t_end=1.0)
    elif problem == "advection":
        pairs = [advection_sample(seed, resolution, i) for i in idx]
        inputs = np.stack([p[0] for p in pairs])
        outputs = np.stack([p[1] for p in pairs])
        grid = [np.arange(resolution) / resolution]
        meta.update(nu=1.0, t_end=0.5)
    else:
        full = int(options.get("full_resolution", 33))
        if full - resolution not in (0, 1):
            raise ConfigError("poisson resolution must equal full_resolution or full_resolution - 1")
        pairs = [poisson_sample(seed, full, i) for i in idx]
        inputs = np.stack([p[0][:resolution, :resolution] for p in pairs])
        outputs = np.stack([p[1][:resolution, :resolution] for p in pairs])
        g = poisson_grid(full)[:resolution]
        grid = [g, g]
        meta.update(full_resolution=full)
    return Dataset(grid, inputs[..., None], outputs, meta)


def generate_split(problem: str, n_train: int, n_test: int, seed: int, **options):
    """Disjoint train/test datasets; the test set carries the training normalizers."""
    train = generate(problem, n_train, seed, **options)
    test = generate(problem, n_test, seed, start=n_train, **options)
    return train, test.with_normalizers(train)


# -- persistence ----------------------------------------------------------------


def dataset_write(dataset: Dataset, path) -> str:
    tensors = {f"grid.{i}": g for i, g in enumerate(dataset.grid)}
    tensors["inputs"] = dataset.inputs
    tensors["outputs"] = dataset.outputs
    tensors["norm.input.mean"] = dataset.input_norm.mean
    tensors["norm.input.std"] = dataset.input_norm.std
    tensors["norm.output.mean"] = dataset.output_norm.mean
    tensors["norm.output.std"] = dataset.output_norm.std
    meta = {k: json.dumps(v) for k, v in dataset.meta.items()}
    meta["kind"] = json.dumps("dataset")
    return container.write(path, meta, tensors, container.DATA_MAGIC)


def dataset_read(path) -> Dataset:
    raw_meta, tensors = container.read(path, container.DATA_MAGIC)
    try:
        meta = {k: json.loads(v) for k, v in raw_meta.items()}
        if meta.pop("kind", None) != "dataset":
            raise FormatError(f"{path} is not a dataset file")
        ndim = sum(1 for k in tensors if k.startswith("grid."))
        grid = [tensors[f"grid.{i}"] for i in range(ndim)]
        return Dataset(
            grid,
            tensors["inputs"],
            tensors["outputs"],
            meta,
            Normalizer(tensors["norm.input.mean"], tensors["norm.input.std"]),
            Normalizer(tensors["norm.output.mean"], tensors["norm.output.std"]),
        )
    except (KeyError, ValueError) as err:
        if isinstance(err, FormatError):
            raise
        raise FormatError(f"{path}: incomplete dataset ({err})") from err
