"""Experiment configuration: presets, TOML loading and echoing."""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import tomli_w

from .datagen import DEFAULT_RESOLUTION, PROBLEMS
from .errors import ConfigError
from .gp import VARIANTS, TrainConfig
from .wno import WnoConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SPATIAL_DIM = {"burgers": 1, "advection": 1, "poisson": 2}


@dataclass(frozen=True)
class ArchSpec:
    """Mean-network settings that do not depend on the grid."""

    lift_width: int = 32
    proj_width: int = 64
    n_blocks: int = 2
    levels: int = 2
    wavelet: str = "db4"


@dataclass(frozen=True)
class OptimSpec:
    """Adam settings shared by every variant.

    ``lr`` drives the mean-network weights; ``hyper_lr`` (when set) drives the
    kernel hyperparameters and the noise, otherwise they use ``lr`` as well.
    """

    iterations: int = 3000
    lr: float = 1e-2
    hyper_lr: float | None = 1e-3
    schedule: str = "constant"
    kernel_order: float = 2.5
    init_lengthscale: float = 1.0
    init_variance: float = 1.0
    init_noise: float = 1e-2


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str = "advection"
    n_train: int = 200
    n_test: int = 50
    resolution: int | None = None
    seed: int = 0
    variants: tuple = VARIANTS
    arch: ArchSpec = field(default_factory=ArchSpec)
    optim: OptimSpec = field(default_factory=OptimSpec)
    out_dir: str = "runs"
    preset: str = "desk"

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(f"problem must be one of {PROBLEMS}, got {self.problem!r}")
        if self.n_train < 1 or self.n_test < 1:
            raise ConfigError("n_train and n_test must be >= 1")
        object.__setattr__(self, "variants", tuple(self.variants))
        if self.resolution is None:
            object.__setattr__(self, "resolution", DEFAULT_RESOLUTION[self.problem])
        for v in self.variants:
            if v not in VARIANTS:
                raise ConfigError(f"unknown variant {v!r}; expected one of {VARIANTS}")
        if not self.variants:
            raise ConfigError("at least one variant is required")
        if self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        self.wno_config()  # validates levels against the grid
        self.train_config(self.variants[0])  # validates the optimiser table

    def wno_config(self) -> WnoConfig:
        dim = SPATIAL_DIM[self.problem]
        return WnoConfig(
            lift_width=self.arch.lift_width,
            proj_width=self.arch.proj_width,
            n_blocks=self.arch.n_blocks,
            levels=self.arch.levels,
            wavelet=self.arch.wavelet,
            spatial_dim=dim,
            in_channels=1 + dim,
            grid=(self.resolution,) * dim,
        )

    def train_config(self, variant: str, seed: int | None = None) -> TrainConfig:
        o = self.optim
        return TrainConfig(
            variant=variant,
            iterations=o.iterations,
            lr=o.lr,
            hyper_lr=o.hyper_lr,
            lr_schedule=o.schedule,
            seed=self.seed if seed is None else seed,
            wno=None if variant == "gp_zero_mean" else self.wno_config(),
            kernel_order=o.kernel_order,
            init_lengthscale=o.init_lengthscale,
            init_variance=o.init_variance,
            init_noise=o.init_noise,
        )

    def with_overrides(self, **changes) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})

    def to_dict(self) -> dict:
        d = asdict(self)
        d["variants"] = list(self.variants)
        if d["optim"]["hyper_lr"] is None:
            del d["optim"]["hyper_lr"]
        return d

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())


# Desk presets shrink sample counts and widths; paper presets keep the
# published sizes. Levels are capped at the deepest level the grid allows.
_PRESETS = {
    ("desk", "burgers"): dict(
        n_train=200, n_test=50, arch=ArchSpec(32, 64, 2, 3, "db6"),
    ),
    ("desk", "advection"): dict(
        n_train=200, n_test=50, arch=ArchSpec(32, 64, 2, 3, "db8"),
    ),
    ("desk", "poisson"): dict(
        # 2D full-batch steps cost about 1 s each on one core
        n_train=100, n_test=50, arch=ArchSpec(32, 64, 2, 2, "db4"), optim=OptimSpec(iterations=600),
    ),
    ("paper", "burgers"): dict(
        n_train=1000, n_test=50, resolution=512, arch=ArchSpec(64, 128, 4, 8, "db6"),
    ),
    ("paper", "advection"): dict(
        n_train=1000, n_test=50, arch=ArchSpec(96, 128, 4, 3, "db8"),
    ),
    ("paper", "poisson"): dict(
        n_train=500, n_test=50, arch=ArchSpec(64, 132, 4, 4, "db4"),
    ),
}


def preset(problem: str, name: str = "desk", **overrides) -> ExperimentConfig:
    """Named preset for ``problem`` ("desk" or "paper") with optional overrides."""
    key = (name, problem)
    if key not in _PRESETS:
        raise ConfigError(f"no preset {name!r} for problem {problem!r}")
    values = dict(_PRESETS[key], problem=problem, preset=name)
    values.update(overrides)
    return ExperimentConfig(**values)


def _build(cls, table: dict, where: str):
    known = {f.name for f in fields(cls)}
    unknown = set(table) - known
    if unknown:
        raise ConfigError(f"unknown keys in [{where}]: {sorted(unknown)}")
    try:
        return cls(**table)
    except TypeError as err:
        raise ConfigError(f"bad [{where}] table: {err}") from err


def from_dict(d: dict) -> ExperimentConfig:
    d = dict(d)
    problem = d.get("problem")
    if problem is None:
        raise ConfigError("config must set 'problem'")
    base = preset(problem, d.pop("preset", "desk"))
    arch = _build(ArchSpec, {**asdict(base.arch), **d.pop("arch", {})}, "arch")
    optim = _build(OptimSpec, {**asdict(base.optim), **d.pop("optim", {})}, "optim")
    top = {k: v for k, v in asdict(base).items() if k not in ("arch", "optim")}
    unknown = set(d) - set(top)
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    top.update(d)
    return ExperimentConfig(**top, arch=arch, optim=optim)


def loads(text: str) -> ExperimentConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"invalid config file: {err}") from err
    return from_dict(data)


def load(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    return loads(path.read_text(encoding="utf-8"))
