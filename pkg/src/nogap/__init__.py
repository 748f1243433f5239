"""Gaussian-process regression with a wavelet neural operator as the mean function.

Submodules:

- ``autodiff``: tape-based reverse-mode differentiation
- ``wavelet``: periodic Daubechies transforms
- ``wno``: the wavelet neural operator
- ``kernels`` and ``kron``: Matérn kernels and Kronecker algebra
- ``gp``: likelihood, training and posterior prediction
- ``datagen``: Burgers, advection and Poisson benchmarks
- ``metrics``, ``config``, ``experiment``, ``cli``: evaluation and plumbing
"""

from .errors import (
    ConfigError,
    ContractError,
    DomainError,
    FormatError,
    NogapError,
    NumericError,
    ShapeError,
    SolverDivergence,
    TrainingDiverged,
)
from .gp import Posterior, TrainConfig, TrainedModel, ci_band, nlml, predict, train
from .wno import WnoConfig

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ContractError",
    "DomainError",
    "FormatError",
    "NogapError",
    "NumericError",
    "Posterior",
    "ShapeError",
    "SolverDivergence",
    "TrainConfig",
    "TrainedModel",
    "TrainingDiverged",
    "WnoConfig",
    "ci_band",
    "nlml",
    "predict",
    "train",
]
