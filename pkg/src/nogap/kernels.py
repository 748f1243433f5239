"""Half-integer Matérn covariance functions and their hyperparameter derivatives.

Only the closed-form orders 1/2, 3/2 and 5/2 are provided. Hyperparameters
are stored as logs so that optimisation is unconstrained.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DomainError, ShapeError

ORDERS = (0.5, 1.5, 2.5)


@dataclass(frozen=True)
class KernelHyper:
    order: float = 2.5
    log_lengthscale: float = 0.0
    log_variance: float = 0.0

    def __post_init__(self):
        if self.order not in ORDERS:
            raise ConfigError(f"Matérn order must be one of {ORDERS}, got {self.order}")

    @classmethod
    def create(cls, lengthscale=1.0, variance=1.0, order=2.5):
        if lengthscale <= 0 or variance <= 0:
            raise DomainError("lengthscale and variance must be positive")
        return cls(order, math.log(lengthscale), math.log(variance))

    @property
    def lengthscale(self) -> float:
        return math.exp(self.log_lengthscale)

    @property
    def variance(self) -> float:
        return math.exp(self.log_variance)

    def with_logs(self, log_lengthscale, log_variance):
        return replace(self, log_lengthscale=float(log_lengthscale), log_variance=float(log_variance))


def _profile(s, order):
    """Correlation profile rho(s) and its derivative d rho / d s."""
    if order == 0.5:
        e = np.exp(-s)
        return e, -e
    if order == 1.5:
        a = math.sqrt(3.0) * s
        e = np.exp(-a)
        return (1.0 + a) * e, -3.0 * s * e
    a = math.sqrt(5.0) * s
    e = np.exp(-a)
    return (1.0 + a + a * a / 3.0) * e, -(5.0 / 3.0) * s * (1.0 + a) * e


def _check_r(r):
    r = np.asarray(r, dtype=np.float64)
    if np.any(r < 0):
        raise DomainError("distance must be non-negative")
    return r


def matern(r, hyper: KernelHyper):
    """Covariance ``variance * rho(r / lengthscale)`` for distances ``r >= 0``."""
    r = _check_r(r)
    rho, _ = _profile(r / hyper.lengthscale, hyper.order)
    return hyper.variance * rho


def matern_grad(r, hyper: KernelHyper):
    """Derivatives of :func:`matern` with respect to log lengthscale and log variance."""
    r = _check_r(r)
    s = r / hyper.lengthscale
    rho, drho = _profile(s, hyper.order)
    k = hyper.variance * rho
    return -hyper.variance * drho * s, k


def pairwise_distance(a, b=None):
    """Euclidean distances between the rows of ``a`` and ``b``."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = a if b is None else np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"point dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    sq = (
        np.sum(a * a, axis=1)[:, None]
        + np.sum(b * b, axis=1)[None, :]
        - 2.0 * a @ b.T
    )
    return np.sqrt(np.maximum(sq, 0.0))


def field_distance(a, b=None):
    """Scaled distance between flattened fields, ``|a_i - a_j| / sqrt(size)``.

    Keeps lengthscales comparable across grid resolutions.
    """
    a = np.asarray(a, dtype=np.float64)
    a2 = a.reshape(a.shape[0], -1)
    b2 = None if b is None else np.asarray(b, dtype=np.float64).reshape(np.shape(b)[0], -1)
    return pairwise_distance(a2, b2) / math.sqrt(a2.shape[1])


def distance_matrix(points):
    """Symmetric distance matrix with an exactly zero diagonal."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if pts.ndim != 2:
        raise ShapeError("points must be a list of equal-length vectors")
    D = pairwise_distance(pts)
    iu = np.triu_indices(len(pts), 1)
    out = np.zeros_like(D)
    out[iu] = D[iu]
    return out + out.T


def gram(points, hyper: KernelHyper, distance=None):
    """Gram matrix ``G[i, j] = matern(|p_i - p_j|)``; exactly symmetric.

    ``distance`` may be a precomputed symmetric distance matrix.
    """
    if distance is None:
        try:
            pts = np.array(points, dtype=np.float64)
        except ValueError as err:
            raise ShapeError("all points must have the same dimension") from err
        if pts.ndim == 1:
            pts = pts[:, None]
        distance = distance_matrix(pts)
    D = np.asarray(distance)
    n = D.shape[0]
    iu = np.triu_indices(n, 1)
    G = np.empty((n, n))
    upper = matern(D[iu], hyper)
    G[iu] = upper
    G.T[iu] = upper
    G[np.diag_indices(n)] = hyper.variance
    return G
