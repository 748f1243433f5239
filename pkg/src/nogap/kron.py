"""Exact algebra for ``K_1 ⊗ ... ⊗ K_m + s I`` via per-factor eigendecompositions.

Vectors are laid out in C order over the factor dimensions, i.e. factor 0 is
the slowest-varying index. Nothing of size ``prod(dims)**2`` is ever formed.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ContractError, DomainError, ShapeError


def kron_mv(factors: Sequence[np.ndarray], v: np.ndarray) -> np.ndarray:
    """``(A_1 ⊗ ... ⊗ A_m) v`` by sequential mode products.

    Factors may be rectangular; ``v`` may carry trailing batch columns.
    """
    dims_in = [A.shape[1] for A in factors]
    v = np.asarray(v, dtype=np.float64)
    batch = v.shape[1:] if v.ndim > 1 else ()
    if v.shape[0] != int(np.prod(dims_in)):
        raise ShapeError(f"vector length {v.shape[0]} != product of factor dims {dims_in}")
    x = v.reshape(*dims_in, *batch)
    for i, A in enumerate(factors):
        x = np.moveaxis(np.tensordot(A, x, axes=([1], [i])), 0, i)
    return x.reshape(-1, *batch)


def _outer_grid(vectors):
    out = np.ones(())
    for v in vectors:
        out = np.multiply.outer(out, v)
    return out


class KronOperator:
    """Kronecker product of symmetric PSD factors with cached eigenbases."""

    def __init__(self, factors: Sequence[np.ndarray], symmetry_tol: float = 1e-12):
        self.factors = [np.asarray(K, dtype=np.float64) for K in factors]
        self.eigvals = []
        self.eigvecs = []
        self.clamp_count = 0
        for i, K in enumerate(self.factors):
            if K.ndim != 2 or K.shape[0] != K.shape[1]:
                raise ShapeError(f"factor {i} is not square: {K.shape}")
            scale = max(1.0, float(np.max(np.abs(K)))) if K.size else 1.0
            if np.max(np.abs(K - K.T), initial=0.0) > symmetry_tol * scale:
                raise ShapeError(f"factor {i} is not symmetric")
            lam, Q = np.linalg.eigh(K)
            neg = lam < 0
            self.clamp_count += int(np.count_nonzero(neg))
            lam = np.where(neg, 0.0, lam)
            self.eigvals.append(lam)
            self.eigvecs.append(Q)
        self._lam_grid = _outer_grid(self.eigvals)

    @property
    def dims(self):
        return [K.shape[0] for K in self.factors]

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    def eigenvalue_grid(self) -> np.ndarray:
        """Eigenvalues of the full product, shaped like the factor grid."""
        return self._lam_grid

    def _check(self, v):
        v = np.asarray(v, dtype=np.float64)
        if v.shape[0] != self.size:
            raise ShapeError(f"vector length {v.shape[0]} != operator dimension {self.size}")
        return v

    @staticmethod
    def _check_shift(s2):
        if not s2 > 0:
            raise DomainError(f"shift must be positive, got {s2}")

    def matvec(self, v):
        return kron_mv(self.factors, self._check(v))

    def rotate(self, v, transpose=True):
        """Apply ``(Q_1 ⊗ ... ⊗ Q_m)^T`` (or its transpose) to ``v``."""
        Qs = [Q.T for Q in self.eigvecs] if transpose else self.eigvecs
        return kron_mv(Qs, self._check(v))

    def shifted_solve(self, s2: float, rhs):
        """Solve ``(K + s2 I) x = rhs``."""
        self._check_shift(s2)
        rhs = self._check(rhs)
        batch = rhs.shape[1:]
        t = self.rotate(rhs).reshape(*self.dims, *batch)
        denom = (self._lam_grid + s2).reshape(self._lam_grid.shape + (1,) * len(batch))
        return self.rotate((t / denom).reshape(rhs.shape), transpose=False)

    def logdet(self, s2: float) -> float:
        self._check_shift(s2)
        return float(np.sum(np.log(self._lam_grid + s2)))

    def inverse_trace(self, s2: float) -> float:
        """``tr((K + s2 I)^-1)``."""
        self._check_shift(s2)
        return float(np.sum(1.0 / (self._lam_grid + s2)))

    def solve_trace(self, s2: float, index: int, dK: np.ndarray) -> float:
        """``tr((K + s2 I)^-1 (I.. ⊗ dK_index ⊗ ..))`` with the other factors kept.

        I.e. the trace against the operator whose factor ``index`` is replaced by
        ``dK``, evaluated in the joint eigenbasis.
        """
        self._check_shift(s2)
        if not 0 <= index < len(self.factors):
            raise ContractError(f"factor index {index} out of range")
        dK = np.asarray(dK, dtype=np.float64)
        if dK.shape != self.factors[index].shape:
            raise ShapeError(f"dK has shape {dK.shape}, factor {index} is {self.factors[index].shape}")
        Q = self.eigvecs[index]
        d = np.sum(Q * (dK @ Q), axis=0)
        parts = list(self.eigvals)
        parts[index] = d
        return float(np.sum(_outer_grid(parts) / (self._lam_grid + s2)))

    def dense(self) -> np.ndarray:
        """Materialise the full matrix (testing only)."""
        out = np.ones((1, 1))
        for K in self.factors:
            out = np.kron(out, K)
        return out


def kron_matvec(op: KronOperator, v):
    return op.matvec(v)


def kron_shifted_solve(op: KronOperator, s2: float, rhs):
    return op.shifted_solve(s2, rhs)


def kron_logdet(op: KronOperator, s2: float) -> float:
    return op.logdet(s2)


def kron_solve_trace(op: KronOperator, s2: float, index: int, dK) -> float:
    return op.solve_trace(s2, index, dK)
