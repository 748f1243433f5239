"""Periodic orthonormal Daubechies wavelet transforms.

The transforms are critically sampled: a signal of length ``n`` produces
exactly ``n`` coefficients. Each level is a circular convolution followed by
downsampling by two, which on the periodic lattice is an orthogonal ``n x n``
matrix. The inverse transform is therefore the transpose, and ``dwt`` and
``idwt`` are adjoint to each other, which the autodiff hooks rely on.

Multi-dimensional transforms follow the Mallat scheme: at every level the
current approximation block is transformed once along each axis, giving
LL/LH/HL/HH subbands in 2D.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import ConfigError, ShapeError

# Reconstruction low-pass filters (time-reversed scaling filters), standard
# published values. dbN has N vanishing moments and 2N taps.
_REC_LO = {
    "db4": (
        0.2303778133088965,
        0.7148465705529157,
        0.6308807679298589,
        -0.027983769416859854,
        -0.18703481171909309,
        0.030841381835560764,
        0.0328830116668852,
        -0.010597401785069032,
    ),
    "db6": (
        0.11154074335010947,
        0.49462389039845306,
        0.7511339080210954,
        0.31525035170919763,
        -0.22626469396543983,
        -0.12976686756726194,
        0.09750160558732304,
        0.027522865530305727,
        -0.03158203931748603,
        0.0005538422011614961,
        0.004777257510945511,
        -0.0010773010853084796,
    ),
    "db8": (
        0.05441584224310401,
        0.31287159091429995,
        0.6756307362972898,
        0.5853546836542067,
        -0.015829105256349306,
        -0.2840155429615469,
        0.0004724845739132828,
        0.12874742662047847,
        -0.017369301001807547,
        -0.044088253930794755,
        0.013981027917398282,
        0.008746094047405777,
        -0.004870352993451574,
        -0.00039174037337694705,
        0.0006754494064505693,
        -0.00011747678412476953,
    ),
}

SUPPORTED = tuple(_REC_LO)


@dataclass(frozen=True)
class WaveletFilter:
    name: str
    dec_lo: np.ndarray
    dec_hi: np.ndarray
    rec_lo: np.ndarray
    rec_hi: np.ndarray

    @property
    def length(self) -> int:
        return len(self.dec_lo)

    @property
    def vanishing_moments(self) -> int:
        return len(self.dec_lo) // 2


@lru_cache(maxsize=None)
def filter_coeffs(name: str) -> WaveletFilter:
    """Return the orthonormal filter bank for ``name`` (db4, db6 or db8)."""
    if name not in _REC_LO:
        raise ConfigError(f"unsupported wavelet {name!r}; expected one of {SUPPORTED}")
    rec_lo = np.array(_REC_LO[name])
    L = len(rec_lo)
    dec_lo = rec_lo[::-1].copy()
    signs = (-1.0) ** np.arange(L)
    rec_hi = signs * rec_lo[::-1]
    dec_hi = rec_hi[::-1].copy()
    for arr in (dec_lo, dec_hi, rec_lo, rec_hi):
        arr.setflags(write=False)
    return WaveletFilter(name, dec_lo, dec_hi, rec_lo, rec_hi)


def _as_filter(wavelet) -> WaveletFilter:
    return wavelet if isinstance(wavelet, WaveletFilter) else filter_coeffs(wavelet)


@lru_cache(maxsize=256)
def _level_matrix(name: str, n: int) -> np.ndarray:
    """Single-level analysis matrix on a periodic lattice of even length n.

    Rows ``0..n/2-1`` produce approximation coefficients, rows ``n/2..n-1``
    detail coefficients. The matrix is orthogonal.
    """
    filt = filter_coeffs(name)
    half = n // 2
    lo = filt.rec_lo
    hi = filt.rec_hi
    M = np.zeros((n, n))
    taps = np.arange(len(lo))
    for k in range(half):
        cols = (2 * k + taps) % n
        np.add.at(M[k], cols, lo)
        np.add.at(M[half + k], cols, hi)
    M.setflags(write=False)
    return M


def _apply(M: np.ndarray, x: np.ndarray, axis: int) -> np.ndarray:
    """Multiply ``M`` into ``x`` along ``axis``."""
    shape = x.shape
    lead = int(np.prod(shape[:axis]))
    trail = int(np.prod(shape[axis + 1 :]))
    out = M @ np.ascontiguousarray(x).reshape(lead, shape[axis], trail)
    return out.reshape(shape[:axis] + (M.shape[0],) + shape[axis + 1 :])


@lru_cache(maxsize=256)
def approx_matrix(name: str, n: int, levels: int) -> np.ndarray:
    """Rows map a length-n signal to its level-``levels`` approximation coefficients."""
    A = np.eye(n)
    for lev in range(levels):
        m = n >> lev
        A = _level_matrix(name, m)[: m // 2] @ A
    A.setflags(write=False)
    return A


def approx_coeffs(x: np.ndarray, wavelet, levels: int, axes: Sequence[int]) -> np.ndarray:
    """Coarsest approximation band along ``axes`` (the LL..L block of :func:`dwt_packed`)."""
    filt = _as_filter(wavelet)
    x = np.asarray(x, dtype=np.float64)
    axes = [ax % x.ndim for ax in axes]
    check_levels(x.shape, levels, axes)
    for ax in axes:
        x = _apply(approx_matrix(filt.name, x.shape[ax], levels), x, ax)
    return x


def approx_synthesis(c: np.ndarray, wavelet, levels: int, axes: Sequence[int]) -> np.ndarray:
    """Inverse transform of an approximation band with all details zero.

    Adjoint of :func:`approx_coeffs`.
    """
    filt = _as_filter(wavelet)
    c = np.asarray(c, dtype=np.float64)
    for ax in [ax % c.ndim for ax in axes]:
        n = c.shape[ax] << levels
        c = _apply(approx_matrix(filt.name, n, levels).T, c, ax)
    return c


def check_levels(shape: Sequence[int], levels: int, axes: Sequence[int]) -> None:
    if levels < 1:
        raise ShapeError(f"levels must be >= 1, got {levels}")
    step = 2**levels
    for ax in axes:
        n = shape[ax]
        if n % step:
            raise ShapeError(
                f"axis {ax} has length {n}, which is not divisible by 2**{levels} = {step}"
            )


def dwt_packed(x: np.ndarray, wavelet, levels: int, axes: Sequence[int]) -> np.ndarray:
    """Multi-level transform along ``axes`` in packed (in-place Mallat) layout.

    The coarsest approximation occupies the leading ``n / 2**levels`` entries
    of every transformed axis.
    """
    filt = _as_filter(wavelet)
    x = np.asarray(x, dtype=np.float64)
    axes = [ax % x.ndim for ax in axes]
    check_levels(x.shape, levels, axes)
    out = x.copy()
    for lev in range(levels):
        region = [slice(None)] * x.ndim
        for ax in axes:
            region[ax] = slice(0, x.shape[ax] >> lev)
        region = tuple(region)
        block = out[region]
        for ax in axes:
            block = _apply(_level_matrix(filt.name, block.shape[ax]), block, ax)
        out[region] = block
    return out


def idwt_packed(c: np.ndarray, wavelet, levels: int, axes: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`dwt_packed` (and its adjoint)."""
    filt = _as_filter(wavelet)
    c = np.asarray(c, dtype=np.float64)
    axes = [ax % c.ndim for ax in axes]
    check_levels(c.shape, levels, axes)
    out = c.copy()
    for lev in reversed(range(levels)):
        region = [slice(None)] * c.ndim
        for ax in axes:
            region[ax] = slice(0, c.shape[ax] >> lev)
        region = tuple(region)
        block = out[region]
        for ax in axes:
            block = _apply(_level_matrix(filt.name, block.shape[ax]).T, block, ax)
        out[region] = block
    return out


@dataclass
class WaveletCoeffs:
    """Coefficients of a 1D or 2D multi-level transform.

    ``details`` runs finest to coarsest. In 1D each entry is an array; in 2D
    each entry is a tuple ``(LH, HL, HH)`` where the first letter names the
    filter applied along axis 0.
    """

    approx: np.ndarray
    details: list
    levels: int
    shape: tuple
    wavelet: str

    def __post_init__(self):
        if self.levels != len(self.details):
            raise ShapeError(
                f"levels={self.levels} but {len(self.details)} detail levels supplied"
            )

    def packed(self) -> np.ndarray:
        ndim = len(self.shape)
        out = np.zeros(self.shape)
        m = tuple(n >> self.levels for n in self.shape)
        if self.approx.shape != m:
            raise ShapeError(f"approximation has shape {self.approx.shape}, expected {m}")
        out[tuple(slice(0, k) for k in m)] = self.approx
        for lev, band in enumerate(self.details):
            half = tuple(n >> (lev + 1) for n in self.shape)
            if ndim == 1:
                (h,) = half
                if np.shape(band) != (h,):
                    raise ShapeError(f"detail level {lev} has shape {np.shape(band)}, expected {(h,)}")
                out[h : 2 * h] = band
            else:
                h0, h1 = half
                lh, hl, hh = band
                for arr in band:
                    if np.shape(arr) != (h0, h1):
                        raise ShapeError(
                            f"detail level {lev} subband has shape {np.shape(arr)}, expected {(h0, h1)}"
                        )
                out[:h0, h1 : 2 * h1] = lh
                out[h0 : 2 * h0, :h1] = hl
                out[h0 : 2 * h0, h1 : 2 * h1] = hh
        return out

    def energy(self) -> float:
        return float(np.sum(self.packed() ** 2))


def dwt(signal, wavelet, levels: int) -> WaveletCoeffs:
    """Forward transform of a 1D or 2D signal."""
    filt = _as_filter(wavelet)
    x = np.asarray(getattr(signal, "data", signal), dtype=np.float64)
    if x.ndim not in (1, 2):
        raise ShapeError(f"dwt expects a 1D or 2D signal, got shape {x.shape}")
    axes = list(range(x.ndim))
    packed = dwt_packed(x, filt, levels, axes)
    m = tuple(n >> levels for n in x.shape)
    approx = packed[tuple(slice(0, k) for k in m)].copy()
    details = []
    for lev in range(levels):
        half = tuple(n >> (lev + 1) for n in x.shape)
        if x.ndim == 1:
            (h,) = half
            details.append(packed[h : 2 * h].copy())
        else:
            h0, h1 = half
            details.append(
                (
                    packed[:h0, h1 : 2 * h1].copy(),
                    packed[h0 : 2 * h0, :h1].copy(),
                    packed[h0 : 2 * h0, h1 : 2 * h1].copy(),
                )
            )
    return WaveletCoeffs(approx, details, levels, x.shape, filt.name)


def idwt(coeffs: WaveletCoeffs, wavelet=None) -> np.ndarray:
    """Inverse transform; exact inverse of :func:`dwt` on the periodic lattice."""
    filt = _as_filter(wavelet if wavelet is not None else coeffs.wavelet)
    packed = coeffs.packed()
    return idwt_packed(packed, filt, coeffs.levels, list(range(packed.ndim)))
