"""Error and calibration metrics."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ShapeError
from .gp import Posterior, ci_band


def relative_error(pred, true) -> float:
    """Relative L2 error ``100 * |pred - true| / |true|`` in percent."""
    pred = np.asarray(pred, dtype=np.float64)
    true = np.asarray(true, dtype=np.float64)
    if pred.shape != true.shape:
        raise ShapeError(f"prediction shape {pred.shape} != truth shape {true.shape}")
    denom = np.linalg.norm(true.ravel())
    if denom == 0:
        raise DomainError("relative error is undefined for an all-zero truth field")
    return float(100.0 * np.linalg.norm((pred - true).ravel()) / denom)


def per_sample_errors(pred, true) -> np.ndarray:
    """Relative error of every sample along the leading axis."""
    pred = np.asarray(pred, dtype=np.float64)
    true = np.asarray(true, dtype=np.float64)
    if pred.shape != true.shape:
        raise ShapeError(f"prediction shape {pred.shape} != truth shape {true.shape}")
    return np.array([relative_error(p, t) for p, t in zip(pred, true)])


def coverage(posterior: Posterior, true, level: float = 0.95) -> float:
    """Fraction of grid points, pooled over samples, whose truth lies in the band."""
    true = np.asarray(true, dtype=np.float64)
    if true.shape != posterior.mean.shape:
        raise ShapeError(f"truth shape {true.shape} != posterior shape {posterior.mean.shape}")
    lo, hi = ci_band(posterior, level)
    inside = (true >= lo) & (true <= hi)
    return float(np.mean(inside))


@dataclass
class EvalReport:
    errors: np.ndarray
    mean_std: float
    coverage95: float
    runtime: float = 0.0
    labels: dict = field(default_factory=dict)

    def __post_init__(self):
        self.errors = np.asarray(self.errors, dtype=np.float64)
        if np.any(self.errors < 0):
            raise DomainError("errors must be non-negative")
        if not 0.0 <= self.coverage95 <= 1.0:
            raise DomainError(f"coverage {self.coverage95} outside [0, 1]")

    @property
    def error_mean(self) -> float:
        return float(np.mean(self.errors))

    @property
    def error_std(self) -> float:
        return float(np.std(self.errors))

    def summary(self) -> dict:
        out = dict(self.labels)
        out.update(
            {
                "n_test": int(self.errors.size),
                "error_mean": self.error_mean,
                "error_std": self.error_std,
                "mean_std": self.mean_std,
                "coverage95": self.coverage95,
                "runtime": self.runtime,
            }
        )
        return out

    def to_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in self.summary().items())

    def csv_header(self) -> list:
        return list(self.summary())

    def csv_row(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.summary().values())
        return buf.getvalue()


def evaluate(posterior: Posterior, true, runtime: float = 0.0, **labels) -> EvalReport:
    """Bundle error, spread and coverage of ``posterior`` against ``true``."""
    errs = per_sample_errors(posterior.mean, true)
    return EvalReport(
        errors=errs,
        mean_std=float(np.mean(posterior.std)),
        coverage95=coverage(posterior, true, 0.95),
        runtime=runtime,
        labels={k: str(v) for k, v in labels.items()},
    )


def mean_pm_std(values) -> tuple:
    """Mean and sample standard deviation (ddof=1; 0 for a single value)."""
    arr = np.asarray(values, dtype=np.float64)
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), std


def parse_summary(text: str) -> dict:
    """Inverse of :meth:`EvalReport.to_text`; numeric fields become floats."""
    out = {}
    for line in text.splitlines():
        if "=" not in line:
            continue
        key, value = line.split("=", 1)
        try:
            out[key] = float(value)
        except ValueError:
            out[key] = value
    return out
