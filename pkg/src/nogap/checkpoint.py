"""Model checkpoints in the binary container format."""

from __future__ import annotations

import json
import math

import numpy as np

from . import container
from .datagen import Normalizer
from .errors import FormatError
from .gp import GPData, NogapParams, TrainedModel, _symmetric, covariance
from .kernels import KernelHyper, distance_matrix, field_distance
from .wno import WnoConfig, WnoParams, unit_coordinates

FORMAT = "nogap-model"


def _hyper_tensor(h: KernelHyper) -> np.ndarray:
    return np.array([h.order, h.log_lengthscale, h.log_variance])


def _hyper_from(arr) -> KernelHyper:
    order, log_h, log_v = (float(a) for a in arr)
    return KernelHyper(order, log_h, log_v)


def save_model(model: TrainedModel, path, dataset_hash: str = "", extra_meta: dict | None = None) -> str:
    """Write ``model`` to ``path``; returns the file's content hash."""
    p = model.params
    tensors = {
        "norm.input.mean": model.input_norm.mean,
        "norm.input.std": model.input_norm.std,
        "norm.output.mean": model.output_norm.mean,
        "norm.output.std": model.output_norm.std,
        "train_features": model.train_features,
        "kx": _hyper_tensor(p.kx),
        "log_noise": np.array([p.log_noise]),
    }
    tensors.update({f"grid.{i}": g for i, g in enumerate(model.grid)})
    tensors.update({f"kf{i}": _hyper_tensor(h) for i, h in enumerate(p.kf)})
    if p.wno is not None:
        tensors.update({f"wno.{k}": v for k, v in p.wno.tensors.items()})
    if model.alpha is not None:
        tensors["alpha"] = model.alpha
        tensors["residual"] = model.residual
    meta = {
        "format": FORMAT,
        "variant": model.variant,
        "nlml": repr(float(model.nlml)),
        "dataset_hash": dataset_hash,
        "wno_config": json.dumps(p.wno.config.as_dict()) if p.wno is not None else "",
        "n_kf": str(len(p.kf)),
    }
    meta.update({k: str(v) for k, v in (extra_meta or {}).items()})
    return container.write(path, meta, tensors, container.CHECKPOINT_MAGIC)


def load_model(path) -> tuple:
    """Read a checkpoint; returns ``(model, meta)`` with prediction caches rebuilt."""
    meta, t = container.read(path, container.CHECKPOINT_MAGIC)
    if meta.get("format") != FORMAT:
        raise FormatError(f"{path} is not a model checkpoint")
    try:
        wno = None
        if meta["wno_config"]:
            cfg = json.loads(meta["wno_config"])
            cfg["grid"] = tuple(cfg["grid"])
            config = WnoConfig(**cfg)
            wno = WnoParams(config, {k: t[f"wno.{k}"] for k in config.param_shapes()})
        n_kf = int(meta["n_kf"])
        params = NogapParams(
            wno,
            _hyper_from(t["kx"]),
            tuple(_hyper_from(t[f"kf{i}"]) for i in range(n_kf)),
            float(t["log_noise"][0]),
        )
        grid = [t[f"grid.{i}"] for i in range(n_kf)]
        model = TrainedModel(
            params=params,
            variant=meta["variant"],
            input_norm=Normalizer(t["norm.input.mean"], t["norm.input.std"]),
            output_norm=Normalizer(t["norm.output.mean"], t["norm.output.std"]),
            grid=grid,
            train_features=t["train_features"],
            alpha=t.get("alpha"),
            residual=t.get("residual"),
            nlml=float(meta["nlml"]),
            meta=dict(meta),
        )
    except (KeyError, ValueError, TypeError) as err:
        raise FormatError(f"incomplete checkpoint {path}: {err}") from err
    if model.has_gp:
        if model.alpha is None:
            raise FormatError(f"checkpoint {path} lacks the GP weights")
        coords = [unit_coordinates(g) for g in grid]
        data = GPData(
            features=model.train_features,
            wno_inputs=None,
            targets=None,
            coords=coords,
            dist_x=_symmetric(field_distance(model.train_features)),
            dist_f=[distance_matrix(c[:, None]) for c in coords],
        )
        model.kron = covariance(data, params)
    if not math.isfinite(model.nlml):
        raise FormatError(f"checkpoint {path} records a non-finite objective")
    return model, meta

