"""Gaussian-process regression with a wavelet-neural-operator mean.

The training covariance is ``K_x ⊗ K_f1 [⊗ K_f2] + s2 I`` where ``K_x`` is a
Matérn Gram matrix over input fields and each ``K_f`` a Matérn Gram matrix
over one output coordinate axis. Targets are laid out sample-major,
``q[i * M + m]`` for sample ``i`` and grid point ``m``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from statistics import NormalDist

from . import autodiff as ad
from .datagen import Dataset, Normalizer
from .errors import ConfigError, DomainError, NumericError, ShapeError, TrainingDiverged
from .kernels import KernelHyper, distance_matrix, field_distance, gram, matern, matern_grad
from .kron import KronOperator, kron_mv
from .wno import WnoConfig, WnoParams, add_coordinates, unit_coordinates, wno_forward, wno_init

log = logging.getLogger(__name__)

NOISE_FLOOR = 1e-8
LOG_NOISE_FLOOR = math.log(NOISE_FLOOR)
VARIANTS = ("nogap", "wno_only", "gp_zero_mean")
SCHEDULES = ("constant", "cosine")
_LOG_2PI = math.log(2 * math.pi)


@dataclass
class GPData:
    """Normalised training arrays and the fixed distance matrices."""

    features: np.ndarray  # [N, grid.., c] normalised input fields
    wno_inputs: np.ndarray  # features plus coordinate channels
    targets: np.ndarray  # [N, M] normalised outputs
    coords: list  # unit coordinates per output axis
    dist_x: np.ndarray
    dist_f: list

    @property
    def n(self):
        return self.targets.shape[0]

    @property
    def grid_shape(self):
        return tuple(len(c) for c in self.coords)


def prepare(dataset: Dataset, input_norm: Normalizer | None = None, output_norm: Normalizer | None = None) -> GPData:
    input_norm = input_norm or dataset.input_norm
    output_norm = output_norm or dataset.output_norm
    feats = input_norm.encode(dataset.inputs)
    coords = [unit_coordinates(g) for g in dataset.grid]
    targets = output_norm.encode(dataset.outputs).reshape(dataset.n, -1)
    return GPData(
        features=feats,
        wno_inputs=add_coordinates(feats, dataset.grid),
        targets=targets,
        coords=coords,
        dist_x=_symmetric(field_distance(feats)),
        dist_f=[distance_matrix(c[:, None]) for c in coords],
    )


def _symmetric(D):
    D = 0.5 * (D + D.T)
    np.fill_diagonal(D, 0.0)
    return D


@dataclass
class NogapParams:
    wno: WnoParams | None
    kx: KernelHyper
    kf: tuple
    log_noise: float

    @property
    def noise(self) -> float:
        return math.exp(self.log_noise)

    @property
    def prior_variance(self) -> float:
        return self.kx.variance * math.prod(k.variance for k in self.kf)

    def hyper_items(self):
        """(name, KernelHyper) for every covariance factor, in factor order."""
        return [("kx", self.kx)] + [(f"kf{i}", k) for i, k in enumerate(self.kf)]

    def trainables(self, include_mean=True) -> dict:
        out = {}
        if include_mean and self.wno is not None:
            out.update({f"wno.{k}": v for k, v in self.wno.tensors.items()})
        for name, hyp in self.hyper_items():
            out[f"{name}.log_lengthscale"] = np.array(hyp.log_lengthscale)
            out[f"{name}.log_variance"] = np.array(hyp.log_variance)
        out["log_noise"] = np.array(self.log_noise)
        return out

    def with_trainables(self, values: dict) -> "NogapParams":
        wno = self.wno
        if wno is not None and any(k.startswith("wno.") for k in values):
            wno = wno.replace({k: values.get(f"wno.{k}", v) for k, v in wno.tensors.items()})

        def hyp(name, h):
            return h.with_logs(
                values.get(f"{name}.log_lengthscale", h.log_lengthscale),
                values.get(f"{name}.log_variance", h.log_variance),
            )

        return NogapParams(
            wno,
            hyp("kx", self.kx),
            tuple(hyp(f"kf{i}", k) for i, k in enumerate(self.kf)),
            float(values.get("log_noise", self.log_noise)),
        )


def init_params(data: GPData, wno_config: WnoConfig | None, seed: int = 0, order=2.5,
                lengthscale=1.0, variance=1.0, noise=1e-2) -> NogapParams:
    hyp = KernelHyper.create(lengthscale, variance, order)
    wno = wno_init(wno_config, seed) if wno_config is not None else None
    return NogapParams(wno, hyp, tuple(hyp for _ in data.coords), math.log(noise))


def covariance(data: GPData, params: NogapParams) -> KronOperator:
    factors = [gram(None, params.kx, distance=data.dist_x)]
    factors += [gram(None, h, distance=D) for h, D in zip(params.kf, data.dist_f)]
    return KronOperator(factors)


def mean_function(params: NogapParams, wno_inputs, tape: ad.Tape | None = None):
    """Mean on ``wno_inputs``; returns (values [N, M], output tensor, watched params)."""
    n = wno_inputs.shape[0]
    m = int(np.prod(wno_inputs.shape[1:-1]))
    if params.wno is None:
        return np.zeros((n, m)), None, None
    watched = params.wno.watch(tape) if tape is not None else params.wno.tensors
    h = wno_forward(watched, wno_inputs, params.wno.config)
    return h.data.reshape(n, m), h, watched


def _residual(data, values):
    r = data.targets - values
    bad = ~np.all(np.isfinite(r), axis=1)
    if bad.any():
        idx = int(np.argmax(bad))
        raise NumericError(f"non-finite mean prediction for training sample {idx}", sample_index=idx)
    return r


def nlml(data: GPData, params: NogapParams, with_grad: bool = True):
    """Negative log marginal likelihood and its gradient over all trainables.

    Returns ``(value, grads)`` with ``grads`` keyed like
    :meth:`NogapParams.trainables` (``None`` when ``with_grad`` is false).
    """
    with ad.Tape() as tape:
        hv, h, watched = mean_function(params, data.wno_inputs, tape if with_grad else None)
    r = _residual(data, hv).ravel()
    op = covariance(data, params)
    s2 = params.noise
    alpha = op.shifted_solve(s2, r)
    value = 0.5 * float(r @ alpha) + 0.5 * op.logdet(s2) + 0.5 * r.size * _LOG_2PI
    if not with_grad:
        return value, None
    grads = {}
    if h is not None:
        adj = ad.backward(tape, -alpha.reshape(h.shape), h.node)
        grads.update({f"wno.{k}": adj[t.node] for k, t in watched.items()})
        tape.release()
    distances = [data.dist_x] + list(data.dist_f)
    for idx, ((name, hyp), D) in enumerate(zip(params.hyper_items(), distances)):
        d_logh, d_logv = matern_grad(D, hyp)
        np.fill_diagonal(d_logv, hyp.variance)
        for key, dK in (("log_lengthscale", d_logh), ("log_variance", d_logv)):
            factors = list(op.factors)
            factors[idx] = dK
            quad = float(alpha @ kron_mv(factors, alpha))
            grads[f"{name}.{key}"] = np.array(-0.5 * quad + 0.5 * op.solve_trace(s2, idx, dK))
    grads["log_noise"] = np.array(-0.5 * s2 * float(alpha @ alpha) + 0.5 * s2 * op.inverse_trace(s2))
    return value, grads


# -- optimisation ---------------------------------------------------------------------


class Adam:
    """Adam over a dict of arrays; returns fresh arrays on every step."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, lr_overrides=None):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.lr_overrides = lr_overrides or {}
        self.scale = 1.0  # multiplier set by a learning-rate schedule
        self.m, self.v, self.t = {}, {}, 0

    def _lr(self, key):
        for prefix, lr in self.lr_overrides.items():
            if key.startswith(prefix):
                return lr * self.scale
        return self.lr * self.scale

    def step(self, params: dict, grads: dict) -> dict:
        self.t += 1
        out = dict(params)
        c1 = 1 - self.beta1**self.t
        c2 = 1 - self.beta2**self.t
        for key, g in grads.items():
            m = self.m.get(key, 0.0) * self.beta1 + (1 - self.beta1) * g
            v = self.v.get(key, 0.0) * self.beta2 + (1 - self.beta2) * g * g
            self.m[key], self.v[key] = m, v
            out[key] = params[key] - self._lr(key) * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return out


@dataclass
class TrainConfig:
    variant: str = "nogap"
    iterations: int = 500
    lr: float = 1e-3
    hyper_lr: float | None = None
    seed: int = 0
    wno: WnoConfig | None = None
    kernel_order: float = 2.5
    init_lengthscale: float = 1.0
    init_variance: float = 1.0
    init_noise: float = 1e-2
    freeze_mean: bool = False
    lr_schedule: str = "constant"

    def __post_init__(self):
        if self.lr_schedule not in SCHEDULES:
            raise ConfigError(f"lr_schedule must be one of {SCHEDULES}, got {self.lr_schedule!r}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")
        if self.variant != "gp_zero_mean" and self.wno is None:
            raise ConfigError(f"variant {self.variant!r} needs a WNO config")


@dataclass
class TrainedModel:
    params: NogapParams
    variant: str
    input_norm: Normalizer
    output_norm: Normalizer
    grid: list
    train_features: np.ndarray
    alpha: np.ndarray | None
    residual: np.ndarray | None
    kron: KronOperator | None = None
    log: list = field(default_factory=list)
    nlml: float = float("nan")
    meta: dict = field(default_factory=dict)

    @property
    def grid_shape(self):
        return tuple(len(g) for g in self.grid)

    @property
    def has_gp(self) -> bool:
        return self.variant != "wno_only"

    def check(self, rtol=1e-6) -> float:
        """Relative residual of ``(K + s2 I) alpha = q - h(Z)``."""
        lhs = self.kron.matvec(self.alpha) + self.params.noise * self.alpha
        return float(np.linalg.norm(lhs - self.residual) / max(np.linalg.norm(self.residual), 1e-300))


def finalize(dataset: Dataset, params: NogapParams, variant: str, log_rows=None, data: GPData | None = None) -> TrainedModel:
    """Build prediction caches for fixed parameters."""
    data = data or prepare(dataset)
    model = TrainedModel(
        params=params,
        variant=variant,
        input_norm=dataset.input_norm,
        output_norm=dataset.output_norm,
        grid=[np.asarray(g) for g in dataset.grid],
        train_features=data.features,
        alpha=None,
        residual=None,
        log=list(log_rows or []),
    )
    if variant == "wno_only":
        hv, _, _ = mean_function(params, data.wno_inputs)
        model.nlml = float(np.mean((hv - data.targets) ** 2))
        return model
    hv, _, _ = mean_function(params, data.wno_inputs)
    r = _residual(data, hv).ravel()
    op = covariance(data, params)
    model.kron = op
    model.residual = r
    model.alpha = op.shifted_solve(params.noise, r)
    model.nlml = 0.5 * float(r @ model.alpha) + 0.5 * op.logdet(params.noise) + 0.5 * r.size * _LOG_2PI
    return model


def lr_scale(schedule: str, it: int, iterations: int) -> float:
    """Learning-rate multiplier at iteration ``it``."""
    if schedule == "cosine" and iterations > 0:
        return 0.5 * (1.0 + math.cos(math.pi * it / iterations))
    return 1.0


def _log_row(it, value, params: NogapParams):
    row = {"iteration": it, "objective": value, "noise_std": math.sqrt(params.noise)}
    for name, hyp in params.hyper_items():
        row[f"{name}_lengthscale"] = hyp.lengthscale
        row[f"{name}_variance"] = hyp.variance
    return row


def train(dataset: Dataset, config: TrainConfig) -> TrainedModel:
    """Full-batch Adam on the NLML (or on the mean-squared error for ``wno_only``).

    The returned model holds the best iterate seen. A non-finite objective
    raises :class:`TrainingDiverged` carrying the best finite model.
    """
    if dataset.n < 2:
        raise ConfigError("training needs at least two samples")
    data = prepare(dataset)
    wno_cfg = None if config.variant == "gp_zero_mean" else config.wno
    params = init_params(
        data, wno_cfg, config.seed, config.kernel_order,
        config.init_lengthscale, config.init_variance, config.init_noise,
    )
    if config.variant == "wno_only":
        return _train_mse(dataset, data, params, config)

    include_mean = not config.freeze_mean
    overrides = {} if config.hyper_lr is None else {k: config.hyper_lr for k in ("kx.", "kf", "log_noise")}
    opt = Adam(config.lr, lr_overrides=overrides)
    rows = []
    best_value, best_params = math.inf, params
    for it in range(config.iterations + 1):
        try:
            value, grads = nlml(data, params, with_grad=it < config.iterations)
        except NumericError as err:
            value, grads = math.nan, None
            log.warning("objective failed at iteration %d: %s", it, err)
        if not math.isfinite(value):
            best = finalize(dataset, best_params, config.variant, rows, data)
            raise TrainingDiverged(f"NLML became non-finite at iteration {it}", best, rows)
        rows.append(_log_row(it, value, params))
        if value < best_value:
            best_value, best_params = value, params
        if it == config.iterations:
            break
        if not include_mean:
            grads = {k: g for k, g in grads.items() if not k.startswith("wno.")}
        opt.scale = lr_scale(config.lr_schedule, it, config.iterations)
        values = opt.step(params.trainables(include_mean), grads)
        values["log_noise"] = np.maximum(values["log_noise"], LOG_NOISE_FLOOR)
        params = params.with_trainables(values)
        if it % 100 == 0:
            log.info("iter %d nlml %.6g noise %.3g", it, value, params.noise)
    return finalize(dataset, best_params, config.variant, rows, data)


def _train_mse(dataset, data, params, config):
    opt = Adam(config.lr)
    rows = []
    best_value, best_params = math.inf, params
    n_out = data.targets.size
    for it in range(config.iterations + 1):
        with ad.Tape() as tape:
            hv, h, watched = mean_function(params, data.wno_inputs, tape)
        diff = hv - data.targets
        value = float(np.mean(diff**2))
        if not math.isfinite(value):
            best = finalize(dataset, best_params, "wno_only", rows, data)
            raise TrainingDiverged(f"MSE became non-finite at iteration {it}", best, rows)
        rows.append({"iteration": it, "objective": value})
        if value < best_value:
            best_value, best_params = value, params
        if it == config.iterations:
            break
        adj = ad.backward(tape, (2.0 / n_out) * diff.reshape(h.shape), h.node)
        grads = {f"wno.{k}": adj[t.node] for k, t in watched.items()}
        tape.release()
        opt.scale = lr_scale(config.lr_schedule, it, config.iterations)
        params = params.with_trainables(opt.step(params.trainables(), grads))
    return finalize(dataset, best_params, "wno_only", rows, data)


# -- prediction -----------------------------------------------------------------------


@dataclass
class Posterior:
    mean: np.ndarray
    std: np.ndarray
    noise_included: bool = False


def _apply_output_factors(factors, X):
    """Apply ``K_f1 ⊗ K_f2 ..`` to every row of ``X[n, M]``."""
    return kron_mv(factors, X.T).T


def posterior_normalized(model: TrainedModel, h_star: np.ndarray, kx_cross: np.ndarray, include_noise=False):
    """Normalised predictive mean and variance from the mean and cross-Gram.

    ``h_star`` is ``[N*, M]``; ``kx_cross`` is ``[N, N*]`` (training x test).
    """
    if model.variant == "wno_only":
        return h_star, np.zeros_like(h_star)
    op = model.kron
    s2 = model.params.noise
    N = op.dims[0]
    if kx_cross.shape[0] != N:
        raise ShapeError(f"cross-covariance has {kx_cross.shape[0]} rows, expected {N}")
    kf, kf_vals, kf_vecs = op.factors[1:], op.eigvals[1:], op.eigvecs[1:]
    A = model.alpha.reshape(N, -1)
    mean = h_star + _apply_output_factors(kf, kx_cross.T @ A)

    # diag of (k*^T ⊗ K_f)(K + s2 I)^-1 (k* ⊗ K_f), evaluated in the joint eigenbasis
    U2 = (op.eigvecs[0].T @ kx_cross) ** 2  # [N, N*]
    lf = np.ones(())
    for v in kf_vals:
        lf = np.multiply.outer(lf, v)
    lf = lf.ravel()
    W = U2.T @ (1.0 / (np.multiply.outer(op.eigvals[0], lf) + s2))  # [N*, M]
    reduction = _apply_output_factors([Q * Q for Q in kf_vecs], W * lf**2)
    kf_diag = np.ones(())
    for K in kf:
        kf_diag = np.multiply.outer(kf_diag, np.diag(K))
    prior = model.params.kx.variance * kf_diag.ravel()
    var = prior[None, :] - reduction
    tol = 1e-10 * max(1.0, float(prior.max()))
    if np.any(var < -tol):
        raise NumericError(f"posterior variance {var.min():.3g} is negative beyond roundoff")
    var = np.maximum(var, 0.0)
    if include_noise:
        var = var + s2
    return mean, var


def predict(model: TrainedModel, inputs, include_noise: bool = False) -> Posterior:
    """Posterior mean and pointwise standard deviation for raw input fields.

    ``inputs`` is ``[N*, grid.., c]`` (or a :class:`Dataset`); results are
    de-normalised to the output scale.
    """
    if isinstance(inputs, Dataset):
        inputs = inputs.inputs
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.shape[1:-1] != model.grid_shape:
        raise ShapeError(f"test grid {inputs.shape[1:-1]} != training grid {model.grid_shape}")
    feats = model.input_norm.encode(inputs)
    h_star, _, _ = mean_function(model.params, add_coordinates(feats, model.grid))
    if model.has_gp:
        kx_cross = matern(field_distance(model.train_features, feats), model.params.kx)
    else:
        kx_cross = None
    mean, var = posterior_normalized(model, h_star, kx_cross, include_noise)
    shape = (inputs.shape[0],) + model.grid_shape
    scale = float(model.output_norm.std[0])
    return Posterior(
        mean=model.output_norm.decode(mean).reshape(shape),
        std=(np.sqrt(var) * scale).reshape(shape),
        noise_included=include_noise,
    )


def ci_band(posterior: Posterior, level: float = 0.95):
    """Central ``level`` band ``mean ± z * std``."""
    if not 0 < level < 1:
        raise DomainError(f"confidence level must lie in (0, 1), got {level}")
    z = NormalDist().inv_cdf(0.5 + level / 2)
    return posterior.mean - z * posterior.std, posterior.mean + z * posterior.std


def with_noise(model: TrainedModel, dataset: Dataset, noise: float) -> TrainedModel:
    """Same parameters with the observation noise replaced (caches rebuilt)."""
    params = replace(model.params, log_noise=math.log(max(noise, NOISE_FLOOR)))
    return finalize(dataset, params, model.variant, model.log)
