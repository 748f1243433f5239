"""File-level experiment steps shared by the CLI and the acceptance suite."""

from __future__ import annotations

import csv
import json
import logging
import time
from collections import defaultdict
from pathlib import Path

import numpy as np

from . import container
from .checkpoint import load_model, save_model
from .config import ExperimentConfig
from .datagen import ADVECTION_BOX, Dataset, dataset_read, dataset_write, generate_split
from .errors import ConfigError, FormatError, ShapeError, TrainingDiverged
from .gp import Posterior, TrainedModel, ci_band, predict, train
from .metrics import EvalReport, evaluate, mean_pm_std, parse_summary

log = logging.getLogger(__name__)

TRAIN_FILE = "train.ngpd"
TEST_FILE = "test.ngpd"
MANIFEST = "manifest.json"
CONFIG_ECHO = "config.toml"


def _refuse_existing(paths, force: bool):
    existing = [str(p) for p in paths if Path(p).exists()]
    if existing and not force:
        raise FileExistsError(f"refusing to overwrite {', '.join(existing)} (use --force)")


def write_csv(path, rows, header=None):
    rows = list(rows)
    if header is None:
        header = []
        for row in rows:
            header += [k for k in row if k not in header]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=header)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(v) for k, v in row.items()})
    tmp.replace(path)


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def _write_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)


# -- generate -------------------------------------------------------------------------


def generate_files(cfg: ExperimentConfig, out_dir, force: bool = False) -> dict:
    """Write train/test datasets, a manifest and the config echo into ``out_dir``."""
    out = Path(out_dir)
    train_path, test_path = out / TRAIN_FILE, out / TEST_FILE
    _refuse_existing([train_path, test_path], force)
    train_ds, test_ds = generate_split(cfg.problem, cfg.n_train, cfg.n_test, cfg.seed, resolution=cfg.resolution)
    train_hash = dataset_write(train_ds, train_path)
    test_ds.meta["train_hash"] = train_hash
    test_hash = dataset_write(test_ds, test_path)
    manifest = {
        "problem": cfg.problem,
        "seed": cfg.seed,
        "n_train": cfg.n_train,
        "n_test": cfg.n_test,
        "resolution": cfg.resolution,
        "train_indices": [0, cfg.n_train],
        "test_indices": [cfg.n_train, cfg.n_train + cfg.n_test],
        "files": {TRAIN_FILE: train_hash, TEST_FILE: test_hash},
    }
    if cfg.problem == "advection":
        manifest["parameter_box"] = {"c": ADVECTION_BOX[0], "width": ADVECTION_BOX[1], "height": ADVECTION_BOX[2]}
    elif cfg.problem == "poisson":
        manifest["parameter_box"] = {"alpha": [-2.0, 2.0], "beta": [-2.0, 2.0]}
    else:
        manifest["parameter_box"] = {"grf": "N(0, 625 (-Laplacian + 25)^-2)", "nu": 0.1}
    _write_text(out / MANIFEST, json.dumps(manifest, indent=2) + "\n")
    _write_text(out / CONFIG_ECHO, cfg.to_toml())
    return manifest


# -- train ----------------------------------------------------------------------------


def _check_config_matches(cfg: ExperimentConfig, ds: Dataset):
    if ds.problem != cfg.problem:
        raise ConfigError(f"dataset holds {ds.problem!r} data but the config is for {cfg.problem!r}")
    if ds.grid_shape[0] != cfg.resolution:
        raise ShapeError(f"dataset resolution {ds.grid_shape} does not match config resolution {cfg.resolution}")


def model_path(out_dir, variant: str) -> Path:
    return Path(out_dir) / f"model_{variant}.ngpc"


def train_file(cfg: ExperimentConfig, variant: str, data_path, out_dir, force: bool = False,
               iterations: int | None = None) -> tuple:
    """Train ``variant`` on the dataset at ``data_path``; returns (model, checkpoint path).

    On divergence the best finite model is still checkpointed before the
    error propagates.
    """
    ckpt = model_path(out_dir, variant)
    log_path = Path(out_dir) / f"train_log_{variant}.csv"
    _refuse_existing([ckpt, log_path], force)
    ds = dataset_read(data_path)
    _check_config_matches(cfg, ds)
    data_hash = container.file_hash(data_path)
    tc = cfg.train_config(variant)
    if iterations is not None:
        tc.iterations = iterations
    extra = {"problem": cfg.problem, "seed": cfg.seed, "n_train": ds.n, "iterations": tc.iterations}
    start = time.perf_counter()
    try:
        model = train(ds, tc)
    except TrainingDiverged as err:
        save_model(err.checkpoint, ckpt, data_hash, {**extra, "diverged": "true"})
        write_csv(log_path, err.log)
        raise
    extra["train_seconds"] = f"{time.perf_counter() - start:.3f}"
    save_model(model, ckpt, data_hash, extra)
    write_csv(log_path, model.log)
    _write_text(Path(out_dir) / CONFIG_ECHO, cfg.to_toml())
    return model, ckpt


# -- predict / evaluate ---------------------------------------------------------------


def _load_matching(model_file, data_path):
    model, meta = load_model(model_file)
    ds = dataset_read(data_path)
    data_hash = container.file_hash(data_path)
    owner = meta.get("dataset_hash", "")
    if owner and owner not in (data_hash, ds.meta.get("train_hash")):
        raise FormatError(
            f"{data_path} is neither the training set of {model_file} nor a test set paired with it"
        )
    if ds.grid_shape != model.grid_shape:
        raise ShapeError(f"dataset grid {ds.grid_shape} does not match model grid {model.grid_shape}")
    return model, meta, ds


def predict_file(model_file, data_path, out_path, force: bool = False) -> Posterior:
    _refuse_existing([out_path], force)
    model, meta, ds = _load_matching(model_file, data_path)
    post = predict(model, ds)
    lo, hi = ci_band(post)
    container.write(
        out_path,
        {"kind": "prediction", "variant": model.variant},
        {"mean": post.mean, "std": post.std, "lower95": lo, "upper95": hi},
    )
    return post


def evaluate_file(model_file, data_path, out_dir, force: bool = False) -> EvalReport:
    """Report, per-sample error CSV and plot data for a checkpoint on a dataset."""
    model, meta, ds = _load_matching(model_file, data_path)
    out = Path(out_dir)
    variant = model.variant
    report_path = out / f"report_{variant}.txt"
    _refuse_existing([report_path], force)
    start = time.perf_counter()
    post = predict(model, ds)
    runtime = float(meta.get("train_seconds", 0.0)) + time.perf_counter() - start
    report = evaluate(
        post,
        ds.outputs,
        runtime=runtime,
        problem=ds.problem,
        variant=variant,
        seed=meta.get("seed", ""),
        n_train=meta.get("n_train", model.train_features.shape[0]),
    )
    write_plot_data(out / f"plots_{variant}", ds, post)
    write_csv(
        out / f"errors_{variant}.csv",
        ({"sample": i, "relative_error_pct": e} for i, e in enumerate(report.errors)),
        ["sample", "relative_error_pct"],
    )
    _write_text(report_path, report.to_text())
    return report


def write_plot_data(out_dir, ds: Dataset, post: Posterior):
    """1D: one CSV per test sample; 2D: one container with full fields."""
    out = Path(out_dir)
    lo, hi = ci_band(post)
    if len(ds.grid) == 1:
        x = ds.grid[0]
        for i in range(ds.n):
            rows = (
                {"x": x[j], "truth": ds.outputs[i, j], "mean": post.mean[i, j],
                 "lower95": lo[i, j], "upper95": hi[i, j]}
                for j in range(len(x))
            )
            write_csv(out / f"sample_{i:04d}.csv", rows, ["x", "truth", "mean", "lower95", "upper95"])
    else:
        container.write(
            out / "fields.ngpd",
            {"kind": "fields"},
            {
                "grid.0": ds.grid[0],
                "grid.1": ds.grid[1],
                "truth": ds.outputs,
                "mean": post.mean,
                "std": post.std,
                "error": post.mean - ds.outputs,
            },
        )


# -- report ---------------------------------------------------------------------------


def collect_reports(run_dir) -> list:
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise ConfigError(f"{run_dir} is not a directory")
    found = [parse_summary(p.read_text(encoding="utf-8")) for p in sorted(run_dir.rglob("report_*.txt"))]
    if not found:
        raise ConfigError(f"no evaluation reports under {run_dir}")
    return found


def comparison_table(reports) -> tuple:
    """Rows = variants, columns = problems; cells are mean ± std over seeds."""
    cells = defaultdict(list)
    for r in reports:
        cells[(r["variant"], r["problem"])].append(r["error_mean"])
    variants = sorted({v for v, _ in cells})
    problems = sorted({p for _, p in cells})
    rows = []
    for v in variants:
        row = {"variant": v}
        for p in problems:
            if (v, p) in cells:
                m, s = mean_pm_std(cells[(v, p)])
                row[p] = f"{m:.4f} ± {s:.4f} (n={len(cells[(v, p)])})"
            else:
                row[p] = "-"
        rows.append(row)
    return ["variant"] + problems, rows


def sweep_table(reports) -> tuple:
    """Training-set size against seed-averaged mean predictive std."""
    cells = defaultdict(list)
    for r in reports:
        cells[(r["problem"], r["variant"], int(r["n_train"]))].append(r["mean_std"])
    rows = []
    for (p, v, n) in sorted(cells):
        m, s = mean_pm_std(cells[(p, v, n)])
        rows.append({"problem": p, "variant": v, "n_train": n, "mean_std": m, "mean_std_sd": s,
                     "seeds": len(cells[(p, v, n)])})
    return ["problem", "variant", "n_train", "mean_std", "mean_std_sd", "seeds"], rows


def _as_text(header, rows) -> str:
    widths = [max(len(str(h)), *(len(str(_cell(r[h]))) for r in rows)) for h in header]
    lines = ["  ".join(str(h).ljust(w) for h, w in zip(header, widths))]
    for r in rows:
        lines.append("  ".join(str(_cell(r[h])).ljust(w) for h, w in zip(header, widths)))
    return "\n".join(lines) + "\n"


def _cell(v):
    return f"{v:.6g}" if isinstance(v, float) else v


def report_dir(run_dir) -> str:
    """Write comparison and sweep tables into ``run_dir``; returns them as text."""
    reports = collect_reports(run_dir)
    head, rows = comparison_table(reports)
    shead, srows = sweep_table(reports)
    write_csv(Path(run_dir) / "comparison.csv", rows, head)
    write_csv(Path(run_dir) / "sweep.csv", srows, shead)
    text = "relative L2 error (%)\n" + _as_text(head, rows) + "\nmean predictive std by training size\n" + _as_text(shead, srows)
    _write_text(Path(run_dir) / "report.txt", text)
    return text


# -- whole pipeline -------------------------------------------------------------------


def run_pipeline(cfg: ExperimentConfig, out_dir, force: bool = False) -> list:
    """generate, train every configured variant, evaluate on the test split."""
    out = Path(out_dir)
    generate_files(cfg, out, force)
    reports = []
    for variant in cfg.variants:
        _, ckpt = train_file(cfg, variant, out / TRAIN_FILE, out, force)
        reports.append(evaluate_file(ckpt, out / TEST_FILE, out, force))
    return reports


def evaluate_model(model: TrainedModel, ds: Dataset, **labels) -> EvalReport:
    """In-memory counterpart of :func:`evaluate_file`."""
    return evaluate(predict(model, ds), ds.outputs, **labels)
