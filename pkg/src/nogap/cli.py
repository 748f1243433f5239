"""``nogap`` command-line interface.

Exit codes: 0 success, 2 usage or configuration error, 1 numeric or data failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import experiment as ex
from .config import ExperimentConfig, load, preset
from .datagen import PROBLEMS
from .errors import ConfigError, NogapError, NumericError, SolverDivergence, TrainingDiverged
from .gp import VARIANTS

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


def _config(args) -> ExperimentConfig:
    if args.config:
        cfg = load(args.config)
    else:
        cfg = preset(args.problem or "advection", args.preset)
    changes = {"seed": args.seed, "out_dir": args.out}
    if getattr(args, "problem", None) and args.config and args.problem != cfg.problem:
        raise ConfigError(f"--problem {args.problem} conflicts with config problem {cfg.problem}")
    if getattr(args, "n_train", None) is not None:
        changes["n_train"] = args.n_train
    if getattr(args, "n_test", None) is not None:
        changes["n_test"] = args.n_test
    if getattr(args, "variant", None):
        changes["variants"] = (args.variant,)
    return cfg.with_overrides(**changes)


def _common(p, out_required=True):
    p.add_argument("--config", help="TOML experiment config (defaults to the desk preset)")
    p.add_argument("--problem", choices=PROBLEMS, help="problem when no config file is given")
    p.add_argument("--preset", choices=("desk", "paper"), default="desk")
    p.add_argument("--seed", type=int, help="non-negative integer seed")
    p.add_argument("--out", required=out_required, help="output directory")
    p.add_argument("--force", action="store_true", help="overwrite existing outputs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nogap", description="Neural-operator mean Gaussian-process experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write train/test datasets and a manifest")
    _common(p)
    p.add_argument("--n-train", type=int)
    p.add_argument("--n-test", type=int)

    p = sub.add_parser("train", help="train one variant on a dataset file")
    _common(p)
    p.add_argument("--data", required=True, help="training dataset (.ngpd)")
    p.add_argument("--variant", choices=VARIANTS, default="nogap")
    p.add_argument("--iterations", type=int, help="override the configured iteration count")

    p = sub.add_parser("predict", help="posterior mean and std for a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output container path")
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("evaluate", help="error report, per-sample CSV and plot data")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("report", help="aggregate evaluation reports under a run directory")
    p.add_argument("run_dir")

    p = sub.add_parser("run", help="generate, train every variant and evaluate")
    _common(p)
    p.add_argument("--n-train", type=int)
    p.add_argument("--n-test", type=int)
    p.add_argument("--variant", choices=VARIANTS, help="train only this variant")
    return parser


def _dispatch(args) -> int:
    if args.command == "generate":
        cfg = _config(args)
        manifest = ex.generate_files(cfg, args.out, args.force)
        for name, digest in manifest["files"].items():
            print(f"{Path(args.out) / name} {digest}")
    elif args.command == "train":
        cfg = _config(args)
        if args.iterations is not None and args.iterations < 0:
            raise ConfigError("--iterations must be >= 0")
        model, ckpt = ex.train_file(cfg, args.variant, args.data, args.out, args.force, args.iterations)
        print(f"{ckpt} nlml={model.nlml!r}")
    elif args.command == "predict":
        post = ex.predict_file(args.model, args.data, args.out, args.force)
        print(f"{args.out} samples={post.mean.shape[0]}")
    elif args.command == "evaluate":
        report = ex.evaluate_file(args.model, args.data, args.out, args.force)
        print(report.to_text(), end="")
    elif args.command == "report":
        print(ex.report_dir(args.run_dir), end="")
    elif args.command == "run":
        cfg = _config(args)
        for report in ex.run_pipeline(cfg, args.out, args.force):
            s = report.summary()
            print(f"{s['variant']}: error {s['error_mean']:.4f}% ± {s['error_std']:.4f}, mean std {s['mean_std']:.4g}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return int(err.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(args)
    except (ConfigError, FileExistsError) as err:
        print(f"nogap: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDiverged as err:
        print(f"nogap: training diverged: {err}; best finite checkpoint kept", file=sys.stderr)
        return EXIT_FAILURE
    except (NumericError, SolverDivergence) as err:
        print(f"nogap: numeric failure: {err}", file=sys.stderr)
        return EXIT_FAILURE
    except (NogapError, FileNotFoundError) as err:
        print(f"nogap: error: {err}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
