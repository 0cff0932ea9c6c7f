import argparse
import sys
from pathlib import Path
from typing import List, Optional

from config import Config
from errors import (
    CheckpointIncompatibleError,
    ConfigurationError,
    OutOfDomainError,
    PinnFlowError,
    TrainingDivergedError,
)
from experiment import PRESET_ALIASES, PRESET_NAMES, ExperimentConfig, load_preset, parse_config
from network import load_checkpoint
from output_manager import OutputManager
from trainer import DecompositionTrainer, TrainedModel, split_params
from utils import configure_torch, get_logger, setup_logging

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_DIVERGED = 3
EXIT_CHECKPOINT = 4

logger = get_logger(__name__)


def parse_values(text: Optional[str]) -> List[float]:
    """Comma separated numbers; an empty list is a usage error."""
    if text is None:
        return []
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise ConfigurationError(f"cannot parse value list '{text}': {e}") from e


def load_experiment(args) -> ExperimentConfig:
    if args.config:
        base = load_preset(args.preset) if args.preset else None
        config = parse_config(args.config, base)
    elif args.preset:
        config = load_preset(args.preset)
    else:
        raise ConfigurationError("either --config or --preset is required")
    if args.seed is not None:
        config = config.with_seed(args.seed)
    return config


def cmd_train(args, trainer: DecompositionTrainer) -> int:
    config = load_experiment(args)
    outputs = OutputManager(args.out)
    try:
        model = trainer.train(config)
    except TrainingDivergedError as e:
        logger.error(f"Training diverged: {e}")
        outputs.write_checkpoints(split_params(e.last_params, config.layer_sizes, config.subdomains))
        if e.history is not None:
            outputs.write_history(e.history)
        outputs.log_error(f"diverged: {e}")
        outputs.write_manifest(config, "diverged")
        return EXIT_DIVERGED

    outputs.write_checkpoints(model.params)
    outputs.write_history(model.history)
    outputs.write_residuals(trainer.residual_table(model))
    outputs.write_manifest(config, "ok", {
        "final_loss": model.final_loss.to_record(),
        "initial_loss": model.initial_loss.to_record() if model.initial_loss else None,
        "seconds": model.seconds,
        "iterations": model.iterations,
        "stop_reason": model.stop_reason,
        "diagnostics": model.diagnostics,
    })
    logger.info(f"Training outputs written to {outputs.out_dir}")
    return EXIT_OK


def _checkpoint_paths(spec: List[str]) -> List[Path]:
    paths: List[Path] = []
    for item in spec:
        path = Path(item)
        if path.is_dir():
            found = sorted(path.glob("network_*.ckpt"), key=lambda p: int(p.stem.split("_")[1]))
            if not found:
                raise CheckpointIncompatibleError(f"no network_*.ckpt files in {path}")
            paths.extend(found)
        else:
            paths.append(path)
    return paths


def cmd_predict(args, trainer: DecompositionTrainer) -> int:
    config = load_experiment(args)
    params = [load_checkpoint(p, config.layer_sizes) for p in _checkpoint_paths(args.checkpoint)]
    model = TrainedModel.from_checkpoints(config, params)
    domain = config.build_domain()
    times = parse_values(args.times) if args.times else list(domain.snapshot_times(config.output.snapshot_count))
    if not times:
        raise ConfigurationError("--times needs at least one value")
    for t in times:
        domain.check_time(t)

    grid = trainer.prediction_grid(config)
    outputs = OutputManager(args.out)
    for k, t in enumerate(times):
        outputs.write_fields(trainer.predict_fields(model, grid, [t]), t, k)
    outputs.write_boundary_flux(trainer.boundary_flux_diagnostics(model, times, config.output.flux_points))
    outputs.write_manifest(config, "ok", {"times": [float(t) for t in times]})
    logger.info(f"Predicted {len(times)} snapshots on {len(grid.spatial_points())} points")
    return EXIT_OK


def cmd_sweep(args, trainer: DecompositionTrainer) -> int:
    config = load_experiment(args)
    values = parse_values(args.values)
    if not values:
        raise ConfigurationError("--values needs at least one value")
    inner_values = parse_values(args.inner_values) if args.inner_axis else None
    outputs = OutputManager(args.out)

    def on_result(index, run_config, model, error):
        run_outputs = outputs.subdirectory(f"run_{index:03d}")
        if model is not None:
            run_outputs.write_history(model.history)
            run_outputs.write_checkpoints(model.params)
        else:
            outputs.log_error(f"run {index}: {type(error).__name__}: {error}")

    table = trainer.run_sweep(config, args.axis, values, args.inner_axis, inner_values, on_result)
    outputs.write_metrics(table)
    failed = int((table["status"] != "ok").sum())
    status = "ok" if failed == 0 else ("failed" if failed == len(table) else "partial")
    outputs.write_manifest(config, status, {"axis": args.axis, "values": values,
                                            "inner_axis": args.inner_axis, "inner_values": inner_values})
    print(table.to_string(index=False))
    return EXIT_FAILURE if failed == len(table) else EXIT_OK


def cmd_export_points(args, trainer: DecompositionTrainer) -> int:
    config = load_experiment(args)
    collocation, subdomains, _, _ = trainer.setup(config)
    outputs = OutputManager(args.out)
    outputs.write_points(collocation, subdomains)
    outputs.write_manifest(config, "ok")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="sectioned experiment config file")
    common.add_argument("--preset", choices=PRESET_NAMES + tuple(PRESET_ALIASES), help="named experiment preset")
    common.add_argument("--out", default=Config.OUTPUT_DIR, help="output directory")
    common.add_argument("--seed", type=int, help="override the experiment seed")
    common.add_argument("--threads", type=int, help="torch threads (default: PINNFLOW_THREADS)")
    common.add_argument("--deterministic", action="store_true", help="single thread, deterministic kernels")
    common.add_argument("--log-level", help="logging level (default: LOG_LEVEL)")

    parser = argparse.ArgumentParser(
        prog="pinnflow",
        description="Physics-informed network solver for 2D incompressible flow with domain decomposition.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("train", parents=[common], help="train and write checkpoints, loss history, manifest")

    predict = sub.add_parser("predict", parents=[common], help="field snapshots from checkpoints")
    predict.add_argument("--checkpoint", nargs="+", required=True,
                         help="checkpoint files in subdomain order, or a directory of network_*.ckpt")
    predict.add_argument("--times", help="comma separated snapshot times (default: evenly spaced)")

    sweep = sub.add_parser("sweep", parents=[common], help="train over a parameter grid, write metrics")
    sweep.add_argument("--axis", required=True, help="beta, gamma, delta or M")
    sweep.add_argument("--values", required=True, help="comma separated values")
    sweep.add_argument("--inner-axis", help="optional nested axis")
    sweep.add_argument("--inner-values", help="values of the nested axis")

    sub.add_parser("export-points", parents=[common], help="write collocation and interface point sets")
    return parser


COMMANDS = {
    "train": cmd_train,
    "predict": cmd_predict,
    "sweep": cmd_sweep,
    "export-points": cmd_export_points,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point; returns the process exit status."""
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level or Config.LOG_LEVEL)

    try:
        Config.validate()
        threads = Config.resolve_threads(args.threads)
        if threads < 1:
            raise ConfigurationError(f"--threads must be >= 1, got {threads}")
        configure_torch(threads, args.deterministic or Config.DETERMINISTIC)
        trainer = DecompositionTrainer(threads=threads)
        return COMMANDS[args.command](args, trainer)
    except CheckpointIncompatibleError as e:
        logger.error(f"Incompatible checkpoint: {e}")
        return EXIT_CHECKPOINT
    except (ConfigurationError, OutOfDomainError) as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_USAGE
    except TrainingDivergedError as e:
        logger.error(f"Training diverged: {e}")
        return EXIT_DIVERGED
    except PinnFlowError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_FAILURE
    except ValueError as e:
        # Config.validate reports environment problems as ValueError
        logger.error(f"Configuration error: {e}")
        return EXIT_USAGE
    except Exception as e:
        logger.error(f"Unexpected error: {e}")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
