import argparse
import json
import os
import sys
from typing import Callable, List, Optional

from dotenv import load_dotenv
from numpy.linalg import LinAlgError
from pydantic import ValidationError

from hinf_pi.config import ExperimentConfig, load_config
from hinf_pi.examples import builtin_examples, get_example
from hinf_pi.pipeline import run_experiment
from hinf_pi.utils.errors import HinfPiError
from hinf_pi.utils.logger import logger, set_level
from hinf_pi.utils.messages import LogMessages

# ============================= 1. CONFIGURATION =============================
# Load environment variables from .env file
load_dotenv()

# --- Configuration (Environment Variables) ---
OUTPUT_DIR = os.environ.get("HINF_OUTPUT_DIR", "runs")
WORKERS = int(os.environ.get("HINF_WORKERS", 1))
LOG_LEVEL = os.environ.get("HINF_LOG_LEVEL", "INFO")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_RUNTIME = 3


# ============================= 2. ARGUMENTS =============================
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hinf_runner",
        description="Policy iteration for stochastic H-infinity games: exact, model-free and perturbed runs",
    )
    parser.add_argument("--log-level", default=LOG_LEVEL, help="DEBUG, INFO, WARNING or ERROR")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run a config file or a built-in example (example-1, example-2)")
    run.add_argument("target", help="Path to a JSON config, or example-1 / example-2")
    run.add_argument("--seed", type=int, default=None, help="Run a single seed instead of the config's list")
    run.add_argument("--out", default=None, help="Output directory (default: $HINF_OUTPUT_DIR/<name>)")
    run.add_argument("--paths", type=int, default=None, help="Monte Carlo sample paths H")
    run.add_argument("--substeps", type=int, default=None, help="Euler-Maruyama substeps G per interval")
    run.add_argument("--workers", type=int, default=WORKERS, help="Worker threads for path batches and sweeps")

    examples = sub.add_parser("examples", help="Write the built-in example configs as JSON")
    examples.add_argument("--out", default=".", help="Directory for example-1.json and example-2.json")

    check = sub.add_parser("check", help="Validate a config file without running it")
    check.add_argument("target", help="Path to a JSON config")
    return parser


def apply_overrides(cfg: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    """CLI flags win over the config; the result is validated again"""
    document = cfg.model_dump(mode="json")
    if args.seed is not None:
        document["seeds"] = [args.seed]
    if document.get("sim") is not None:
        if args.paths is not None:
            document["sim"]["n_paths"] = args.paths
        if args.substeps is not None:
            document["sim"]["substeps"] = args.substeps
    if args.out is not None:
        document["output_dir"] = args.out
    return ExperimentConfig.model_validate(document)


def resolve_config(target: str) -> ExperimentConfig:
    if target.startswith("example-") and not os.path.exists(target):
        return get_example(target)
    return load_config(target)


# ============================= 3. COMMANDS =============================
# Each command validates its inputs and returns the job that does the work.
# Failures while preparing exit with EXIT_INVALID, failures of the job with EXIT_RUNTIME.
Job = Callable[[], int]


def cmd_run(args: argparse.Namespace) -> Job:
    cfg = apply_overrides(resolve_config(args.target), args)
    if cfg.data_file is not None and not os.path.isfile(cfg.data_file):
        raise FileNotFoundError(f"data_file not found: {cfg.data_file}")
    output_dir = cfg.output_dir or os.path.join(OUTPUT_DIR, cfg.name)

    def job() -> int:
        manifest = run_experiment(cfg, output_dir, workers=max(1, args.workers))
        print(json.dumps(manifest.checks, indent=2))
        return EXIT_OK

    return job


def cmd_examples(args: argparse.Namespace) -> Job:
    configs = builtin_examples()

    def job() -> int:
        os.makedirs(args.out, exist_ok=True)
        for cfg in configs:
            path = os.path.join(args.out, f"{cfg.name}.json")
            with open(path, "w", encoding="utf-8") as f:
                f.write(cfg.model_dump_json(indent=2, exclude_none=True) + "\n")
            logger.info(LogMessages.RUNNER_EXAMPLES_WRITTEN.format(path=path))
        return EXIT_OK

    return job


def cmd_check(args: argparse.Namespace) -> Job:
    cfg = load_config(args.target)

    def job() -> int:
        logger.info(LogMessages.RUNNER_CONFIG_OK.format(path=args.target, mode=cfg.mode))
        return EXIT_OK

    return job


COMMANDS = {"run": cmd_run, "examples": cmd_examples, "check": cmd_check}


def main(argv: Optional[List[str]] = None) -> int:
    """
    Command-line entry point.

    Returns:
        EXIT_OK, EXIT_INVALID when the config or an input file is rejected,
        or EXIT_RUNTIME when the run itself fails (solver errors, linear
        algebra failures, unwritable outputs).
    """
    args = build_parser().parse_args(argv)
    set_level(args.log_level)
    try:
        job = COMMANDS[args.command](args)
    except (ValidationError, ValueError, KeyError, OSError) as e:
        logger.error(LogMessages.RUNNER_VALIDATION_ERROR.format(error=e))
        return EXIT_INVALID
    try:
        return job()
    except (HinfPiError, ValueError, OSError, LinAlgError) as e:
        logger.error(LogMessages.RUNNER_RUNTIME_ERROR.format(error=e))
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
