"""Command-line entry point for tensorizing-flow experiments."""
import argparse
import json
import logging
import sys
from typing import List, Optional

from config import Config, ExperimentConfig, configure_logging
from database.db_manager import DatabaseManager
from errors import ConfigError, OrderingViolation, TensorizingFlowError
from experiment import ExperimentHarness

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_ORDERING = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='Tensor-train base distributions for normalizing flows')
    sub = parser.add_subparsers(dest='command', required=True)

    commands = {
        'build-base': 'cross-approximate and cache the TT base distribution',
        'sample': 'draw samples from the TT base and write them as CSV',
        'train': 'train the arm selected by the config baseline',
        'compare': 'train TF and NF under identical conditions and compute the error ratio',
        'report': 'summarize the ledger for an experiment',
    }
    for name, help_text in commands.items():
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument('--config', required=True, metavar='<path>', help='experiment config (JSON)')
        cmd.add_argument('--out', metavar='<dir>', help='output directory (overrides the config)')
        cmd.add_argument('--seed', type=int, metavar='<u64>', help='master seed (overrides the config)')
        cmd.add_argument('--runs', type=int, metavar='<k>', help='seeds per arm (overrides the config)')
        cmd.add_argument('--threads', type=int, metavar='<k>', help='worker threads (default TF_THREADS)')
        if name == 'sample':
            cmd.add_argument('--count', type=int, default=10_000, metavar='<int>', help='number of samples')
        if name == 'build-base':
            cmd.add_argument('--force', action='store_true', help='rebuild even on a cache hit')
    parser.add_argument('--log-level', metavar='<level>', help='logging level (default TF_LOG_LEVEL)')
    parser.add_argument('--no-progress', action='store_true', help='disable progress bars')
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json(args.config)
    cfg = cfg.with_overrides(output_dir=args.out, seed=args.seed, runs=args.runs)
    if not cfg.validate():
        raise ConfigError(f"Invalid experiment config: {args.config}")
    return cfg


def run(args: argparse.Namespace, db: Optional[DatabaseManager] = None) -> int:
    cfg = load_config(args)
    if args.threads is not None and args.threads < 1:
        raise ConfigError("--threads must be >= 1")
    harness = ExperimentHarness(cfg, db=db or DatabaseManager(Config.DATABASE_URL),
                                threads=args.threads, progress=not args.no_progress)
    if not harness.initialize():
        raise ConfigError("Experiment initialization failed")

    if args.command == 'build-base':
        result = harness.build_base(force=args.force)
        print(f"Base: {result.path} (ranks {result.coeff.ranks}, cache hit: {result.cache_hit})")
    elif args.command == 'sample':
        batch = harness.sample(args.count)
        print(f"Wrote {len(batch)} samples to {cfg.output_dir}")
    elif args.command == 'train':
        report = harness.train_single()
        print(f"{report.arm.upper()} final holdout loss: {report.final_loss:.6f} ± {report.final_stderr:.2e}")
    elif args.command == 'compare':
        result = harness.run_comparison()
        print(f"TF final loss: {result.tf.final_loss:.6f} | NF final loss: {result.nf.final_loss:.6f}")
        if result.error_ratio is not None:
            print(f"Error ratio: {result.error_ratio:.4f}")
        if result.violation is not None:
            raise result.violation
    elif args.command == 'report':
        print(json.dumps(harness.report(), indent=2, sort_keys=True))
    return EXIT_OK


def main(argv: Optional[List[str]] = None, db: Optional[DatabaseManager] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    if not Config.validate():
        return EXIT_CONFIG
    Config.log_config()
    try:
        return run(args, db)
    except ConfigError as e:
        logger.error(f"❌ Configuration error: {e}")
        return EXIT_CONFIG
    except OrderingViolation as e:
        logger.error(f"❌ {e}")
        return EXIT_ORDERING
    except TensorizingFlowError as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
