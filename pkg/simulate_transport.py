#!/usr/bin/env python3
"""
Command-line interface for the Bose transport simulators
"""

import argparse
import logging
import sys

from dotenv import load_dotenv

from bose_transport.errors import SimulationError
from experiments.config import emit_config, load_config
from experiments.models import ConfigError
from experiments.runners import run_grid, run_resonance_sweep, run_single, run_spectrum
from logging_config import setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class _ArgumentParser(argparse.ArgumentParser):
    """argparse reports usage errors with exit code 1"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('config', type=str, help='Path to the key-value configuration file')
    common.add_argument('--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE',
                        help='Override a configuration key (repeatable)')
    common.add_argument('--output', type=str, help='Output directory (overrides the output key)')
    common.add_argument('--workers', type=int, help='Worker threads (overrides the workers key)')
    common.add_argument('--log-file', type=str, help='Path to log file (optional)')
    common.add_argument('--log-level', type=str, default='INFO', help='Logging level')

    parser = _ArgumentParser(description='Simulate Bose particle transport through a chain between two ring reservoirs')
    commands = parser.add_subparsers(dest='command', required=True, parser_class=_ArgumentParser)
    commands.add_parser('validate', parents=[common], help='Check a configuration and print it normalised')
    commands.add_parser('run', parents=[common], help='Stationary current at one parameter point')
    commands.add_parser('grid', parents=[common], help='Stationary current on the grid.* axes')
    commands.add_parser('sweep', parents=[common], help='Current versus gate voltage per interaction g')
    commands.add_parser('spectrum', parents=[common], help='Spectra of one recorded Langevin trajectory')
    return parser


def main(argv=None) -> int:
    """Main entry point for the simulator"""
    load_dotenv()
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level, args.log_file)

    overrides = list(args.overrides)
    if args.output:
        overrides.append(f"output={args.output}")
    if args.workers:
        overrides.append(f"workers={args.workers}")

    try:
        system, plan = load_config(args.config, overrides)
        if args.command == 'validate':
            sys.stdout.write(emit_config(system, plan))
            return EXIT_OK

        logger.info(f"Starting {args.command} with method {plan.method}")
        if args.command == 'run':
            result = run_single(system, plan)
            print(f"current: {result.current:.12g}")
            if result.stderr:
                print(f"stderr: {result.stderr:.3g}")
        elif args.command == 'grid':
            table = run_grid(system, plan)
            print(f"grid points: {table.rows.shape[0]} ({table.n_failed} failed)")
        elif args.command == 'sweep':
            curves = run_resonance_sweep(system, plan)
            print(f"sweep curves: {len(curves)}")
        elif args.command == 'spectrum':
            spectra = run_spectrum(system, plan)
            print(f"spectra: {', '.join(spectra)}")
        return EXIT_OK

    except ConfigError as e:
        logger.error(f"Configuration error: {str(e)}")
        return EXIT_CONFIG
    except SimulationError as e:
        logger.error(f"Numerical failure: {str(e)}")
        return EXIT_NUMERICAL
    except ValueError as e:
        logger.error(f"Invalid parameters: {str(e)}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
