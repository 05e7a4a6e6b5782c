"""Command-line entry point: ``analyze | mmatrix | rdfm | select``."""
import argparse
import logging
import sys
from pathlib import Path

from . import __version__, settings
from .exceptions import AnalysisError
from .models import RunConfig
from .services.report_handler import ReportHandler

logger = logging.getLogger('adfm_selector')


def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return value


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {text}")
    return value


def _mode_list(text):
    modes = tuple(part.strip() for part in text.split(',') if part.strip())
    if not modes:
        raise argparse.ArgumentTypeError("at least one mode is required")
    return modes


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('model', help="model document (JSON)")
    common.add_argument('--format', choices=('text', 'json'), default='text', dest='output_format')
    common.add_argument('--seed', type=int, default=settings.SEED)
    common.add_argument('--threshold', type=_positive_float, default=settings.ADFM_THRESHOLD,
                        help="measure at or above which a mode is an ADFM")
    common.add_argument('--subset-cap', type=_positive_int, default=settings.SUBSET_CAP,
                        help="largest station count for exhaustive subset enumeration")
    common.add_argument('--oracle-trials', type=_positive_int, default=settings.ORACLE_TRIALS)
    common.add_argument('--jobs', type=int, default=settings.N_JOBS, dest='n_jobs')
    common.add_argument('-o', '--output', dest='output_path')
    common.add_argument('-v', '--verbose', action='store_true', default=settings.VERBOSE)

    parser = argparse.ArgumentParser(prog='adfm-selector', description=__doc__)
    parser.add_argument('--version', action='version', version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest='command', required=True)

    commands.add_parser('analyze', parents=[common], help="mode catalog with ADFM measures")

    mmatrix = commands.add_parser('mmatrix', parents=[common], help="certificate matrix M at one mode")
    mmatrix.add_argument('--mode', required=True, type=lambda text: (text,), dest='modes')

    rdfm = commands.add_parser('rdfm', parents=[common], help="perturb an ADFM into an exact DFM")
    rdfm.add_argument('--mode', required=True, type=lambda text: (text,), dest='modes')
    rdfm.add_argument('--epsilon', type=_positive_float)
    rdfm.add_argument('--scan', action='store_true', help="list the smallest epsilon per bipartition")
    rdfm.add_argument('--all-candidates', action='store_true',
                      help="zero the union of every candidate bipartition instead of the cheapest")

    select = commands.add_parser('select', parents=[common], help="rank overlapping interaction sets")
    select.add_argument('--modes', required=True, type=_mode_list)
    select.add_argument('--epsilon', required=True, type=_positive_float)
    select.add_argument('--max-links', type=_positive_int, default=settings.MAX_LINKS)
    select.add_argument('--rdfm-scope', choices=('best', 'all'), default=settings.RDFM_SCOPE)
    select.add_argument('--rank-against', choices=('original', 'perturbed'), default='original')
    return parser


def _configure_logging(verbose):
    level = logging.DEBUG if verbose else getattr(logging, settings.LOG_LEVEL, logging.WARNING)
    logging.basicConfig(level=level, stream=sys.stderr, format='%(levelname)s %(name)s: %(message)s', force=True)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2

    if args.command == 'rdfm' and args.epsilon is None and not args.scan:
        parser.print_usage(sys.stderr)
        print("adfm-selector rdfm: --epsilon is required unless --scan is given", file=sys.stderr)
        return 2

    _configure_logging(args.verbose)
    config = RunConfig(
        command=args.command,
        model_path=args.model,
        modes=getattr(args, 'modes', ()),
        epsilon=getattr(args, 'epsilon', None),
        threshold=args.threshold,
        max_links=getattr(args, 'max_links', settings.MAX_LINKS),
        seed=args.seed,
        subset_cap=args.subset_cap,
        output_format=args.output_format,
        output_path=args.output_path,
        oracle_trials=args.oracle_trials,
        scan=getattr(args, 'scan', False),
        all_candidates=getattr(args, 'all_candidates', False),
        rdfm_scope=getattr(args, 'rdfm_scope', settings.RDFM_SCOPE),
        rank_against=getattr(args, 'rank_against', 'original'),
        n_jobs=args.n_jobs,
    )

    handler = ReportHandler(config)
    try:
        report = handler.run()
        text = handler.render(report)
    except AnalysisError as exc:
        logger.error(f"{type(exc).__name__}: {exc}")
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        logger.error(f"Invalid argument: {exc}")
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        logger.exception(f"Unexpected failure in '{config.command}': {exc}")
        return 3

    # rdfm's -o is the perturbed model; the report still goes to stdout
    if config.output_path and config.command != 'rdfm':
        Path(config.output_path).write_text(text if text.endswith('\n') else text + '\n', encoding='utf-8')
    else:
        sys.stdout.write(text if text.endswith('\n') else text + '\n')
    return 0


if __name__ == '__main__':
    sys.exit(main())
