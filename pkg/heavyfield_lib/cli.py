"""
Command-line interface
"""

import argparse
import logging
import sys
from typing import List, Optional

from . import __version__
from .config import DEFAULT_CONFIG_FILE, EXPERIMENTS, OUTPUT_DIR_ENV
from .core import Heavyfield
from .errors import EXIT_OK, ConfigError, HeavyfieldError, NumericalError

COMMAND_HELP = {
    'train': 'train networks and record pool risk',
    'couple': 'run coupled dynamics from a shared initialization and measure distances',
    'chaos': 'measure distance rates over widths and step sizes',
    'dropout-scan': 'measure dropout stability across widths',
    'connect': 'measure the risk barrier along connecting paths',
    'noisy': 'run the noisy heavy ball and record weight bounds',
    'check': 'report each modelling assumption as pass or fail',
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='heavyfield',
        description='Mean-field heavy-ball experiments for two- and three-layer networks',
        epilog=f"Output directory: --out, then output.directory, then ${OUTPUT_DIR_ENV}, then ./results",
    )
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    sub = parser.add_subparsers(dest='command', required=True)

    for name in EXPERIMENTS + ('check',):
        p = sub.add_parser(name, help=COMMAND_HELP[name])
        p.add_argument('--config', default=DEFAULT_CONFIG_FILE, help='experiment configuration (YAML)')
        p.add_argument('--out', help='output directory')
        p.add_argument('--seed', type=int, help='run a single seed instead of the configured list')
        p.add_argument('--jobs', type=int, default=1, help='worker processes (default 1)')
        p.add_argument('-v', '--verbose', action='count', default=0, help='more logging (repeat for debug)')

    p = sub.add_parser('init', help='create an example configuration')
    p.add_argument('--config', default=DEFAULT_CONFIG_FILE, help='file to create')
    p.add_argument('--experiment', choices=EXPERIMENTS, default='train')
    p.add_argument('-v', '--verbose', action='count', default=0)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, 'jobs', 1) < 1:
        parser.error('--jobs must be >= 1')

    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s')

    try:
        if args.command == 'init':
            Heavyfield.init(args.config, args.experiment)
            return EXIT_OK

        app = Heavyfield(args.config)
        if args.command == 'check':
            app.load_config(seed=args.seed, out=args.out)
            app.check()
            return EXIT_OK

        app.load_config(experiment=args.command, seed=args.seed, out=args.out)
        app.validate()
        app.run(jobs=args.jobs)
        return EXIT_OK
    except ConfigError as e:
        print("❌ VALIDATION ERRORS:")
        for error in e.errors:
            print(f"  - {error}")
        return e.exit_code
    except NumericalError as e:
        print(f"❌ Numerical failure: {e}")
        return e.exit_code
    except HeavyfieldError as e:
        print(f"❌ {e}")
        return e.exit_code


if __name__ == '__main__':
    sys.exit(main())
