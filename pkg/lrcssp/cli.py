"""``lrcssp gen|run|report``

Exit codes: 0 on success, 1 on a runtime failure, 2 on a config, artifact or
usage error. Failures print one line ``error: <Kind>: <message>`` on stderr.
"""
import argparse
import logging
import os
import sys

import pandas as pd

import lrcssp as lr
from lrcssp.api.config import load_config
from lrcssp.api.model import generate_instance, save_model, validate_model
from lrcssp.api.runner import run_experiment, report_run_dir
from lrcssp.error import ConfigError, ArtifactError, StructuralError

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class ArgumentParser(argparse.ArgumentParser):

    def error(self, message):
        raise UsageError(message)


def build_parser():
    parser = ArgumentParser(prog='lrcssp', description='Linear contextual SSP experiments')
    parser.add_argument('command', choices=['gen', 'run', 'report'])
    parser.add_argument('--config', help='experiment config (YAML), required by gen and run')
    parser.add_argument('--out', help='output file (gen) or directory (run, report)')
    parser.add_argument('--jobs', type=int, default=1, help='parallel runs')
    parser.add_argument('--seed-offset', type=int, default=0, help='added to every seed of the config')
    parser.add_argument('--log-level', default='WARNING',
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
    return parser


def cmd_gen(args):
    cfg = load_config(args.config)
    model = generate_instance(cfg.generator)
    violations = validate_model(model)
    if violations:
        raise StructuralError('generated model violates {} invariant(s), first: {}'.format(
            len(violations), violations[0]))
    path = args.out or os.path.join(cfg.output_dir, 'model.json')
    if os.path.dirname(path):
        os.makedirs(os.path.dirname(path), exist_ok=True)
    fp = save_model(model, path)
    print('{} {}'.format(path, fp))


def cmd_run(args):
    cfg = load_config(args.config)
    out = args.out or cfg.output_dir
    lr.cache_dir = os.path.join(out, '.cache')
    summary = run_experiment(cfg, out_dir=out, jobs=args.jobs, seed_offset=args.seed_offset)
    for variant, data in summary['variants'].items():
        agg = data['aggregate']
        print('{}: runs={} mean_final_regret={}'.format(variant, agg['n'], agg['mean']))


def cmd_report(args):
    if not args.out:
        raise UsageError('report needs --out RUN_DIR')
    summary, table, matches = report_run_dir(args.out)
    with pd.option_context('display.width', 120, 'display.max_columns', None):
        print(table.to_string(index=False))
    if not matches:
        print('recomputed summary differs from the stored summary.json')
        return EXIT_FAILURE
    return EXIT_OK


COMMANDS = {'gen': cmd_gen, 'run': cmd_run, 'report': cmd_report}


def _fail(kind, message, code):
    sys.stderr.write('error: {}: {}\n'.format(kind, message))
    return code


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        if args.command in ('gen', 'run') and not args.config:
            raise UsageError('{} needs --config PATH'.format(args.command))
        if args.jobs < 1:
            raise UsageError('--jobs must be at least 1')
    except UsageError as e:
        return _fail('UsageError', e, EXIT_USAGE)

    logging.basicConfig(level=args.log_level, format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    try:
        code = COMMANDS[args.command](args)
    except UsageError as e:
        return _fail('UsageError', e, EXIT_USAGE)
    except (ConfigError, ArtifactError) as e:
        return _fail(type(e).__name__, e, EXIT_USAGE)
    except Exception as e:
        logger.debug('command failed', exc_info=True)
        return _fail(type(e).__name__, e, EXIT_FAILURE)
    return EXIT_OK if code is None else code


if __name__ == '__main__':
    sys.exit(main())
