"""
Command-line entry point

    python -m src synth      --config exp.cfg --out data.csv
    python -m src experiment --config exp.cfg --seed 7 --out results.csv
    python -m src audit      --config exp.cfg --out -
    python -m src theory     --config exp.cfg
    python -m src ablation   --config exp.cfg
    python -m src quantile   --alpha 0.1 --scores 1,2,3,4,5
    python -m src runs       --limit 10

Exit codes: 0 success, 2 config error, 3 data / IO error, 4 numeric failure.
"""

import argparse
import logging
import sys

import numpy as np

from src.core.errors import ConfigError, ConformalError
from src.core.types import Level
from src.utils.logging_setup import setup_logging
from src.utils.settings import get_settings

logger = logging.getLogger(__name__)

LEDGER_COMMANDS = ('experiment', 'audit', 'theory', 'ablation')


def build_parser():
    parser = argparse.ArgumentParser(prog='python -m src', description='Conformal prediction length / stability toolkit')
    parser.add_argument('--log-level', default=None, help='DEBUG, INFO, WARNING or ERROR (default from CONFORMAL_LOG_LEVEL)')
    sub = parser.add_subparsers(dest='command', required=True)

    def add_common(p, out_help='CSV output path, or - for stdout'):
        p.add_argument('--config', help='experiment config (key=value text or JSON)')
        p.add_argument('--seed', type=int, help='override the base seed')
        p.add_argument('--out', help=out_help)
        return p

    add_common(sub.add_parser('synth', help='generate a synthetic dataset as CSV'), 'dataset CSV path (default: stdout)')
    for name, text in (
        ('experiment', 'compare methods across trials'),
        ('audit', 'interval stability per method'),
        ('theory', 'length curve and sufficient-condition verdicts'),
        ('ablation', 'sweep p and misspecification bias'),
    ):
        p = add_common(sub.add_parser(name, help=text))
        p.add_argument('--db', nargs='?', const='', default=None,
                       help='record the run in the ledger (optional database URL)')

    quantile = add_common(sub.add_parser('quantile', help='print the VCP threshold'))
    quantile.add_argument('--alpha', type=float, action='append', help='miscoverage level (repeatable)')
    quantile.add_argument('--scores', help='comma-separated calibration scores instead of a fitted model')

    runs = sub.add_parser('runs', help='list recorded runs')
    runs.add_argument('--db', default=None, help='database URL (default from CONFORMAL_DB_URL)')
    runs.add_argument('--command', dest='run_command', default=None, help='only runs of this command')
    runs.add_argument('--limit', type=int, default=20)
    runs.add_argument('--show', type=int, default=None, help='print the summary of one run id')
    return parser


def resolve_config(args):
    """(config, digest) from --config or the defaults, with --seed / --out / --db applied"""
    from src.experiments.config import default_config, load_config, with_overrides

    cfg, digest = load_config(args.config) if args.config else default_config()
    db = getattr(args, 'db', None)
    cfg = with_overrides(cfg, seed=args.seed, csv=getattr(args, 'out', None), db=True if db is not None else None)
    return cfg, digest


# ========== COMMANDS ==========

def cmd_synth(args):
    from src.data.csv_io import write_dataset_csv
    from src.data.synth import generate
    from src.experiments.runner import synth_spec

    cfg, _ = resolve_config(argparse.Namespace(config=args.config, seed=args.seed, out=None))
    if cfg.data.kind == 'csv':
        raise ConfigError("synth needs a synthetic data.kind (mixture, gaussian or logistic)", field='data.kind')
    data = generate(synth_spec(cfg))
    write_dataset_csv(data, sys.stdout if args.out in (None, '-') else args.out)
    return 0


def cmd_experiment(args):
    from src.experiments.runner import run_experiment

    cfg, digest = resolve_config(args)
    reports = run_experiment(cfg)
    record_run(args, cfg, digest, reports=reports)
    return 0


def cmd_audit(args):
    from src.experiments.runner import run_audit

    cfg, digest = resolve_config(args)
    table = run_audit(cfg)
    record_run(args, cfg, digest, notes=f"{len(table)} audit rows")
    return 0


def cmd_theory(args):
    from src.experiments.runner import run_theory, theory_verdict_rows

    cfg, digest = resolve_config(args)
    report, _ = run_theory(cfg)
    record_run(args, cfg, digest, verdicts=theory_verdict_rows(report))
    return 0


def cmd_ablation(args):
    from src.experiments.runner import run_ablation

    cfg, digest = resolve_config(args)
    results = run_ablation(cfg)
    if cfg.output.db:
        ledger_results = []
        for bias, report in results:
            report.bias = bias
            ledger_results.append(report)
        record_run(args, cfg, digest, reports=ledger_results)
    return 0


def parse_level(alpha):
    try:
        return Level(alpha)
    except ValueError as e:
        raise ConfigError(str(e), field='alpha') from e


def cmd_quantile(args):
    from src.conformal.vcp import vcp_quantile, vcp_threshold
    from src.experiments.runner import prepare_trial

    if args.scores:
        try:
            scores = np.sort(np.array([float(s) for s in args.scores.split(',') if s.strip()]))
        except ValueError as e:
            raise ConfigError(f"scores must be comma-separated numbers ({e})", field='scores') from e
        if scores.size == 0:
            raise ConfigError("no calibration scores given", field='scores')
        alphas = args.alpha or [0.1]
        levels = [parse_level(alpha) for alpha in alphas]
        for alpha, level in zip(alphas, levels):
            threshold = vcp_quantile(scores, level)
            print(f"{alpha}\t{float(threshold)!r}")
        return 0

    cfg, _ = resolve_config(argparse.Namespace(config=args.config, seed=args.seed, out=None))
    trial = prepare_trial(cfg, 0)
    cp = trial.base if trial.base is not None else trial.cqr[cfg.alphas[0]]
    alphas = args.alpha or cfg.alphas
    levels = [parse_level(alpha) for alpha in alphas]
    for alpha, level in zip(alphas, levels):
        print(f"{alpha}\t{float(vcp_threshold(cp, level))!r}")
    return 0


def cmd_runs(args):
    import json
    from src.models.crud import get_recent_runs, get_run_summary
    from src.models.database import get_db

    db = get_db(args.db)
    session = db.get_session()
    try:
        if args.show is not None:
            summary = get_run_summary(session, args.show)
            if summary is None:
                logger.error(f"No run with id {args.show}")
                return 1
            print(json.dumps(summary, indent=2, sort_keys=True, default=str))
            return 0
        for run in get_recent_runs(session, command=args.run_command, limit=args.limit):
            print(f"{run.id}\t{run.command}\t{run.seed}\t{run.trials}\t{run.config_digest[:12]}\t{run.created_at}")
    finally:
        session.close()
        db.close()
    return 0


# ========== RUN LEDGER ==========

def record_run(args, cfg, digest, reports=None, verdicts=None, notes=None):
    """Append the run to the SQLite ledger when output.db or --db asks for it"""
    if not cfg.output.db:
        return None
    from src.models.crud import add_method_results, add_verdicts, create_run
    from src.models.database import get_db

    db = get_db(getattr(args, 'db', None) or None)
    session = db.get_session()
    try:
        run = create_run(session, command=args.command, config_digest=digest, seed=cfg.seed,
                         trials=cfg.trials, data_kind=cfg.data.kind, notes=notes)
        if reports:
            add_method_results(session, run.id, reports)
        if verdicts:
            add_verdicts(session, run.id, verdicts)
        logger.info(f"Recorded run {run.id} in the ledger")
        return run.id
    finally:
        session.close()
        db.close()


COMMANDS = {
    'synth': cmd_synth,
    'experiment': cmd_experiment,
    'audit': cmd_audit,
    'theory': cmd_theory,
    'ablation': cmd_ablation,
    'quantile': cmd_quantile,
    'runs': cmd_runs,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    settings = get_settings()
    setup_logging(args.log_level or settings.log_level, settings.log_dir)

    try:
        return COMMANDS[args.command](args)
    except ConformalError as e:
        logger.error(str(e))
        return e.exit_code
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return 3


if __name__ == "__main__":
    sys.exit(main())
