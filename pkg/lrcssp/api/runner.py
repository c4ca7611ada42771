"""Experiment sweeps: one learner run per (variant, seed), written to disk.

Layout of an output directory::

    config.yaml                     canonical config of the sweep
    model.json                      the environment, with its fingerprint
    summary.json                    per-run summaries and per-variant aggregates
    <variant>/seed_<n>/regret.csv
    <variant>/seed_<n>/oracle.csv
    <variant>/seed_<n>/events.jsonl
"""
import dataclasses
import json
import logging
import os

import joblib
import numpy as np
import pandas as pd

import lrcssp as lr
from lrcssp.api.config import load_config, dump_config
from lrcssp.api.model import generate_instance, load_model, save_model, context_sequence
from lrcssp.api.learner import run
from lrcssp.api.oracle import oracle_values, OptimismProbe
from lrcssp.api.regret import (compute_regret, oracle_frame, summarize_run, aggregate, write_frame, read_frame,
                               write_events, read_events, hpe_diagnostics)
from lrcssp.error import ArtifactError, LrcsspError

logger = logging.getLogger(__name__)

LEARNER = 'lrcssp'
CONTEXT_BLIND = 'context_blind'
SUMMARY_FILE = 'summary.json'
TABLE_COLUMNS = ['variant', 'runs', 'mean', 'median', 'iqr', 'truncations', 'hpe_violation_fraction']

# keeps the context and environment streams of a seed apart from other uses of it
CONTEXT_STREAM, ENV_STREAM = 0, 1


def baseline_context_blind(cfg, model, contexts, rng):
    """The learner fed the simplex barycentre instead of the true context.

    The environment still evolves under the true contexts, so regret is
    measured against the same oracle as the real learner.
    """
    return run(cfg, model, contexts, rng, context_blind=True)


def run_streams(seed):
    """Independent context and environment generators of one seed
    """
    children = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(children[CONTEXT_STREAM]), np.random.default_rng(children[ENV_STREAM])


class ExperimentRunner():
    """Runs the learner and its baselines over the seeds of a config.

    Args:
        cfg (ExperimentConfig): validated config
        out_dir (str): output directory, defaults to ``cfg.output_dir``
        jobs (int): parallel runs, defaults to ``lrcssp.jobs``
        seed_offset (int): added to every seed of the config
    """

    def __init__(self, cfg, out_dir=None, jobs=None, seed_offset=0):
        self.cfg = cfg
        self.out_dir = out_dir or cfg.output_dir
        self.jobs = jobs or lr.jobs
        self.seeds = [s + seed_offset for s in cfg.seeds]
        self.cache_dir = lr.cache_dir
        self.model = self.load_model()

    def load_model(self):
        if self.cfg.model_path:
            model = load_model(self.cfg.model_path)
            if model.d != self.cfg.generator.d:
                logger.warning('model file has d=%d, config says %d; using the model', model.d, self.cfg.generator.d)
            return model
        return generate_instance(self.cfg.generator)

    @property
    def variants(self):
        variants = [LEARNER]
        if self.cfg.baselines.context_blind:
            variants.append(CONTEXT_BLIND)
        return variants

    def run_dir(self, variant, seed):
        return os.path.join(self.out_dir, variant, 'seed_{}'.format(seed))

    def contexts(self, rng):
        spec = self.cfg.contexts
        return context_sequence(spec.kind, spec.K, self.model.d, rng=rng, c0=spec.c0)

    def learner_config(self, oracle):
        cfg = self.cfg.learner
        if not self.cfg.oracle_informed:
            return cfg
        l_min = float(self.model.loss_embed.min())
        b_star_init = max(1.0, oracle.b_star_emp)
        logger.info('oracle-informed parameters: b_star_init=%.4g l_min=%.4g', b_star_init, l_min)
        return dataclasses.replace(cfg, b_star_init=b_star_init, l_min=l_min)

    def run_single(self, variant, seed):
        """Run one variant on one seed and write its artifacts.

        Returns:
            str: the run directory

        Raises:
            lrcssp.LrcsspError: more intervals than episodes plus unknown-pair visits allow
        """
        context_rng, env_rng = run_streams(seed)
        contexts = self.contexts(context_rng)
        oracle = oracle_values(self.model, contexts.contexts, tol=self.cfg.oracle_tol, cache_dir=self.cache_dir)
        cfg = self.learner_config(oracle)

        if variant == CONTEXT_BLIND:
            run_log = baseline_context_blind(cfg, self.model, contexts, env_rng)
        else:
            hook = OptimismProbe(self.model, self.cfg.oracle_tol) if self.cfg.optimism_check else None
            run_log = run(cfg, self.model, contexts, env_rng, interval_hook=hook)

        path = self.run_dir(variant, seed)
        os.makedirs(path, exist_ok=True)
        write_frame(compute_regret(run_log, oracle), os.path.join(path, 'regret.csv'))
        write_frame(oracle_frame(oracle), os.path.join(path, 'oracle.csv'))
        write_events(run_log, os.path.join(path, 'events.jsonl'))
        logger.info('%s seed %d: T=%d M=%d truncations=%d', variant, seed,
                    run_log.total_steps, run_log.total_intervals, run_log.truncations)
        report = hpe_diagnostics(run_log, oracle, cfg.delta)
        if not report['interval_count_bound_holds']:
            raise LrcsspError('{} seed {}: {} intervals exceed K + |S||A| x {} unknown visits'.format(
                variant, seed, report['intervals'], report['max_unknown_per_pair']))
        return path

    def run(self):
        """Run every (variant, seed) pair and write the summary.

        Returns:
            dict: the summary, as written to ``summary.json``
        """
        os.makedirs(self.out_dir, exist_ok=True)
        with open(os.path.join(self.out_dir, 'config.yaml'), 'w', newline='\n') as f:
            f.write(dump_config(self.cfg))
        fingerprint = save_model(self.model, os.path.join(self.out_dir, 'model.json'))

        tasks = [(variant, seed) for variant in self.variants for seed in self.seeds]
        logger.info('running %d runs with %d jobs', len(tasks), self.jobs)
        if self.jobs == 1:
            for variant, seed in tasks:
                self.run_single(variant, seed)
        else:
            joblib.Parallel(n_jobs=self.jobs)(
                joblib.delayed(self.run_single)(variant, seed) for variant, seed in tasks)

        summary = summarize_dir(self.out_dir, self.cfg.learner.delta)
        summary['model_fingerprint'] = fingerprint
        with open(os.path.join(self.out_dir, SUMMARY_FILE), 'w', newline='\n') as f:
            json.dump(summary, f, indent=2)
            f.write('\n')
        return summary


def run_experiment(cfg, out_dir=None, jobs=None, seed_offset=0):
    """Generate or load the model, run every variant over every seed and write
    the artifacts

    Args:
        cfg (ExperimentConfig): validated config
        out_dir (str): output directory, defaults to ``cfg.output_dir``
        jobs (int): parallel runs
        seed_offset (int): shift applied to the seed list

    Returns:
        dict: the summary
    """
    return ExperimentRunner(cfg, out_dir=out_dir, jobs=jobs, seed_offset=seed_offset).run()


def _seed_dirs(variant_dir):
    seeds = []
    for name in os.listdir(variant_dir):
        if name.startswith('seed_') and name[len('seed_'):].isdigit() and os.path.isdir(os.path.join(variant_dir, name)):
            seeds.append(int(name[len('seed_'):]))
    return sorted(seeds)


def _variant_dirs(run_dir):
    if not os.path.isdir(run_dir):
        raise ArtifactError('run directory not found: {}'.format(run_dir))
    variants = [name for name in sorted(os.listdir(run_dir))
                if os.path.isdir(os.path.join(run_dir, name)) and not name.startswith('.')
                and _seed_dirs(os.path.join(run_dir, name))]
    if not variants:
        raise ArtifactError('no runs found in {}'.format(run_dir))
    return variants


def _read_run(path):
    try:
        return (read_frame(os.path.join(path, 'regret.csv')),
                read_frame(os.path.join(path, 'oracle.csv')),
                read_events(os.path.join(path, 'events.jsonl')))
    except (OSError, ValueError, pd.errors.ParserError) as e:
        raise ArtifactError('cannot read run artifacts in {}: {}'.format(path, e))


def summarize_dir(run_dir, delta):
    """Summaries of every run under ``run_dir``, from the files alone.

    Returns:
        dict: ``{'variants': {variant: {'runs': {seed: summary}, 'aggregate': {...}}}}``
    """
    variant_names = _variant_dirs(run_dir)
    shape = load_model(os.path.join(run_dir, 'model.json')).shape
    variants = {}
    for variant in variant_names:
        runs = {}
        for seed in _seed_dirs(os.path.join(run_dir, variant)):
            regret, oracle, events = _read_run(os.path.join(run_dir, variant, 'seed_{}'.format(seed)))
            runs[str(seed)] = summarize_run(regret, oracle, events, delta, shape=shape)
        variants[variant] = {
            'runs': runs,
            'aggregate': aggregate([r['final_cum_regret'] for r in runs.values()]),
        }
    return {'variants': variants}


def comparison_table(summary):
    rows = []
    for variant, data in summary['variants'].items():
        runs = data['runs'].values()
        agg = data['aggregate']
        rows.append({
            'variant': variant,
            'runs': len(data['runs']),
            'mean': agg['mean'],
            'median': agg['median'],
            'iqr': agg['iqr'],
            'truncations': sum(r['truncations'] for r in runs),
            'hpe_violation_fraction': float(np.mean([r['hpe_violation_fraction'] for r in runs])),
        })
    return pd.DataFrame(rows, columns=TABLE_COLUMNS)


def plot_frame(run_dir, variant):
    """Cumulative regret across seeds per episode: mean, quartiles
    """
    curves = {}
    for seed in _seed_dirs(os.path.join(run_dir, variant)):
        regret = read_frame(os.path.join(run_dir, variant, 'seed_{}'.format(seed), 'regret.csv'))
        curves[seed] = regret.set_index('episode')['cum_regret']
    curves = pd.DataFrame(curves)
    return pd.DataFrame({
        'mean': curves.mean(axis=1),
        'q25': curves.quantile(0.25, axis=1),
        'median': curves.median(axis=1),
        'q75': curves.quantile(0.75, axis=1),
    }).reset_index()


def report_run_dir(run_dir):
    """Recompute the summary of a run directory from its CSVs, compare it with
    the stored one and write ``plot_<variant>.csv`` files.

    Returns:
        tuple: ``(summary, table, matches)`` where ``matches`` tells whether
        the recomputed summary equals ``summary.json``

    Raises:
        lrcssp.ArtifactError: missing directory, config or run files
    """
    config_path = os.path.join(run_dir, 'config.yaml')
    if not os.path.isfile(config_path):
        raise ArtifactError('no config.yaml in {}'.format(run_dir))
    cfg = load_config(config_path)
    summary = summarize_dir(run_dir, cfg.learner.delta)

    stored = None
    stored_path = os.path.join(run_dir, SUMMARY_FILE)
    if os.path.isfile(stored_path):
        with open(stored_path) as f:
            stored = json.load(f)
        if 'model_fingerprint' in stored:
            summary['model_fingerprint'] = stored['model_fingerprint']
    matches = stored == summary
    if stored is not None and not matches:
        logger.warning('recomputed summary differs from %s', stored_path)

    for variant in summary['variants']:
        write_frame(plot_frame(run_dir, variant), os.path.join(run_dir, 'plot_{}.csv'.format(variant)))
    return summary, comparison_table(summary), matches
