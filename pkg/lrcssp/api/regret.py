"""Regret curves, interval diagnostics and run summaries.

Per-episode regret is realized (sampled) loss minus the expected optimal
value, so single entries are noisy and may be negative. Truncated episodes
carry ``NaN`` regret and do not enter the cumulative sum.
"""
import json
import logging
import math

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

REGRET_COLUMNS = ['episode', 'steps', 'realized_loss', 'optimal_value', 'regret', 'cum_regret',
                  'intervals', 'unknown_triggers', 'truncated', 'b_star_cur']
ORACLE_COLUMNS = ['episode', 'optimal_value', 'max_value', 'max_hitting_time']
HPE_CONSTANT = 48.0
FLOAT_FORMAT = '%.9g'


def compute_regret(run_log, oracle):
    """Per-episode and cumulative regret of a run.

    Args:
        run_log (RunLog): the learner's run
        oracle (OracleResult): optimal values of the same contexts

    Returns:
        pandas.DataFrame: one row per episode, columns ``REGRET_COLUMNS``
    """
    episodes = run_log.episodes
    if len(episodes) != len(oracle.optimal_value):
        raise ValueError('run has {} episodes but oracle has {}'.format(len(episodes), len(oracle.optimal_value)))
    df = pd.DataFrame({
        'episode': [e.episode for e in episodes],
        'steps': [e.steps for e in episodes],
        'realized_loss': [e.total_loss for e in episodes],
        'optimal_value': oracle.optimal_value.astype(float),
        'truncated': [int(e.truncated) for e in episodes],
        'intervals': [e.intervals_started for e in episodes],
        'unknown_triggers': [e.unknown_triggers for e in episodes],
        'b_star_cur': [e.b_star_cur for e in episodes],
    })
    df['regret'] = (df['realized_loss'] - df['optimal_value']).where(df['truncated'] == 0)
    cum = df['regret'].fillna(0.0).cumsum()
    df['cum_regret'] = cum.where(df['truncated'].eq(0).astype(int).cummax() > 0)
    return df[REGRET_COLUMNS]


def oracle_frame(oracle):
    return pd.DataFrame({
        'episode': np.arange(len(oracle.optimal_value)),
        'optimal_value': oracle.optimal_value,
        'max_value': oracle.max_value,
        'max_hitting_time': oracle.max_hitting_time,
    })[ORACLE_COLUMNS]


def events_frame(run_log):
    return pd.DataFrame([r.to_event() for e in run_log.episodes for r in e.intervals])


def hpe_bound(b_star, m, delta):
    return HPE_CONSTANT * b_star * math.log(4.0 * m / delta)


def hpe_violation_fraction(events, b_star_emp, delta):
    if len(events) == 0:
        return 0.0
    bounds = HPE_CONSTANT * b_star_emp * np.log(4.0 * events['m'].to_numpy(dtype=float) / delta)
    return float(np.mean(events['interval_loss'].to_numpy(dtype=float) > bounds))


def hpe_diagnostics(run_log, oracle, delta):
    """Interval-loss bound check and interval accounting of one run.

    Returns:
        dict: ``intervals``, ``violations``, ``violation_fraction``,
        ``unknown_counts`` (per pair), ``max_unknown_per_pair`` and
        ``interval_count_bound_holds`` (``M <= K + |S||A| max_unknown``)
    """
    events = events_frame(run_log)
    b_star = oracle.b_star_emp
    fraction = hpe_violation_fraction(events, b_star, delta)
    counts = run_log.unknown_counts()
    max_unknown = max(counts.values()) if counts else 0
    _, n_states, n_actions = run_log.shape
    K = len(run_log.episodes)
    M = run_log.total_intervals
    report = {
        'intervals': M,
        'violations': int(round(fraction * len(events))),
        'violation_fraction': fraction,
        'unknown_counts': counts,
        'max_unknown_per_pair': max_unknown,
        'interval_count_bound_holds': M <= K + n_states * n_actions * max_unknown,
    }
    if fraction > delta:
        logger.warning('interval loss bound violated in %.3f of intervals (delta=%g)', fraction, delta)
    return report


def _none_if_nan(x):
    x = float(x)
    return None if math.isnan(x) else x


def regret_ratio(regret):
    """Mean regret over the last tenth of episodes over the mean over the first tenth
    """
    n = max(1, len(regret) // 10)
    first = regret.iloc[:n].mean()
    last = regret.iloc[-n:].mean()
    if not first or math.isnan(first):
        return math.nan
    return float(last / first)


def loglog_slope(cum_regret):
    k = np.arange(1, len(cum_regret) + 1, dtype=float)
    half = len(cum_regret) // 2
    y = cum_regret.to_numpy(dtype=float)[half:]
    x = k[half:]
    keep = np.isfinite(y) & (y > 0)
    if keep.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)[0])


def interval_accounting(events, K, shape):
    """Unknown-pair counts and the interval count bound, from the interval events.

    Args:
        events (pandas.DataFrame): interval events with ``trigger`` and ``pair``
        K (int): episodes of the run
        shape (tuple): ``(d, |S|, |A|)`` of the model

    Returns:
        dict: ``unknown_counts`` keyed ``"s,a"``, ``max_unknown_per_pair`` and
        ``interval_count_bound_holds``
    """
    counts = {}
    if 'trigger' in events and 'pair' in events:
        for pair in events.loc[events['trigger'] == 'unknown', 'pair']:
            key = '{},{}'.format(*pair)
            counts[key] = counts.get(key, 0) + 1
    max_unknown = max(counts.values()) if counts else 0
    _, n_states, n_actions = shape
    return {
        'unknown_counts': dict(sorted(counts.items())),
        'max_unknown_per_pair': max_unknown,
        'interval_count_bound_holds': bool(len(events) <= K + n_states * n_actions * max_unknown),
    }


def summarize_run(regret, oracle, events, delta, shape=None):
    """Summary of one run, computed from the written tables.

    Args:
        regret (pandas.DataFrame): regret table as read back from CSV
        oracle (pandas.DataFrame): oracle table as read back from CSV
        events (pandas.DataFrame): interval events
        delta (float): confidence level, for the interval-loss bound
        shape (tuple): model shape; adds the interval accounting of :func:`interval_accounting`

    Returns:
        dict: JSON-ready summary, ``NaN`` reported as ``None``
    """
    b_star = float(oracle['max_value'].max())
    summary = {
        'final_cum_regret': _none_if_nan(regret['cum_regret'].iloc[-1]),
        'regret_ratio': _none_if_nan(regret_ratio(regret['regret'])),
        'loglog_slope': _none_if_nan(loglog_slope(regret['cum_regret'])),
        'truncations': int(regret['truncated'].sum()),
        'hpe_violation_fraction': hpe_violation_fraction(events, b_star, delta),
        'b_star_emp': b_star,
        't_star_emp': float(oracle['max_hitting_time'].max()),
        'steps': int(regret['steps'].sum()),
        'intervals': int(regret['intervals'].sum()),
        'doublings': int(events['doublings'].sum()) if 'doublings' in events else 0,
        'b_star_final': float(regret['b_star_cur'].iloc[-1]),
    }
    if shape is not None:
        summary.update(interval_accounting(events, len(regret), shape))
    return summary


def aggregate(final_regrets):
    """Mean, median and interquartile range of final cumulative regret across seeds
    """
    values = pd.Series([v for v in final_regrets if v is not None], dtype=float)
    if values.empty:
        return {'n': 0, 'mean': None, 'median': None, 'iqr': None}
    return {
        'n': int(values.size),
        'mean': float(values.mean()),
        'median': float(values.median()),
        'iqr': float(values.quantile(0.75) - values.quantile(0.25)),
    }


def write_frame(df, path):
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')


def read_frame(path):
    return pd.read_csv(path)


def write_events(run_log, path):
    with open(path, 'w', newline='\n') as f:
        for e in run_log.episodes:
            for r in e.intervals:
                f.write(json.dumps(r.to_event()))
                f.write('\n')


def read_events(path):
    with open(path) as f:
        rows = [json.loads(line) for line in f if line.strip()]
    return pd.DataFrame(rows, columns=None if rows else ['m', 'interval_loss'])
