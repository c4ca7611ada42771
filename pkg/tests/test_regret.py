import functools
import json
import math

import numpy as np
import pandas as pd
import pytest

import lrcssp as lr
from conftest import make_model


def fake_run(losses, truncated=None, shape=(1, 1, 1)):
    truncated = truncated or [False] * len(losses)
    episodes = []
    for k, (loss, trunc) in enumerate(zip(losses, truncated)):
        e = lr.EpisodeLog(episode=k, context=np.array([1.0]), s_init=0, steps=3, total_loss=loss,
                          observed_loss=loss, intervals_started=1, truncated=trunc)
        e.intervals.append(lr.IntervalRecord(episode=k, m=k + 1, trigger='goal' if k else 'start',
                                             steps=3, interval_loss=loss))
        episodes.append(e)
    return lr.RunLog(episodes=episodes, config={}, model_fingerprint='x', shape=shape, epsilon=None,
                     l_min_used=0.1, doublings=0)


def fake_oracle(values):
    values = np.asarray(values, dtype=float)
    return lr.OracleResult(optimal_value=values, max_value=values + 1.0, max_hitting_time=np.full(values.size, 2.0),
                           values=[], policies=[])


def test_regret_accounting_identity():
    losses = [1.0, 0.0, 2.0, 1.5]
    df = lr.compute_regret(fake_run(losses), fake_oracle([0.5, 0.5, 1.0, 1.0]))
    assert list(df.columns) == lr.REGRET_COLUMNS
    assert df['regret'].tolist() == [0.5, -0.5, 1.0, 0.5]
    assert df['cum_regret'].iloc[-1] == pytest.approx(sum(losses) - 3.0, abs=1e-9)


def test_truncated_episodes_are_sentinels():
    df = lr.compute_regret(fake_run([1.0, 5.0, 1.0], [False, True, False]), fake_oracle([0.5, 0.5, 0.5]))
    assert math.isnan(df['regret'].iloc[1])
    assert df['cum_regret'].tolist() == [0.5, 0.5, 1.0]
    assert df['truncated'].tolist() == [0, 1, 0]


def test_all_truncated_run():
    df = lr.compute_regret(fake_run([1.0, 1.0], [True, True]), fake_oracle([0.5, 0.5]))
    assert df['cum_regret'].isna().all()
    oracle = lr.oracle_frame(fake_oracle([0.5, 0.5]))
    summary = lr.summarize_run(df, oracle, lr.events_frame(fake_run([1.0, 1.0])), 0.1)
    assert summary['final_cum_regret'] is None
    assert summary['truncations'] == 2


def test_length_mismatch():
    with pytest.raises(ValueError):
        lr.compute_regret(fake_run([1.0]), fake_oracle([0.5, 0.5]))


def test_oracle_replay_regret_is_unbiased():
    # single state, goal always reached: realized loss is one Bernoulli draw of the optimal loss
    model = make_model([[[0.3], [0.6]]], np.zeros((1, 2, 1, 1)))
    oracle = lr.oracle_values(model, [np.array([1.0])], cache_dir='')
    rng = np.random.default_rng(0)
    n = 20000
    regret = [lr.sample_step(model, np.array([1.0]), 0, int(oracle.policies[0][0]), rng)[1] - oracle.optimal_value[0]
              for _ in range(n)]
    assert abs(np.mean(regret)) < 4 * math.sqrt(0.3 * 0.7 / n)


def test_oracle_values(small_model):
    contexts = [lr.as_context([0.2, 0.8]), lr.as_context([1.0, 0.0]), lr.as_context([0.2, 0.8])]
    oracle = lr.oracle_values(small_model, contexts, cache_dir='')
    v, _ = lr.value_iteration(lr.induce_ssp(small_model, contexts[0]))
    assert oracle.optimal_value[0] == pytest.approx(v[small_model.s_init])
    assert oracle.optimal_value[0] == oracle.optimal_value[2]
    assert oracle.b_star_emp == pytest.approx(max(vals.max() for vals in oracle.values))
    assert oracle.t_star_emp >= 1.0


def test_oracle_cache(tmp_path, small_model):
    contexts = [lr.as_context([0.4, 0.6])]
    first = lr.oracle_values(small_model, contexts, cache_dir=str(tmp_path))
    files = list(tmp_path.iterdir())
    assert len(files) == 1
    second = lr.oracle_values(small_model, contexts, cache_dir=str(tmp_path))
    assert np.array_equal(first.optimal_value, second.optimal_value)


def test_oracle_cache_writes_whole_files(tmp_path, small_model, monkeypatch):
    contexts = [lr.as_context([0.4, 0.6])]
    result = lr.oracle_values(small_model, contexts, cache_dir='')
    path = str(tmp_path / 'oracle-x.pickle')
    lr.save_cached_oracle(path, result)
    lr.save_cached_oracle(path, result)
    assert [p.name for p in tmp_path.iterdir()] == ['oracle-x.pickle']
    assert np.array_equal(lr.get_cached_oracle(path).optimal_value, result.optimal_value)

    def failing_dump(obj, f):
        f.write(b'partial')
        raise OSError('disk full')

    monkeypatch.setattr('lrcssp.api.oracle.dill.dump', failing_dump)
    other = str(tmp_path / 'oracle-y.pickle')
    lr.save_cached_oracle(other, result)
    assert [p.name for p in tmp_path.iterdir()] == ['oracle-x.pickle']
    lr.save_cached_oracle(path, result)
    assert np.array_equal(lr.get_cached_oracle(path).optimal_value, result.optimal_value)


def test_oracle_rejects_improper_model(monkeypatch):
    # no proper policy: the only action loops forever at unit loss
    monkeypatch.setattr('lrcssp.api.oracle.value_iteration', functools.partial(lr.value_iteration, max_iter=200))
    model = make_model([[[1.0]]], [[[[1.0]]]])
    with pytest.raises(lr.NonConvergenceError):
        lr.oracle_values(model, [np.array([1.0])], tol=1e-8, cache_dir='')


def test_hpe_bound_and_fraction():
    assert lr.hpe_bound(2.0, 4, 0.1) == pytest.approx(48 * 2.0 * math.log(160))
    events = pd.DataFrame({'m': [1, 2, 3], 'interval_loss': [1.0, 1e6, 2.0]})
    assert lr.hpe_violation_fraction(events, 1.0, 0.1) == pytest.approx(1 / 3)


def test_hpe_diagnostics():
    run_log = fake_run([1.0, 2.0, 3.0], shape=(1, 2, 2))
    run_log.episodes[1].unknown_pairs.extend([(0, 1), (0, 1), (1, 0)])
    report = lr.hpe_diagnostics(run_log, fake_oracle([0.5, 0.5, 0.5]), 0.1)
    assert report['intervals'] == 3
    assert report['violations'] == 0
    assert report['unknown_counts'] == {(0, 1): 2, (1, 0): 1}
    assert report['max_unknown_per_pair'] == 2
    assert report['interval_count_bound_holds']


def test_interval_accounting_from_events():
    events = pd.DataFrame({
        'trigger': ['start', 'unknown', 'unknown', 'goal', 'unknown'],
        'pair': [None, [0, 1], [2, 0], None, [0, 1]],
    })
    report = lr.interval_accounting(events, 2, (2, 3, 2))
    assert report == {'unknown_counts': {'0,1': 2, '2,0': 1}, 'max_unknown_per_pair': 2,
                      'interval_count_bound_holds': True}
    assert not lr.interval_accounting(events, 2, (2, 0, 2))['interval_count_bound_holds']

    quiet = pd.DataFrame({'trigger': ['start', 'goal'], 'pair': [None, None]})
    assert lr.interval_accounting(quiet, 2, (2, 3, 2))['max_unknown_per_pair'] == 0
    assert not lr.interval_accounting(quiet, 1, (2, 3, 2))['interval_count_bound_holds']


def test_slope_and_ratio():
    k = np.arange(1, 1001)
    assert lr.loglog_slope(pd.Series(np.sqrt(k))) == pytest.approx(0.5, abs=1e-9)
    regret = pd.Series(np.r_[np.full(10, 2.0), np.full(80, 1.5), np.full(10, 0.5)])
    assert lr.regret_ratio(regret) == pytest.approx(0.25)
    assert math.isnan(lr.loglog_slope(pd.Series([np.nan, np.nan, np.nan])))


def test_aggregate():
    agg = lr.aggregate([1.0, 2.0, 3.0, 4.0, None])
    assert agg == {'n': 4, 'mean': 2.5, 'median': 2.5, 'iqr': pytest.approx(1.5)}
    assert lr.aggregate([None])['mean'] is None


def test_written_tables_reproduce_summary(tmp_path, small_model):
    contexts = lr.context_sequence('uniform', 12, 2, rng=np.random.default_rng(3))
    run_log = lr.run(lr.LearnerConfig(), small_model, contexts, np.random.default_rng(4))
    oracle = lr.oracle_values(small_model, contexts.contexts, cache_dir='')
    regret = lr.compute_regret(run_log, oracle)
    lr.write_frame(regret, str(tmp_path / 'regret.csv'))
    lr.write_frame(lr.oracle_frame(oracle), str(tmp_path / 'oracle.csv'))
    lr.write_events(run_log, str(tmp_path / 'events.jsonl'))

    text = (tmp_path / 'regret.csv').read_bytes()
    assert b'\r\n' not in text
    assert text.splitlines()[0].decode() == ','.join(lr.REGRET_COLUMNS)

    back = lr.read_frame(str(tmp_path / 'regret.csv'))
    events = lr.read_events(str(tmp_path / 'events.jsonl'))
    assert len(events) == run_log.total_intervals
    first = json.loads((tmp_path / 'events.jsonl').read_text().splitlines()[0])
    assert first['trigger'] == 'start' and first['m'] == 1

    summary = lr.summarize_run(back, lr.read_frame(str(tmp_path / 'oracle.csv')), events, 0.1)
    assert summary['final_cum_regret'] == pytest.approx(back['cum_regret'].iloc[-1])
    assert summary['intervals'] == run_log.total_intervals
    assert summary['steps'] == run_log.total_steps
    assert summary['b_star_emp'] == pytest.approx(oracle.b_star_emp, rel=1e-8)
    assert 'unknown_counts' not in summary

    oracle_back = lr.read_frame(str(tmp_path / 'oracle.csv'))
    accounted = lr.summarize_run(back, oracle_back, events, 0.1, shape=small_model.shape)
    report = lr.hpe_diagnostics(run_log, oracle, 0.1)
    assert accounted['max_unknown_per_pair'] == report['max_unknown_per_pair']
    assert accounted['interval_count_bound_holds'] == report['interval_count_bound_holds']
    assert accounted['unknown_counts'] == {'{},{}'.format(*k): v for k, v in report['unknown_counts'].items()}
