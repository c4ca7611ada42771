import pytest
import yaml

import lrcssp as lr


def write(tmp_path, text):
    path = tmp_path / 'config.yaml'
    path.write_text(text)
    return str(path)


def test_defaults():
    cfg = lr.config_from_dict({})
    assert cfg.generator == lr.GeneratorSpec()
    assert cfg.learner == lr.LearnerConfig()
    assert cfg.contexts.kind == 'uniform' and cfg.contexts.K == 500
    assert cfg.seeds == list(range(10))
    assert not cfg.baselines.context_blind


def test_load_nested(tmp_path):
    cfg = lr.load_config(write(tmp_path, '\n'.join([
        'generator: {d: 3, n_states: 4, seed: 7}',
        'contexts: {kind: fixed, K: 50, c0: [0.2, 0.3, 0.5]}',
        'learner:',
        '  delta: 0.05',
        '  evi_tol: 1e-6',
        'seeds: [3, 4]',
    ])))
    assert cfg.generator.d == 3 and cfg.generator.n_actions == 3
    assert cfg.contexts.c0 == [0.2, 0.3, 0.5]
    assert cfg.learner.evi_tol == 1e-6
    assert isinstance(cfg.learner.evi_tol, float)
    assert cfg.seeds == [3, 4]


def test_integer_valued_floats():
    cfg = lr.config_from_dict({'learner': {'evi_max_iter': 1e4}, 'generator': {'n_states': '6'}})
    assert cfg.learner.evi_max_iter == 10000 and isinstance(cfg.learner.evi_max_iter, int)
    assert cfg.generator.n_states == 6


@pytest.mark.parametrize('data', [
    {'learnr': {}},
    {'learner': {'lambda': 2.0}},
    {'generator': {'d': 2, 'colour': 'red'}},
    {'contexts': {'kind': 'uniform', 'K': 10, 'extra': 1}},
])
def test_unknown_keys_rejected(data):
    with pytest.raises(lr.ConfigError) as e:
        lr.config_from_dict(data)
    assert 'unknown key' in str(e.value)


@pytest.mark.parametrize('data', [
    {'generator': {'gamma_goal': 0.0}},
    {'generator': {'n_states': 2.5}},
    {'generator': {'trap': 'yes'}},
    {'learner': {'delta': 1.0}},
    {'learner': {'lam': 0.5}},
    {'learner': {'b_star_init': 'large'}},
    {'contexts': {'kind': 'adaptive'}},
    {'contexts': {'kind': 'fixed'}},
    {'contexts': {'K': 0}},
    {'contexts': {'kind': 'fixed', 'c0': [0.5, 0.25, 0.25]}},
    {'seeds': []},
    {'seeds': [1, 1]},
    {'seeds': [-1]},
    {'oracle_tol': 0},
    {'output_dir': 3},
    {'learner': [1, 2]},
])
def test_invalid_values(data):
    with pytest.raises(lr.ConfigError):
        lr.config_from_dict(data)


def test_load_errors(tmp_path):
    with pytest.raises(lr.ConfigError):
        lr.load_config(str(tmp_path / 'missing.yaml'))
    with pytest.raises(lr.ConfigError):
        lr.load_config(write(tmp_path, 'learner: {delta: [0.1'))


def test_empty_file_is_defaults(tmp_path):
    assert lr.load_config(write(tmp_path, '')) == lr.config_from_dict({})


def test_dump_is_canonical(tmp_path, experiment_config):
    text = lr.dump_config(experiment_config)
    assert list(yaml.safe_load(text)) == ['generator', 'contexts', 'learner', 'baselines', 'seeds', 'output_dir',
                                          'model_path', 'oracle_informed', 'optimism_check', 'oracle_tol']
    loaded = lr.load_config(write(tmp_path, text))
    assert loaded == experiment_config
    assert lr.dump_config(loaded) == text
