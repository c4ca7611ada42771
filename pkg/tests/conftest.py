import itertools

import numpy as np
import pytest

import lrcssp as lr


def random_ssp(rng, n_states, n_actions, goal_min=0.1):
    """Random SSP whose every pair sends at least ``goal_min`` to the goal"""
    loss = rng.random((n_states, n_actions))
    w = rng.dirichlet(np.ones(n_states + 1), size=(n_states, n_actions))
    trans = (1.0 - goal_min) * w[..., :n_states]
    return lr.SspInstance(loss=loss, trans=trans)


def exact_policy_value(ssp, pi):
    l_pi, p_pi = lr.policy_matrices(ssp, pi)
    return np.linalg.solve(np.eye(ssp.n_states) - p_pi, l_pi)


def brute_force_optimum(ssp):
    """Optimal values over all deterministic stationary policies"""
    best = None
    for pi in itertools.product(range(ssp.n_actions), repeat=ssp.n_states):
        v = exact_policy_value(ssp, np.array(pi))
        best = v if best is None else np.minimum(best, v)
    return best


def make_model(loss_embed, trans_embed, **kwargs):
    return lr.LinearCsspModel(loss_embed=np.asarray(loss_embed, dtype=float),
                              trans_embed=np.asarray(trans_embed, dtype=float), **kwargs)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_model():
    return lr.generate_instance(lr.GeneratorSpec(d=2, n_states=3, n_actions=2, gamma_goal=0.3,
                                                 l_min_target=0.1, seed=11))


@pytest.fixture
def reference_model():
    return lr.generate_instance(lr.GeneratorSpec(d=2, n_states=5, n_actions=3, gamma_goal=0.1,
                                                 l_min_target=0.1, seed=0))


@pytest.fixture
def experiment_config(tmp_path):
    return lr.config_from_dict({
        'generator': {'d': 2, 'n_states': 3, 'n_actions': 2, 'gamma_goal': 0.3, 'seed': 5},
        'contexts': {'kind': 'uniform', 'K': 20},
        'learner': {'evi_max_iter': 2000},
        'baselines': {'context_blind': True},
        'seeds': [0, 1],
        'output_dir': str(tmp_path / 'runs'),
    })
