"""Exact per-context baselines and confidence-set checks.

Nothing here touches learner state: the learner only ever sees oracle
values when a config asks for oracle-informed parameters.
"""
import hashlib
import logging
import os
import tempfile
from dataclasses import dataclass

import dill
import numpy as np

import lrcssp as lr
from lrcssp.api.ssp import value_iteration, expected_hitting_time, DEFAULT_TOL
from lrcssp.api.model import induce_ssp
from lrcssp.api.estimation import weighted_norm
from lrcssp.error import NonConvergenceError
from lrcssp.util.serialize import canonical_json

logger = logging.getLogger(__name__)


def get_cached_oracle(cache_file):
    try:
        with open(cache_file, 'rb') as f:
            return dill.load(f)
    except Exception:
        return None


def save_cached_oracle(cache_file, result):
    # concurrent runs of one seed share a key; readers only ever see a complete file
    tmp = None
    try:
        os.makedirs(os.path.dirname(cache_file), exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=os.path.dirname(cache_file), suffix='.tmp')
        with os.fdopen(fd, 'wb') as f:
            dill.dump(result, f)
        os.replace(tmp, cache_file)
    except OSError as e:
        logger.warning('could not write oracle cache %s: %s', cache_file, e)
        if tmp is not None and os.path.exists(tmp):
            os.remove(tmp)


@dataclass
class OracleResult:
    """Optimal values per episode.

    Attributes:
        optimal_value (numpy.ndarray): ``V*_{c_k}(s_init)`` per episode
        max_value (numpy.ndarray): ``max_s V*_{c_k}(s)`` per episode
        max_hitting_time (numpy.ndarray): ``max_s T^{pi*_{c_k}}(s)`` per episode
        values (list): full optimal value vector per episode
        policies (list): optimal policy per episode
    """
    optimal_value: np.ndarray
    max_value: np.ndarray
    max_hitting_time: np.ndarray
    values: list
    policies: list

    @property
    def b_star_emp(self):
        return float(self.max_value.max())

    @property
    def t_star_emp(self):
        return float(self.max_hitting_time.max())


def _solve_context(model, c, tol):
    ssp = induce_ssp(model, c)
    try:
        v, pi = value_iteration(ssp, tol=tol)
    except NonConvergenceError as e:
        raise NonConvergenceError('model rejected for experiments: {}'.format(e), residual=e.residual)
    t = expected_hitting_time(ssp, pi, tol=tol)
    return v, pi, t


def oracle_values(model, contexts, tol=DEFAULT_TOL, cache_dir=None):
    """Solve the SSP of every context exactly.

    Args:
        model (LinearCsspModel): ground truth
        contexts (list): one context per episode
        tol (float): Bellman residual for value iteration
        cache_dir (str): directory of the on-disk cache, defaults to
            ``lrcssp.cache_dir``; ``None`` disables caching

    Returns:
        OracleResult: per-episode optimal values and hitting times

    Raises:
        lrcssp.NonConvergenceError: value iteration failed on some context
    """
    cache_dir = lr.cache_dir if cache_dir is None else cache_dir
    cache_file = None
    if cache_dir:
        key = canonical_json({'model': model.fingerprint, 'tol': tol,
                              'contexts': [np.asarray(c) for c in contexts]})
        cache_file = os.path.join(cache_dir, 'oracle-{}.pickle'.format(hashlib.md5(key.encode('utf-8')).hexdigest()))
        cached = get_cached_oracle(cache_file)
        if cached is not None:
            logger.info('oracle cache hit %s', cache_file)
            return cached

    solved = {}
    values, policies, opt, vmax, tmax = [], [], [], [], []
    for c in contexts:
        key = np.asarray(c).tobytes()
        if key not in solved:
            solved[key] = _solve_context(model, c, tol)
        v, pi, t = solved[key]
        values.append(v)
        policies.append(pi)
        opt.append(v[model.initial_state(c)])
        vmax.append(v.max())
        tmax.append(t.max())

    result = OracleResult(optimal_value=np.array(opt), max_value=np.array(vmax),
                          max_hitting_time=np.array(tmax), values=values, policies=policies)
    if cache_file is not None:
        save_cached_oracle(cache_file, result)
    return result


def confidence_coverage(model, stats, est):
    """Whether every pair's true embeddings lie in both confidence ellipsoids

    Args:
        model (LinearCsspModel): ground truth
        stats (list): grid of :class:`SaStatistics` the estimates were built from
        est (Estimates): the estimates

    Returns:
        tuple: ``(loss_covered, dynamics_covered)``
    """
    loss_ok = dyn_ok = True
    for s in range(model.n_states):
        for a in range(model.n_actions):
            v_bar = stats[s][a].v_bar
            pair = est.pair(s, a)
            if weighted_norm(model.loss_embed[s, a] - pair.l_hat, v_bar) > pair.beta_loss:
                loss_ok = False
            if weighted_norm(model.trans_embed[s, a] - pair.p_hat, v_bar) > pair.beta_dyn:
                dyn_ok = False
    return loss_ok, dyn_ok


def optimism_holds(model, state):
    """True when the true embeddings of every pair lie in both confidence sets of
    the learner's current estimates
    """
    return all(confidence_coverage(model, state.stats, state.estimates))


class OptimismProbe():
    """Interval hook recording coverage and the true optimal value at ``s_init``.

    Read-only with respect to the learner; results go into the interval
    events as ``covered`` and ``v_star_init``.
    """

    def __init__(self, model, tol=DEFAULT_TOL):
        self.model = model
        self.tol = tol
        self._values = {}

    def __call__(self, state, c, s_init):
        key = np.asarray(c).tobytes()
        if key not in self._values:
            self._values[key] = _solve_context(self.model, c, self.tol)[0]
        return {'covered': optimism_holds(self.model, state),
                'v_star_init': float(self._values[key][s_init])}
