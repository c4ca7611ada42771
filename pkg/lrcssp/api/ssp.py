"""Tabular stochastic shortest path primitives.

The goal state is never stored: it is the residual mass
``1 - trans[s, a].sum()`` and its value is 0. Value functions and policies
are plain numpy arrays indexed by state.
"""
import logging
from dataclasses import dataclass

import numpy as np

from lrcssp.error import StructuralError, NonConvergenceError, ImproperPolicyError

logger = logging.getLogger(__name__)

MASS_TOL = 1e-9
DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 10**6
DEFAULT_VALUE_CAP = 1e9


@dataclass(frozen=True, eq=False)
class SspInstance:
    """A concrete SSP.

    Args:
        loss (numpy.ndarray): shape (n_states, n_actions), entries in [0, 1]
        trans (numpy.ndarray): shape (n_states, n_actions, n_states), each
            ``trans[s, a]`` a sub-distribution over the non-goal states

    Raises:
        lrcssp.StructuralError: if shapes disagree or an invariant is violated
    """
    loss: np.ndarray
    trans: np.ndarray

    def __post_init__(self):
        loss = np.array(self.loss, dtype=float)
        trans = np.array(self.trans, dtype=float)
        if loss.ndim != 2:
            raise StructuralError('loss must be 2-d (states, actions), got shape {}'.format(loss.shape))
        n_states, n_actions = loss.shape
        if trans.shape != (n_states, n_actions, n_states):
            raise StructuralError('trans has shape {}, expected {}'.format(
                trans.shape, (n_states, n_actions, n_states)))
        if np.any(loss < 0.0) or np.any(loss > 1.0):
            raise StructuralError('loss entries must lie in [0, 1]')
        if np.any(trans < 0.0):
            raise StructuralError('trans entries must be non-negative')
        if np.any(trans.sum(axis=2) > 1.0 + MASS_TOL):
            raise StructuralError('trans rows must sum to at most 1')
        loss.flags.writeable = False
        trans.flags.writeable = False
        object.__setattr__(self, 'loss', loss)
        object.__setattr__(self, 'trans', trans)

    @property
    def n_states(self):
        return self.loss.shape[0]

    @property
    def n_actions(self):
        return self.loss.shape[1]

    @property
    def goal_mass(self):
        return np.clip(1.0 - self.trans.sum(axis=2), 0.0, 1.0)


def _check_values(v, ssp):
    v = np.asarray(v, dtype=float)
    if v.shape != (ssp.n_states,):
        raise StructuralError('value function has shape {}, expected ({},)'.format(v.shape, ssp.n_states))
    return v


def _check_policy(pi, ssp):
    pi = np.asarray(pi)
    if pi.shape != (ssp.n_states,):
        raise StructuralError('policy has shape {}, expected ({},)'.format(pi.shape, ssp.n_states))
    if np.any(pi < 0) or np.any(pi >= ssp.n_actions):
        raise StructuralError('policy actions must lie in [0, {})'.format(ssp.n_actions))
    return pi.astype(int)


def q_values(v, ssp):
    """``loss(s, a) + sum_s' trans(s, a, s') v(s')``; the goal adds nothing
    """
    v = _check_values(v, ssp)
    return ssp.loss + ssp.trans @ v


def bellman_backup(v, ssp):
    """Apply the Bellman optimality operator once.

    Args:
        v (numpy.ndarray): values of the non-goal states
        ssp (SspInstance): the instance

    Returns:
        numpy.ndarray: ``min_a [loss(s, a) + trans(s, a) . v]`` per state
    """
    return q_values(v, ssp).min(axis=1)


def greedy_policy(v, ssp):
    # np.argmin returns the lowest index among ties
    return q_values(v, ssp).argmin(axis=1)


def policy_matrices(ssp, pi):
    """Loss vector and sub-stochastic transition matrix of a stationary policy
    """
    pi = _check_policy(pi, ssp)
    states = np.arange(ssp.n_states)
    return ssp.loss[states, pi], ssp.trans[states, pi]


def value_iteration(ssp, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Solve the Bellman optimality equations from the zero function.

    Args:
        ssp (SspInstance): the instance
        tol (float): sup-norm Bellman residual to reach
        max_iter (int): iteration budget

    Returns:
        tuple: ``(V, pi)`` with ``|V - backup(V)|_inf <= tol`` and ``pi`` greedy
        with respect to ``V`` (lowest action index on ties)

    Raises:
        lrcssp.NonConvergenceError: residual still above ``tol`` after ``max_iter``

    Example::

        >>> ssp = SspInstance(loss=[[0.3]], trans=[[[0.0]]])
        >>> V, pi = value_iteration(ssp)
        >>> V, pi
        (array([0.3]), array([0]))
    """
    if tol <= 0:
        raise ValueError('tol must be positive')
    v = np.zeros(ssp.n_states)
    residual = np.inf
    for _ in range(max_iter):
        w = bellman_backup(v, ssp)
        residual = float(np.max(np.abs(w - v))) if ssp.n_states else 0.0
        if residual <= tol:
            return v, greedy_policy(v, ssp)
        v = w
    raise NonConvergenceError(
        'value iteration did not converge in {} iterations, residual {:.3g} '
        '(zero-loss loop or improper structure?)'.format(max_iter, residual),
        residual=residual)


def policy_evaluation(ssp, pi, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, value_cap=DEFAULT_VALUE_CAP):
    """Iteratively solve ``V = l_pi + P_pi V``.

    Raises:
        lrcssp.ImproperPolicyError: a value exceeds ``value_cap`` or the
            iteration budget runs out
    """
    l_pi, p_pi = policy_matrices(ssp, pi)
    return _evaluate(l_pi, p_pi, tol, max_iter, value_cap)


def _evaluate(l_pi, p_pi, tol, max_iter, value_cap):
    v = np.zeros(l_pi.shape[0])
    residual = np.inf
    for _ in range(max_iter):
        w = l_pi + p_pi @ v
        if w.size and w.max() > value_cap:
            raise ImproperPolicyError('policy values diverged past {:g}'.format(value_cap),
                                      residual=residual, max_value=float(w.max()))
        residual = float(np.max(np.abs(w - v))) if w.size else 0.0
        if residual <= tol:
            return v
        v = w
    raise ImproperPolicyError('policy evaluation did not settle in {} iterations, residual {:.3g}'.format(
        max_iter, residual), residual=residual, max_value=float(v.max()) if v.size else 0.0)


def expected_hitting_time(ssp, pi, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, value_cap=DEFAULT_VALUE_CAP):
    """Expected number of steps to reach the goal under ``pi``, per start state
    """
    _, p_pi = policy_matrices(ssp, pi)
    return _evaluate(np.ones(ssp.n_states), p_pi, tol, max_iter, value_cap)


def is_proper(ssp, pi, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, value_cap=DEFAULT_VALUE_CAP):
    """True when the hitting-time iteration of ``pi`` converges
    """
    try:
        expected_hitting_time(ssp, pi, tol=tol, max_iter=max_iter, value_cap=value_cap)
    except ImproperPolicyError as e:
        logger.debug('policy %s is improper: %s', np.asarray(pi).tolist(), e)
        return False
    return True
