"""Per state-action ridge regression, confidence radii and the known-pair test.

Each pair keeps sufficient statistics only: the design matrix
``V = lam I + sum c c^T`` and its inverse, ``sum c * loss`` and
``sum e_next c^T``. A goal transition has an all-zero target row, so it
advances ``V`` and ``tau`` but leaves ``xty_trans`` unchanged.
"""
import json
import logging
import math
from dataclasses import dataclass

import numpy as np

from lrcssp.error import ProjectionError, ArtifactError
from lrcssp.util.linalg import project_capped_simplex, sherman_morrison_update, largest_eigenvalue
from lrcssp.util.serialize import FORMAT_VERSION, canonical_json

logger = logging.getLogger(__name__)

REINVERT_EVERY = 1024
PROJECTION_TOL = 1e-10
PROJECTION_MAX_ITER = 10000
FEASIBILITY_TOL = 1e-9


class SaStatistics():
    """Sufficient statistics of one state-action pair.

    Args:
        d (int): context dimension
        n_states (int): number of non-goal states
        lam (float): ridge regularization
    """

    def __init__(self, d, n_states, lam=1.0):
        self.d = d
        self.n_states = n_states
        self.lam = lam
        self.tau = 0
        self.v_bar = lam * np.eye(d)
        self.v_bar_inv = np.eye(d) / lam
        self.xty_loss = np.zeros(d)
        self.xty_trans = np.zeros((n_states, d))
        self._updates_since_inversion = 0

    def record_visit(self, c, next_state, loss):
        c = np.asarray(c, dtype=float)
        self.tau += 1
        self.v_bar = self.v_bar + np.outer(c, c)
        self._updates_since_inversion += 1
        if self._updates_since_inversion >= REINVERT_EVERY:
            self.v_bar_inv = np.linalg.inv(self.v_bar)
            self._updates_since_inversion = 0
        else:
            self.v_bar_inv = sherman_morrison_update(self.v_bar_inv, c)
        self.xty_loss = self.xty_loss + c * loss
        if next_state >= 0:
            self.xty_trans = self.xty_trans.copy()
            self.xty_trans[next_state] += c
        return self

    def copy(self):
        other = SaStatistics.__new__(SaStatistics)
        other.__dict__.update(self.__dict__)
        return other


def record_visit(stats, c, next_state, loss):
    """Add one observed transition ``(c, next_state, loss)`` to the pair's statistics.

    Args:
        stats (SaStatistics): statistics of the visited pair, updated in place
        c (numpy.ndarray): context of the current episode
        next_state (int): next state, negative for the goal
        loss (float): observed loss in [0, 1]

    Returns:
        SaStatistics: ``stats``
    """
    return stats.record_visit(c, next_state, loss)


def ridge_loss_estimate(stats):
    return stats.v_bar_inv @ stats.xty_loss


def ridge_dynamics_estimate(stats):
    # one ridge regression per next state, all sharing V^-1 (symmetric)
    return stats.xty_trans @ stats.v_bar_inv


def weighted_norm(m, v):
    """``sqrt(tr(M V M^T))`` for a matrix, ``sqrt(x^T V x)`` for a vector
    """
    m = np.atleast_2d(m)
    return math.sqrt(max(float(np.trace(m @ v @ m.T)), 0.0))


def context_norm(v_bar_inv, c):
    return math.sqrt(max(float(c @ v_bar_inv @ c), 0.0))


def _is_substochastic(p):
    return bool(np.all(p >= 0.0) and np.all(p.sum(axis=0) <= 1.0 + FEASIBILITY_TOL))


def project_to_stochastic(p_raw, v_bar, tol=PROJECTION_TOL, max_iter=PROJECTION_MAX_ITER):
    """Project a matrix onto matrices whose columns are sub-distributions,
    in the norm ``|M|_V^2 = tr(M V M^T)``.

    Projected gradient with step ``1 / (2 lambda_max(V))`` and an exact
    capped-simplex projection of every column per step.

    Args:
        p_raw (numpy.ndarray): shape (n_states, d)
        v_bar (numpy.ndarray): shape (d, d), positive definite

    Returns:
        numpy.ndarray: the projected matrix

    Raises:
        lrcssp.ProjectionError: if the improvement is still above ``tol``
            after ``max_iter`` iterations
    """
    p_raw = np.asarray(p_raw, dtype=float)
    if _is_substochastic(p_raw):
        return p_raw.copy()

    step = 1.0 / (2.0 * largest_eigenvalue(v_bar))

    def objective(p):
        diff = p - p_raw
        return float(np.sum((diff @ v_bar) * diff))

    p = project_capped_simplex(p_raw)
    f = objective(p)
    gap = np.inf
    for _ in range(max_iter):
        grad = 2.0 * (p - p_raw) @ v_bar
        p_next = project_capped_simplex(p - step * grad)
        f_next = objective(p_next)
        gap = f - f_next
        if f_next <= f:
            p, f = p_next, f_next
        if gap < tol:
            return p
    raise ProjectionError('projection did not settle in {} iterations, last improvement {:.3g}'.format(
        max_iter, gap), gap=gap)


def loss_radius(tau, shape, lam, delta):
    """Radius of the loss confidence ellipsoid

    Args:
        tau (int): visits of the pair
        shape (tuple): ``(d, n_states, n_actions)``
        lam (float): ridge regularization, at least 1
        delta (float): confidence level in (0, 1)

    Returns:
        float: ``sqrt(d log(8 |S||A| (1 + tau/lam) / delta)) + sqrt(lam)``
    """
    d, n_states, n_actions = shape
    return math.sqrt(d * math.log(8.0 * n_states * n_actions * (1.0 + tau / lam) / delta)) + math.sqrt(lam)


def dynamics_radius(tau, shape, lam, delta):
    """Radius of the dynamics confidence ellipsoid, scaled by ``|S|``

    Returns:
        float: ``|S| (sqrt(d log(8 |S|^2 |A| (1 + tau/lam) / delta)) + sqrt(lam))``
    """
    d, n_states, n_actions = shape
    inner = math.sqrt(d * math.log(8.0 * n_states ** 2 * n_actions * (1.0 + tau / lam) / delta))
    return n_states * (inner + math.sqrt(lam))


def known_threshold(l_min, b_star, m, delta, beta_dyn):
    return l_min / (10.0 * b_star * max(beta_dyn, math.sqrt(math.log(4.0 * m / delta))))


def is_known(stats, c, l_min, b_star, m, delta, shape, lam=1.0):
    """Whether the pair counts as known for context ``c`` in interval ``m``

    A pair is known when ``|c|_{V^-1}`` is below
    ``l_min / (10 b_star max(beta_dyn, sqrt(log(4m / delta))))``. Known pairs
    can become unknown again as ``m`` grows or the context moves.
    """
    beta = dynamics_radius(stats.tau, shape, lam, delta)
    return context_norm(stats.v_bar_inv, c) < known_threshold(l_min, b_star, m, delta, beta)


@dataclass(frozen=True, eq=False)
class PairEstimate:
    l_hat: np.ndarray
    p_hat_raw: np.ndarray
    p_hat: np.ndarray
    beta_loss: float
    beta_dyn: float
    v_bar_inv: np.ndarray
    tau: int


def estimate_pair(stats, shape, lam, delta):
    """Ridge estimates, projected dynamics and both radii for one pair
    """
    p_raw = ridge_dynamics_estimate(stats)
    return PairEstimate(l_hat=ridge_loss_estimate(stats),
                        p_hat_raw=p_raw,
                        p_hat=project_to_stochastic(p_raw, stats.v_bar),
                        beta_loss=loss_radius(stats.tau, shape, lam, delta),
                        beta_dyn=dynamics_radius(stats.tau, shape, lam, delta),
                        v_bar_inv=stats.v_bar_inv.copy(),
                        tau=stats.tau)


class Estimates():
    """Snapshot of every pair's estimates at an interval boundary.

    Arrays are indexed ``[s, a, ...]``; ``pair(s, a)`` returns the
    :class:`PairEstimate` view.
    """

    def __init__(self, pairs):
        n_states = len(pairs)
        n_actions = len(pairs[0])
        self.n_states = n_states
        self.n_actions = n_actions
        self._pairs = [list(row) for row in pairs]
        flat = [p for row in pairs for p in row]
        self.d = flat[0].l_hat.shape[0]

        def stack(name):
            arr = np.array([getattr(p, name) for p in flat], dtype=float)
            arr = arr.reshape((n_states, n_actions) + arr.shape[1:])
            arr.flags.writeable = False
            return arr

        self.l_hat = stack('l_hat')
        self.p_hat_raw = stack('p_hat_raw')
        self.p_hat = stack('p_hat')
        self.beta_loss = stack('beta_loss')
        self.beta_dyn = stack('beta_dyn')
        self.v_bar_inv = stack('v_bar_inv')
        self.tau = np.array([p.tau for p in flat], dtype=int).reshape(n_states, n_actions)

    def pair(self, s, a):
        return self._pairs[s][a]

    def context_norms(self, c):
        """``|c|_{V^-1}`` for every pair, shape (n_states, n_actions)
        """
        q = np.einsum('i,saij,j->sa', c, self.v_bar_inv, c)
        return np.sqrt(np.maximum(q, 0.0))

    def to_dict(self):
        pairs = []
        for s in range(self.n_states):
            for a in range(self.n_actions):
                p = self.pair(s, a)
                pairs.append({'s': s, 'a': a, 'tau': p.tau, 'l_hat': p.l_hat,
                              'p_hat_raw': p.p_hat_raw, 'p_hat': p.p_hat,
                              'beta_loss': p.beta_loss, 'beta_dyn': p.beta_dyn})
        return {'format_version': FORMAT_VERSION, 'n_states': self.n_states,
                'n_actions': self.n_actions, 'd': self.d, 'pairs': pairs}

    def to_json(self):
        return canonical_json(self.to_dict())

    @classmethod
    def from_json(cls, text):
        """Rebuild a snapshot; the design-matrix inverses are not part of the
        format and come back as NaN
        """
        data = json.loads(text)
        if data.get('format_version') != FORMAT_VERSION:
            raise ArtifactError('unsupported estimates format_version {!r}'.format(data.get('format_version')))
        d = data['d']
        grid = [[None] * data['n_actions'] for _ in range(data['n_states'])]
        for item in data['pairs']:
            grid[item['s']][item['a']] = PairEstimate(
                l_hat=np.array(item['l_hat'], dtype=float),
                p_hat_raw=np.array(item['p_hat_raw'], dtype=float),
                p_hat=np.array(item['p_hat'], dtype=float),
                beta_loss=float(item['beta_loss']),
                beta_dyn=float(item['beta_dyn']),
                v_bar_inv=np.full((d, d), np.nan),
                tau=int(item['tau']))
        return cls(grid)
