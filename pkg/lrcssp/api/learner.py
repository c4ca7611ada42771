"""Optimistic learner for linear contextual SSPs.

Episodes are split into intervals. An interval starts at the beginning of
every episode and whenever the visited pair fails the known test; the goal
closes it. At each interval start the estimates are refreshed, the
optimistic policy is recomputed by extended value iteration and, if the
optimistic value at the initial state exceeds the current bound ``B*``,
the bound is doubled and all statistics are dropped.
"""
import logging
from dataclasses import dataclass, field, asdict
from typing import List, Optional

import numpy as np

from lrcssp.api.ssp import SspInstance
from lrcssp.api.model import GOAL, as_context, sample_step
from lrcssp.api.estimation import (SaStatistics, Estimates, estimate_pair, record_visit, is_known,
                                   known_threshold, context_norm)
from lrcssp.error import ConfigError, LrcsspError

logger = logging.getLogger(__name__)

MAX_DOUBLINGS = 64


@dataclass
class LearnerConfig:
    """Learner parameters.

    ``l_min = 0`` switches on the loss perturbation ``max(loss, eps)`` with
    ``eps = epsilon_perturb`` or, when that is ``None``,
    ``|S| (d^2 |A| / K)^(1/3)``.
    """
    delta: float = 0.1
    lam: float = 1.0
    l_min: float = 0.1
    epsilon_perturb: Optional[float] = None
    b_star_init: float = 1.0
    evi_tol: float = 1e-6
    evi_max_iter: int = 10**5
    episode_step_cap: int = 10**6
    record_trace: bool = False

    def validate(self):
        if not 0.0 < self.delta < 1.0:
            raise ConfigError('delta must lie in (0, 1), got {}'.format(self.delta))
        if self.lam < 1.0:
            raise ConfigError('lam must be at least 1, got {}'.format(self.lam))
        if self.l_min < 0.0:
            raise ConfigError('l_min must be non-negative')
        if self.epsilon_perturb is not None and self.epsilon_perturb < 0.0:
            raise ConfigError('epsilon_perturb must be non-negative or null')
        if self.l_min == 0.0 and self.epsilon_perturb == 0.0:
            raise ConfigError('epsilon_perturb must be positive when l_min is 0')
        if self.b_star_init < 1.0:
            raise ConfigError('b_star_init must be at least 1')
        if self.evi_tol <= 0.0:
            raise ConfigError('evi_tol must be positive')
        if self.evi_max_iter < 1 or self.episode_step_cap < 1:
            raise ConfigError('evi_max_iter and episode_step_cap must be positive')


def perturbation_epsilon(shape, K):
    d, n_states, n_actions = shape
    return n_states * (d ** 2 * n_actions / K) ** (1.0 / 3.0)


def optimistic_loss(c, est):
    """Smallest loss ``<c, L>`` over the loss ellipsoid of one pair, clipped to [0, 1]

    Args:
        c (numpy.ndarray): context
        est (PairEstimate): the pair's estimates

    Returns:
        float: ``clip(<c, L_hat> - beta_loss |c|_{V^-1}, 0, 1)``
    """
    value = float(est.l_hat @ c) - est.beta_loss * context_norm(est.v_bar_inv, c)
    return min(max(value, 0.0), 1.0)


def optimistic_transitions(p_c, radius, v):
    """Minimize ``q . v`` over the L1 ball of ``radius`` around ``p_c``,
    within sub-distributions.

    Mass is removed from the highest-valued states first and handed to the
    goal, whose value is 0.

    Args:
        p_c (numpy.ndarray): shape (..., n_states), sub-distributions
        radius (numpy.ndarray): shape (...), L1 radii
        v (numpy.ndarray): shape (n_states,), non-negative values

    Returns:
        numpy.ndarray: same shape as ``p_c``
    """
    order = np.argsort(-v, kind='stable')
    p_sorted = p_c[..., order]
    before = np.cumsum(p_sorted, axis=-1) - p_sorted
    removed = np.clip(np.asarray(radius)[..., None] - before, 0.0, p_sorted)
    q = np.empty_like(p_c)
    q[..., order] = p_sorted - removed
    return q


@dataclass
class EviResult:
    policy: np.ndarray
    ssp: SspInstance
    values: np.ndarray
    residual: float
    iterations: int
    converged: bool


def evi_plan(est, c, b_cap, cfg):
    """Extended value iteration over the confidence sets for context ``c``.

    Every backup uses the optimistic loss and, for the transitions, the
    minimizer over the L1 ball ``|q - P_hat c|_1 <= beta_dyn |c|_{V^-1}``.
    Values start at zero and are truncated to ``[0, b_cap]``. Running out of
    iterations is not an error: the last iterate is returned with
    ``converged = False``.

    The greedy policy picks, among actions whose optimistic Q-value is
    within ``evi_tol`` of the minimum, the one with the smallest
    point-estimate Q-value ``<c, L_hat> + (P_hat c) . V``, then the lowest
    index.

    Args:
        est (Estimates): current estimates
        c (numpy.ndarray): context
        b_cap (float): value truncation
        cfg (LearnerConfig): uses ``evi_tol`` and ``evi_max_iter``

    Returns:
        EviResult: greedy policy, optimistic SSP, optimistic values and diagnostics
    """
    norms = est.context_norms(c)
    opt_loss = np.clip(est.l_hat @ c - est.beta_loss * norms, 0.0, 1.0)
    p_c = np.maximum(est.p_hat @ c, 0.0)
    radius = est.beta_dyn * norms

    v = np.zeros(est.n_states)
    residual = np.inf
    iterations = 0
    while iterations < cfg.evi_max_iter:
        iterations += 1
        q = optimistic_transitions(p_c, radius, v)
        w = np.clip((opt_loss + q @ v).min(axis=1), 0.0, b_cap)
        residual = float(np.max(np.abs(w - v)))
        v = w
        if residual <= cfg.evi_tol:
            break
    converged = residual <= cfg.evi_tol
    if not converged:
        logger.warning('EVI stopped after %d iterations with residual %.3g', iterations, residual)

    q = optimistic_transitions(p_c, radius, v)
    q_opt = opt_loss + q @ v
    # ties within evi_tol of the optimistic minimum go to the smallest point-estimate value
    q_point = np.clip(est.l_hat @ c, 0.0, 1.0) + p_c @ v
    tied = q_opt <= q_opt.min(axis=1, keepdims=True) + cfg.evi_tol
    policy = np.where(tied, q_point, np.inf).argmin(axis=1)
    ssp = SspInstance(loss=opt_loss, trans=q)
    return EviResult(policy=policy, ssp=ssp, values=v, residual=residual,
                     iterations=iterations, converged=converged)


@dataclass
class IntervalRecord:
    """One interval; ``pair`` is the (state, action) whose failed known test opened it
    """
    episode: int
    m: int
    trigger: str
    steps: int = 0
    interval_loss: float = 0.0
    evi_residual: float = 0.0
    v_tilde_init: float = 0.0
    v_tilde_start: float = 0.0
    b_star_cur: float = 1.0
    known_fraction: float = 0.0
    doublings: int = 0
    pair: Optional[list] = None
    extra: dict = field(default_factory=dict)

    def to_event(self):
        event = asdict(self)
        event.update(event.pop('extra'))
        return event


@dataclass
class EpisodeLog:
    episode: int
    context: np.ndarray
    s_init: int
    steps: int = 0
    total_loss: float = 0.0
    observed_loss: float = 0.0
    intervals_started: int = 0
    unknown_triggers: int = 0
    truncated: bool = False
    b_star_cur: float = 1.0
    intervals: List[IntervalRecord] = field(default_factory=list)
    unknown_pairs: list = field(default_factory=list)
    trace: list = field(default_factory=list)


@dataclass
class RunLog:
    episodes: List[EpisodeLog]
    config: dict
    model_fingerprint: str
    shape: tuple
    epsilon: Optional[float]
    l_min_used: float
    doublings: int

    @property
    def total_steps(self):
        return sum(e.steps for e in self.episodes)

    @property
    def total_intervals(self):
        return sum(e.intervals_started for e in self.episodes)

    @property
    def truncations(self):
        return sum(1 for e in self.episodes if e.truncated)

    def unknown_counts(self):
        counts = {}
        for e in self.episodes:
            for key in e.unknown_pairs:
                counts[key] = counts.get(key, 0) + 1
        return counts


class LearnerState():
    """Mutable state of one learner run; owned by a single thread.
    """

    def __init__(self, shape, cfg):
        self.shape = shape
        self.b_star_cur = float(cfg.b_star_init)
        self.m = 0
        self.h = 0
        self.generation = 0
        self.doublings = 0
        self.estimates = None
        self.policy = None
        self.values = None
        self.plan = None
        self.snapshot = None
        self._cache = {}
        self.reset_statistics(cfg)

    @property
    def n_states(self):
        return self.shape[1]

    @property
    def n_actions(self):
        return self.shape[2]

    def reset_statistics(self, cfg):
        d, n_states, n_actions = self.shape
        self.stats = [[SaStatistics(d, n_states, cfg.lam) for _ in range(n_actions)]
                      for _ in range(n_states)]
        self.generation += 1
        self._cache = {}

    def refresh_estimates(self, cfg):
        # a pair's estimates only change with its visit count or a reset
        grid = []
        for s in range(self.n_states):
            row = []
            for a in range(self.n_actions):
                st = self.stats[s][a]
                key = (s, a)
                cached = self._cache.get(key)
                if cached is None or cached[0] != (self.generation, st.tau):
                    cached = ((self.generation, st.tau), estimate_pair(st, self.shape, cfg.lam, cfg.delta))
                    self._cache[key] = cached
                row.append(cached[1])
            grid.append(row)
        self.estimates = Estimates(grid)
        return self.estimates


def start_interval(state, c, cfg, s_init, s_now=None):
    """Begin interval ``m + 1``: refresh estimates, plan optimistically and
    apply the doubling trick.

    Args:
        state (LearnerState): updated in place
        c (numpy.ndarray): context the learner plans for
        cfg (LearnerConfig): learner parameters
        s_init (int): initial state of the current episode
        s_now (int): state the interval starts in, defaults to ``s_init``

    Returns:
        LearnerState: ``state``
    """
    state.m += 1
    state.h = 0
    for _ in range(MAX_DOUBLINGS + 1):
        est = state.refresh_estimates(cfg)
        plan = evi_plan(est, c, 2.0 * state.b_star_cur, cfg)
        if plan.values[s_init] <= state.b_star_cur:
            break
        logger.info('optimistic value %.4g exceeds B* = %g at interval %d, doubling and resetting',
                    plan.values[s_init], state.b_star_cur, state.m)
        state.b_star_cur *= 2.0
        state.doublings += 1
        state.reset_statistics(cfg)
    else:
        raise LrcsspError('doubling trick did not settle after {} doublings'.format(MAX_DOUBLINGS))

    state.plan = plan
    state.policy = plan.policy
    state.values = plan.values
    state.snapshot = [[st.copy() for st in row] for row in state.stats]
    logger.debug('interval %d: V~(s_init)=%.4g residual=%.3g iterations=%d',
                 state.m, plan.values[s_init], plan.residual, plan.iterations)
    return state


def _known_fraction(state, c, l_min, cfg):
    est = state.estimates
    norms = est.context_norms(c)
    known = 0
    for s in range(state.n_states):
        for a in range(state.n_actions):
            thr = known_threshold(l_min, state.b_star_cur, state.m, cfg.delta, est.beta_dyn[s, a])
            known += norms[s, a] < thr
    return float(known) / (state.n_states * state.n_actions)


def run_episode(state, c, env, cfg, episode=0, trigger='start', context_override=None,
                epsilon=None, l_min=None, interval_hook=None):
    """Play one episode from the initial state until the goal or the step cap.

    Args:
        state (LearnerState): learner state, updated in place
        c (numpy.ndarray): true context of the episode
        env (tuple): ``(model, rng)``, the environment
        cfg (LearnerConfig): learner parameters
        episode (int): episode index, for the logs
        trigger (str): trigger recorded for the episode's first interval
        context_override (numpy.ndarray): context shown to the learner,
            defaults to ``c``
        epsilon (float): loss perturbation floor, ``None`` for no perturbation
        l_min (float): loss floor used by the known test, defaults to ``cfg.l_min``
        interval_hook (callable): read-only diagnostic called as
            ``hook(state, c, s_init)`` with the true context at each interval start; its dict
            result is attached to the interval record

    Returns:
        tuple: ``(EpisodeLog, state)``
    """
    model, rng = env
    c_hat = c if context_override is None else context_override
    l_min = cfg.l_min if l_min is None else l_min
    s_init = model.initial_state(c)
    log = EpisodeLog(episode=episode, context=c, s_init=s_init)

    def open_interval(trig, s_now, pair=None):
        before = state.doublings
        start_interval(state, c_hat, cfg, s_init, s_now)
        record = IntervalRecord(episode=episode, m=state.m, trigger=trig,
                                evi_residual=state.plan.residual,
                                v_tilde_init=float(state.values[s_init]),
                                v_tilde_start=float(state.values[s_now]),
                                b_star_cur=state.b_star_cur,
                                known_fraction=_known_fraction(state, c_hat, l_min, cfg),
                                doublings=state.doublings - before, pair=pair)
        if interval_hook is not None:
            record.extra = dict(interval_hook(state, c, s_init))
        log.intervals.append(record)
        log.intervals_started += 1
        return record

    s = s_init
    record = open_interval(trigger, s)
    while True:
        if log.steps >= cfg.episode_step_cap:
            log.truncated = True
            logger.warning('episode %d truncated after %d steps', episode, log.steps)
            break
        a = int(state.policy[s])
        next_state, loss = sample_step(model, c, s, a, rng)
        observed = loss if epsilon is None else max(loss, epsilon)
        record_visit(state.stats[s][a], c_hat, next_state, observed)
        log.steps += 1
        state.h += 1
        log.total_loss += loss
        log.observed_loss += observed
        record.steps += 1
        record.interval_loss += loss

        known = None
        if next_state != GOAL:
            known = is_known(state.snapshot[s][a], c_hat, l_min, state.b_star_cur, state.m,
                             cfg.delta, state.shape, cfg.lam)
        if cfg.record_trace:
            log.trace.append({'m': state.m, 's': s, 'a': a, 'next': next_state,
                              'loss': observed, 'known': known})
        if next_state == GOAL:
            break
        s_prev, s = s, next_state
        if not known:
            log.unknown_triggers += 1
            log.unknown_pairs.append((s_prev, a))
            record = open_interval('unknown', s, [s_prev, a])

    log.b_star_cur = state.b_star_cur
    return log, state


def run(cfg, model, contexts, rng, context_blind=False, interval_hook=None):
    """Run the learner over a context sequence.

    Args:
        cfg (LearnerConfig): learner parameters
        model (LinearCsspModel): the environment
        contexts (ContextSequence): one context per episode
        rng (numpy.random.Generator): environment randomness
        context_blind (bool): show the learner the simplex barycentre instead
            of the true context (ablation)
        interval_hook (callable): see :func:`run_episode`

    Returns:
        RunLog: per-episode logs and totals
    """
    cfg.validate()
    K = len(contexts)
    shape = model.shape
    epsilon = None
    l_min = cfg.l_min
    if cfg.l_min == 0.0:
        epsilon = cfg.epsilon_perturb if cfg.epsilon_perturb is not None else perturbation_epsilon(shape, K)
        logger.info('no loss floor given, perturbing losses with eps=%.4g', epsilon)
    floor = None if epsilon is None else min(epsilon, 1.0)
    if floor is not None:
        l_min = floor

    blind = as_context(np.full(model.d, 1.0 / model.d)) if context_blind else None
    state = LearnerState(shape, cfg)
    episodes = []
    trigger = 'start'
    for k in range(K):
        c = contexts.get(k, episodes)
        log, state = run_episode(state, c, (model, rng), cfg, episode=k, trigger=trigger,
                                 context_override=blind, epsilon=floor, l_min=l_min,
                                 interval_hook=interval_hook)
        episodes.append(log)
        trigger = 'start' if log.truncated else 'goal'

    run_log = RunLog(episodes=episodes, config=asdict(cfg), model_fingerprint=model.fingerprint, shape=shape,
                     epsilon=epsilon, l_min_used=l_min, doublings=state.doublings)
    logger.info('run finished: K=%d T=%d M=%d truncations=%d doublings=%d',
                K, run_log.total_steps, run_log.total_intervals, run_log.truncations, state.doublings)
    return run_log
