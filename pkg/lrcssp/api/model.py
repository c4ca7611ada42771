"""Linear contextual SSP ground truth: contexts, embeddings, induced SSPs and generators.
"""
import json
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from lrcssp.api.ssp import SspInstance
from lrcssp.error import StructuralError, ConfigError, ProtocolError, ArtifactError
from lrcssp.util.serialize import FORMAT_VERSION, canonical_json, fingerprint

logger = logging.getLogger(__name__)

GOAL = -1
SIMPLEX_TOL = 1e-9
LOSS_NOISES = ('bernoulli', 'truncated_uniform')
CONTEXT_KINDS = ('uniform', 'cyclic_vertices', 'fixed', 'adaptive')


def as_context(c, d=None, error=StructuralError):
    """Validate a point of the probability simplex and return it as a read-only array

    Args:
        c (array-like): candidate context
        d (int): expected dimension, optional
        error (type): exception class raised on failure

    Returns:
        numpy.ndarray: the context
    """
    try:
        c = np.array(c, dtype=float)
    except (TypeError, ValueError) as e:
        raise error('context is not numeric: {}'.format(e))
    if c.ndim != 1 or (d is not None and c.shape[0] != d):
        raise error('context must be a vector of length {}, got shape {}'.format(d, c.shape))
    if not np.all(np.isfinite(c)) or np.any(c < 0.0):
        raise error('context entries must be finite and non-negative')
    if abs(c.sum() - 1.0) > SIMPLEX_TOL:
        raise error('context must sum to 1, sums to {!r}'.format(float(c.sum())))
    c.flags.writeable = False
    return c


def vertex(j, d):
    e = np.zeros(d)
    e[j] = 1.0
    e.flags.writeable = False
    return e


@dataclass(frozen=True, eq=False)
class LinearCsspModel:
    """Ground-truth embeddings of a linear contextual SSP.

    Args:
        loss_embed (numpy.ndarray): shape (n_states, n_actions, d), ``L*(s, a)``
        trans_embed (numpy.ndarray): shape (n_states, n_actions, n_states, d),
            column ``j`` of ``trans_embed[s, a]`` is the component
            sub-distribution ``p*_j(. | s, a)``
        s_init (int): initial state used for every context
        loss_noise (str): ``bernoulli`` or ``truncated_uniform``
        noise_width (float): width of the uniform noise
        s_init_by_vertex (tuple): optional table, initial state per simplex
            vertex; a context starts at the entry of its largest coordinate
    """
    loss_embed: np.ndarray
    trans_embed: np.ndarray
    s_init: int = 0
    loss_noise: str = 'bernoulli'
    noise_width: float = 0.0
    s_init_by_vertex: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        loss = np.array(self.loss_embed, dtype=float)
        trans = np.array(self.trans_embed, dtype=float)
        if loss.ndim != 3:
            raise StructuralError('loss_embed must have shape (states, actions, d), got {}'.format(loss.shape))
        n_states, n_actions, d = loss.shape
        if trans.shape != (n_states, n_actions, n_states, d):
            raise StructuralError('trans_embed has shape {}, expected {}'.format(
                trans.shape, (n_states, n_actions, n_states, d)))
        if self.loss_noise not in LOSS_NOISES:
            raise StructuralError('unknown loss_noise {!r}'.format(self.loss_noise))
        if self.s_init_by_vertex is not None:
            table = tuple(int(s) for s in self.s_init_by_vertex)
            if len(table) != d:
                raise StructuralError('s_init_by_vertex needs one state per context coordinate')
            object.__setattr__(self, 's_init_by_vertex', table)
        loss.flags.writeable = False
        trans.flags.writeable = False
        object.__setattr__(self, 'loss_embed', loss)
        object.__setattr__(self, 'trans_embed', trans)
        object.__setattr__(self, 's_init', int(self.s_init))

    @property
    def n_states(self):
        return self.loss_embed.shape[0]

    @property
    def n_actions(self):
        return self.loss_embed.shape[1]

    @property
    def d(self):
        return self.loss_embed.shape[2]

    @property
    def shape(self):
        return (self.d, self.n_states, self.n_actions)

    def initial_state(self, c):
        if self.s_init_by_vertex is None:
            return self.s_init
        return self.s_init_by_vertex[int(np.argmax(c))]

    def to_dict(self):
        return {
            'format_version': FORMAT_VERSION,
            'd': self.d,
            'n_states': self.n_states,
            'n_actions': self.n_actions,
            's_init': self.s_init,
            'loss_noise': self.loss_noise,
            'noise_width': self.noise_width,
            's_init_by_vertex': list(self.s_init_by_vertex) if self.s_init_by_vertex is not None else None,
            'loss_embed': self.loss_embed,
            'trans_embed': self.trans_embed,
        }

    @classmethod
    def from_dict(cls, data):
        if data.get('format_version') != FORMAT_VERSION:
            raise ArtifactError('unsupported model format_version {!r}'.format(data.get('format_version')))
        try:
            return cls(loss_embed=np.array(data['loss_embed'], dtype=float),
                       trans_embed=np.array(data['trans_embed'], dtype=float),
                       s_init=data['s_init'],
                       loss_noise=data['loss_noise'],
                       noise_width=data['noise_width'],
                       s_init_by_vertex=data['s_init_by_vertex'])
        except KeyError as e:
            raise ArtifactError('model file is missing field {}'.format(e))

    def serialize(self):
        return canonical_json(self.to_dict())

    @property
    def fingerprint(self):
        return fingerprint(self.serialize())


def save_model(model, path):
    """Write a model file and return its fingerprint
    """
    text = model.serialize()
    with open(path, 'w', newline='\n') as f:
        f.write(text)
        f.write('\n')
    return fingerprint(text)


def load_model(path):
    try:
        with open(path) as f:
            data = json.load(f)
    except FileNotFoundError:
        raise ArtifactError('model file not found: {}'.format(path))
    except (OSError, ValueError) as e:
        raise ArtifactError('cannot read model file {}: {}'.format(path, e))
    return LinearCsspModel.from_dict(data)


@dataclass
class GeneratorSpec:
    """Parameters of the random instance generator.

    ``gamma_goal`` is the minimum goal mass of every component distribution
    (of the escape action only when ``trap`` is set), which makes every
    policy (or at least the escape policy) proper for every context.
    """
    d: int = 2
    n_states: int = 5
    n_actions: int = 3
    gamma_goal: float = 0.1
    l_min_target: float = 0.1
    seed: int = 0
    loss_noise: str = 'bernoulli'
    noise_width: float = 0.2
    trap: bool = False
    zero_loss_pairs: int = 0
    s_init: int = 0

    def validate(self):
        if self.d < 1 or self.n_states < 1 or self.n_actions < 1:
            raise ConfigError('d, n_states and n_actions must be at least 1')
        if not 0.0 < self.gamma_goal <= 1.0:
            raise ConfigError('gamma_goal must lie in (0, 1], got {}'.format(self.gamma_goal))
        if not 0.0 <= self.l_min_target < 1.0:
            raise ConfigError('l_min_target must lie in [0, 1), got {}'.format(self.l_min_target))
        if self.loss_noise not in LOSS_NOISES:
            raise ConfigError('loss_noise must be one of {}'.format(LOSS_NOISES))
        if self.noise_width < 0:
            raise ConfigError('noise_width must be non-negative')
        if not 0 <= self.zero_loss_pairs <= self.n_states * self.n_actions:
            raise ConfigError('zero_loss_pairs must lie in [0, n_states * n_actions]')
        if self.zero_loss_pairs and self.l_min_target > 0:
            raise ConfigError('zero_loss_pairs requires l_min_target = 0')
        if self.trap and self.n_actions < 2:
            raise ConfigError('the trap variant needs at least two actions')
        if not 0 <= self.s_init < self.n_states:
            raise ConfigError('s_init must be a state index')
        if not 0 <= self.seed < 2**64:
            raise ConfigError('seed must be a 64-bit unsigned integer')


def generate_instance(spec):
    """Draw a random model satisfying the generator guarantees.

    Args:
        spec (GeneratorSpec): generator parameters

    Returns:
        LinearCsspModel: deterministic given ``spec.seed``

    Raises:
        lrcssp.ConfigError: if the spec is infeasible
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    S, A, d = spec.n_states, spec.n_actions, spec.d
    gamma = spec.gamma_goal

    loss = spec.l_min_target + (1.0 - spec.l_min_target) * rng.random((S, A, d))
    if spec.zero_loss_pairs:
        zero = rng.choice(S * A, size=spec.zero_loss_pairs, replace=False)
        loss.reshape(S * A, d)[zero] = 0.0

    trans = np.zeros((S, A, S, d))
    for s in range(S):
        for a in range(A):
            for j in range(d):
                if spec.trap and a > 0:
                    # no goal mass: only the escape action leaves the state space
                    trans[s, a, :, j] = rng.dirichlet(np.ones(S))
                else:
                    w = rng.dirichlet(np.ones(S + 1))
                    trans[s, a, :, j] = (1.0 - gamma) * w[:S]

    model = LinearCsspModel(loss_embed=loss, trans_embed=trans, s_init=spec.s_init,
                            loss_noise=spec.loss_noise, noise_width=spec.noise_width)
    logger.info('generated model d=%d |S|=%d |A|=%d seed=%d fingerprint=%s',
                d, S, A, spec.seed, model.fingerprint[:12])
    return model


@dataclass(frozen=True)
class Violation:
    kind: str
    location: Tuple[int, ...]
    magnitude: float


def validate_model(model):
    """List every invariant violation of a model, an empty list means valid.

    Each component column is reported at most once per kind, with the worst
    magnitude: ``negative_entry`` (most negative entry), ``column_sum``
    (excess over 1), ``loss_range`` (distance outside [0, 1]) and
    ``initial_state``.
    """
    violations = []
    S, A, d = model.n_states, model.n_actions, model.d
    for s in range(S):
        for a in range(A):
            for j in range(d):
                col = model.trans_embed[s, a, :, j]
                if col.min() < 0.0:
                    violations.append(Violation('negative_entry', (s, a, j), float(-col.min())))
                excess = col.sum() - 1.0
                if excess > SIMPLEX_TOL:
                    violations.append(Violation('column_sum', (s, a, j), float(excess)))
                ell = model.loss_embed[s, a, j]
                if ell < 0.0 or ell > 1.0:
                    violations.append(Violation('loss_range', (s, a, j), float(max(-ell, ell - 1.0))))
    starts = [model.s_init] + list(model.s_init_by_vertex or ())
    for s in starts:
        if not 0 <= s < S:
            violations.append(Violation('initial_state', (s,), float(s)))
    return violations


def induce_ssp(model, c):
    """The SSP selected by context ``c``: ``loss = <c, L*>``, ``trans = P* c``
    """
    c = as_context(c, model.d)
    loss = np.clip(model.loss_embed @ c, 0.0, 1.0)
    trans = model.trans_embed @ c
    return SspInstance(loss=loss, trans=trans)


def ssp_from_component(model, j):
    return induce_ssp(model, vertex(j, model.d))


def sample_step(model, c, s, a, rng):
    """Sample one environment transition.

    Returns:
        tuple: ``(next_state, loss)`` where ``next_state`` is ``GOAL`` (-1) on
        goal arrival
    """
    p = np.maximum(model.trans_embed[s, a] @ c, 0.0)
    goal = max(0.0, 1.0 - p.sum())
    probs = np.append(p, goal)
    probs /= probs.sum()
    idx = int(rng.choice(probs.shape[0], p=probs))
    next_state = GOAL if idx == model.n_states else idx

    mean = float(np.clip(model.loss_embed[s, a] @ c, 0.0, 1.0))
    if model.loss_noise == 'bernoulli':
        loss = 1.0 if rng.random() < mean else 0.0
    else:
        h = min(model.noise_width / 2.0, mean, 1.0 - mean)
        loss = float(np.clip(mean + rng.uniform(-h, h), 0.0, 1.0))
    return next_state, loss


@dataclass
class ContextSequence:
    """Contexts for ``K`` episodes.

    Pre-drawn kinds hold the list; the ``adaptive`` kind calls
    ``callback(history)`` with the episode logs seen so far.
    """
    kind: str
    K: int
    d: int
    contexts: List[np.ndarray] = field(default_factory=list)
    callback: Optional[Callable] = None

    def __len__(self):
        return self.K

    def get(self, k, history=()):
        if self.kind != 'adaptive':
            return self.contexts[k]
        c = self.callback(list(history))
        return as_context(c, self.d, error=ProtocolError)

    def blind(self):
        """The same sequence with every context replaced by the simplex barycentre
        """
        uniform = as_context(np.full(self.d, 1.0 / self.d))
        return ContextSequence(kind='fixed', K=self.K, d=self.d, contexts=[uniform] * self.K)


def context_sequence(kind, K, d, rng=None, c0=None, callback=None):
    """Build a context sequence.

    Args:
        kind (str): ``uniform`` (Dirichlet(1)), ``cyclic_vertices``,
            ``fixed`` (needs ``c0``) or ``adaptive`` (needs ``callback``)
        K (int): number of episodes
        d (int): context dimension
        rng (numpy.random.Generator): used by ``uniform``

    Returns:
        ContextSequence: the sequence

    Example::

        >>> seq = context_sequence('cyclic_vertices', 3, 2)
        >>> [c.tolist() for c in seq.contexts]
        [[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]]
    """
    if K < 1:
        raise ConfigError('K must be at least 1')
    if kind == 'uniform':
        if rng is None:
            raise ConfigError('uniform contexts need a random generator')
        draws = rng.dirichlet(np.ones(d), size=K)
        # renormalize so the simplex check holds to machine precision
        contexts = [as_context(c / c.sum(), d) for c in draws]
    elif kind == 'cyclic_vertices':
        contexts = [vertex(k % d, d) for k in range(K)]
    elif kind == 'fixed':
        if c0 is None:
            raise ConfigError('fixed contexts need c0')
        c0 = as_context(c0, d, error=ConfigError)
        contexts = [c0] * K
    elif kind == 'adaptive':
        if callback is None:
            raise ConfigError('adaptive contexts need a callback')
        return ContextSequence(kind=kind, K=K, d=d, callback=callback)
    else:
        raise ConfigError('unknown context kind {!r}, expected one of {}'.format(kind, CONTEXT_KINDS))
    return ContextSequence(kind=kind, K=K, d=d, contexts=contexts)
