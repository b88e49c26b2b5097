"""Next-best-view planning: tabular Q-learning and the baseline policies.

The planner state is the landmark code of the live view plus a clipped
count of iterations since the last detection.  Actions are commanded
forward steps.  Learned policies sample actions with probability
proportional to ``exp(Q / T)`` during training and act greedily in
evaluation.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, EmptySubsetError, FormatError
from .loop import BeliefState, Episode, LoopConfig, TableMatcher, shift_belief, should_terminate, update_belief
from .replay import LookupTable
from .rng import make_rng
from .world import Pose, move, render_observation

DEFAULT_ACTIONS = (1.0, 2.0, 4.0, 8.0, 16.0)
HISTORY_BINS = 8


class PolicyKind(str, enum.Enum):
    LEARNED = "Learned"
    HEURISTICS = "Heuristics"
    CONSTANT_WITH_VIEW = "ConstantWithView"
    CONSTANT_WITHOUT_VIEW = "ConstantWithoutView"
    CONSTANT_ALL = "ConstantAll"
    ORACLE = "Oracle"

    @classmethod
    def parse(cls, name):
        for kind in cls:
            if kind.value.lower() == str(name).lower():
                return kind
        raise ConfigError(f"unknown policy {name!r}; expected one of {[k.value for k in cls]}", "policies")


ALL_POLICIES = tuple(PolicyKind)


def validate_actions(actions):
    actions = tuple(float(a) for a in actions)
    if not actions:
        raise ConfigError("action set is empty", "planner.actions")
    if any(a <= 0 for a in actions) or any(b <= a for a, b in zip(actions, actions[1:])):
        raise ConfigError("steps must be positive and strictly increasing", "planner.actions")
    return actions


@dataclass(frozen=True)
class PlannerParams:
    actions: tuple = DEFAULT_ACTIONS
    alpha: float = 0.1
    gamma: float = 0.9
    temperature_start: float = 1.0
    temperature_end: float = 0.2
    history_bins: int = HISTORY_BINS
    detection_reward: float = 1.0
    travel_penalty: float = 0.1
    terminal_reward: float = 5.0
    replay_batch: int = 0
    replay_capacity: int = 50_000
    # "visits": step size max(alpha, 1/n(s, a)); "constant": alpha throughout
    alpha_schedule: str = "visits"

    def validate(self):
        object.__setattr__(self, "actions", validate_actions(self.actions))
        if not 0 <= self.alpha <= 1:
            raise ConfigError(f"must lie in [0, 1], got {self.alpha}", "alpha")
        if not 0 <= self.gamma < 1:
            raise ConfigError(f"must lie in [0, 1), got {self.gamma}", "gamma")
        for name in ("temperature_start", "temperature_end"):
            if not getattr(self, name) > 0:
                raise ConfigError("must be > 0", name)
        if self.history_bins < 1:
            raise ConfigError("must be >= 1", "history_bins")
        if self.alpha_schedule not in ("visits", "constant"):
            raise ConfigError("must be 'visits' or 'constant'", "alpha_schedule")
        if self.replay_batch < 0 or self.replay_capacity < 1:
            raise ConfigError("replay sizes must be non-negative", "replay_batch")
        return self


@dataclass(eq=False)
class QFunction:
    actions: tuple
    k_codebook: int
    history_bins: int = HISTORY_BINS
    alpha: float = 0.1
    gamma: float = 0.9
    temperature: float = 1.0
    table: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.actions = tuple(float(a) for a in self.actions)
        if self.table is None:
            self.table = np.zeros((self.n_states, len(self.actions)))
        self.table = np.asarray(self.table, dtype=float)
        if self.table.shape != (self.n_states, len(self.actions)):
            raise FormatError(f"Q table shape {self.table.shape} != ({self.n_states}, {len(self.actions)})")

    @property
    def n_states(self):
        return self.k_codebook * self.history_bins

    def state_index(self, state):
        """Row of a ``(code, steps_since_detection)`` pair, or pass an int through."""
        if isinstance(state, (int, np.integer)):
            return int(state)
        code, counter = state
        return int(code) * self.history_bins + min(int(counter), self.history_bins - 1)

    def values(self, state):
        return self.table[self.state_index(state)]

    def greedy(self, state):
        return int(np.argmax(self.values(state)))

    def to_dict(self, constants=None):
        d = {
            "actions": list(self.actions),
            "k_codebook": self.k_codebook,
            "history_bins": self.history_bins,
            "alpha": self.alpha,
            "gamma": self.gamma,
            "temperature": self.temperature,
            "table": [float(v) for v in self.table.reshape(-1)],
        }
        if constants is not None:
            d.update(C_short=constants.C_short, C_long=constants.C_long, C_all=constants.C_all)
        return d

    def save(self, path, constants=None):
        with open(path, "w") as fh:
            json.dump(self.to_dict(constants), fh)
            fh.write("\n")

    @classmethod
    def from_dict(cls, d):
        try:
            q = cls(
                actions=tuple(d["actions"]),
                k_codebook=int(d["k_codebook"]),
                history_bins=int(d["history_bins"]),
                alpha=float(d["alpha"]),
                gamma=float(d["gamma"]),
                temperature=float(d["temperature"]),
                table=np.array(d["table"], dtype=float).reshape(int(d["k_codebook"]) * int(d["history_bins"]), -1),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed Q file: {exc}") from None
        constants = None
        if all(k in d for k in ("C_short", "C_long", "C_all")):
            constants = Constants(float(d["C_short"]), float(d["C_long"]), float(d["C_all"]))
        return q, constants

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}: {exc}") from None
        return cls.from_dict(data)


@dataclass(frozen=True)
class Transition:
    state: object
    action: int
    reward: float
    next_state: object
    terminal: bool


def action_probabilities(values, temperature=1.0):
    """Boltzmann probabilities, shifted by the max for stability."""
    v = np.asarray(values, dtype=float)
    z = (v - v.max()) / temperature
    p = np.exp(z)
    return p / p.sum()


def select_action(Q: QFunction, state, rng, temperature=None) -> int:
    p = action_probabilities(Q.values(state), Q.temperature if temperature is None else temperature)
    u = rng.random()
    idx = int(np.searchsorted(np.cumsum(p), u, side="right"))
    return min(idx, len(p) - 1)


def td_update(Q: QFunction, t: Transition, alpha=None) -> QFunction:
    """One-step Q-learning backup, in place.  ``alpha`` overrides ``Q.alpha``."""
    s = Q.state_index(t.state)
    target = t.reward
    if not t.terminal:
        target += Q.gamma * Q.values(t.next_state).max()
    Q.table[s, t.action] += (Q.alpha if alpha is None else alpha) * (target - Q.table[s, t.action])
    return Q


@dataclass(frozen=True)
class RewardWeights:
    detection: float = 1.0
    travel: float = 0.1
    terminal: float = 5.0


def compute_reward(outcome, max_step, weights=RewardWeights()) -> float:
    r = -weights.travel * (outcome.commanded_step / max_step)
    if outcome.true_positive:
        r += weights.detection
    if outcome.terminated:
        r += weights.terminal if outcome.final_rank == 1 else -weights.terminal
    return r


def fit_tabular_mdp(next_state, reward, terminal, gamma, alpha=0.5, n_updates=100_000):
    """Q-learning on a known deterministic MDP by round-robin sweeps.

    ``next_state`` and ``reward`` are ``(n_states, n_actions)`` arrays;
    ``terminal[s, a]`` marks transitions that end the episode.
    """
    next_state = np.asarray(next_state)
    n_s, n_a = next_state.shape
    Q = QFunction(actions=tuple(range(1, n_a + 1)), k_codebook=n_s, history_bins=1, alpha=alpha, gamma=gamma)
    for i in range(n_updates):
        s, a = divmod(i % (n_s * n_a), n_a)
        td_update(Q, Transition(s, a, float(reward[s][a]), int(next_state[s][a]), bool(terminal[s][a])))
    return Q


def train(world, domain, detector, table_or_matcher, episodes, params: PlannerParams, loop_config: LoopConfig,
          seed, k_codebook=None, on_episode=None):
    """Q-learning over full episodes on the training domain.

    Every live transition is applied once and stored; after each step
    ``replay_batch`` stored transitions drawn uniformly at random are
    applied again.  Exploration uses the softmax rule with the temperature
    annealed linearly from ``temperature_start`` to ``temperature_end``.

    Returns ``(Q, returns)`` with the undiscounted return of every episode.
    """
    params.validate()
    matcher = TableMatcher(table_or_matcher) if isinstance(table_or_matcher, LookupTable) else table_or_matcher
    k = detector.codebook.size if k_codebook is None else k_codebook
    Q = QFunction(params.actions, k, params.history_bins, params.alpha, params.gamma, params.temperature_end)
    weights = RewardWeights(params.detection_reward, params.travel_penalty, params.terminal_reward)
    max_step = max(params.actions)
    lc = LoopConfig(**{**loop_config.__dict__, "history_bins": params.history_bins})
    visits = np.zeros_like(Q.table)

    def backup(t):
        if params.alpha_schedule == "visits":
            visits[t.state, t.action] += 1
            td_update(Q, t, max(params.alpha, 1.0 / visits[t.state, t.action]))
        else:
            td_update(Q, t)

    buffer = ReplayBuffer(params.replay_capacity)
    replay_rng = make_rng(seed, "replay")
    returns = []
    for e in range(episodes):
        frac = e / (episodes - 1) if episodes > 1 else 1.0
        temp = params.temperature_start + (params.temperature_end - params.temperature_start) * frac
        rng = make_rng(seed, "train", e)
        start = Pose(float(rng.uniform(0.0, world.config.route_length)))
        ep = Episode(world, domain, detector, matcher, lc, start, make_rng(seed, "train-motion", e))
        total = 0.0
        while not ep.done:
            s = ep.state
            a = select_action(Q, s, rng, temp)
            out = ep.step(params.actions[a])
            r = compute_reward(out, max_step, weights)
            t = Transition(Q.state_index(s), a, r, Q.state_index(ep.state), out.terminated)
            backup(t)
            buffer.add(t)
            for past in buffer.sample(params.replay_batch, replay_rng):
                backup(past)
            total += r
        returns.append(total)
        if on_episode is not None:
            on_episode(e, total)
    return Q, returns


class ReplayBuffer:
    """Fixed-capacity ring of transitions with uniform sampling."""

    def __init__(self, capacity):
        self.capacity = capacity
        self.items = []
        self.next = 0

    def __len__(self):
        return len(self.items)

    def add(self, t):
        if len(self.items) < self.capacity:
            self.items.append(t)
        else:
            self.items[self.next] = t
        self.next = (self.next + 1) % self.capacity

    def sample(self, n, rng):
        if n <= 0 or not self.items:
            return []
        return [self.items[i] for i in rng.integers(0, len(self.items), size=n)]


@dataclass(frozen=True)
class Constants:
    C_short: float
    C_long: float
    C_all: float


def _landing_rate(world, domain, detector, starts, step, trials, rng, noise):
    hits = 0
    for pos in starts:
        for _ in range(trials):
            land = move(world, Pose(float(pos)), step, rng, noise=noise)
            hits += detector.detect(render_observation(domain, land))
    return hits / (len(starts) * trials)


def learn_constants(world, domain, detector, candidate_steps=DEFAULT_ACTIONS, trials=20, seed=0, noise=True):
    """Per subset, the candidate step most likely to land on a detected landmark view.

    Subsets are the training viewpoints with a detected view (``C_short``),
    without one (``C_long``), and all of them (``C_all``).  Ties go to the
    smaller step.
    """
    candidates = sorted(float(c) for c in candidate_steps)
    with_view, without_view = [], []
    for pos in world.viewpoints:
        (with_view if detector.detect(render_observation(domain, Pose(float(pos)))) else without_view).append(pos)
    if not with_view:
        raise EmptySubsetError("with-view")
    if not without_view:
        raise EmptySubsetError("without-view")
    trials = trials if noise else 1

    def best(subset, tag):
        rates = [
            _landing_rate(world, domain, detector, subset, c, trials, make_rng(seed, "constants", tag, i), noise)
            for i, c in enumerate(candidates)
        ]
        return candidates[int(np.argmax(rates))]

    return Constants(best(with_view, "short"), best(without_view, "long"), best(list(world.viewpoints), "all"))


class LearnedPolicy:
    def __init__(self, Q: QFunction, greedy=True, temperature=None):
        self.Q = Q
        self.greedy = greedy
        self.temperature = temperature

    def choose(self, state, rng):
        if self.greedy:
            return self.Q.greedy(state)
        return select_action(self.Q, state, rng, self.temperature)

    def __call__(self, ep, rng):
        return self.Q.actions[self.choose(ep.state, rng)]


class HeuristicsPolicy:
    def __init__(self, constants: Constants):
        self.constants = constants

    def __call__(self, ep, rng):
        return self.constants.C_short if ep.detected else self.constants.C_long


class ConstantPolicy:
    def __init__(self, step):
        self.step = step

    def __call__(self, ep, rng):
        return self.step


class OraclePolicy:
    """Ground-truth lookahead over the action set.

    The oracle knows the true pose.  For every candidate step it
    enumerates the viewpoints the noisy landing can reach, weighted by
    the exact odds of the uniform odometry noise, and replays what the
    loop would do there: no detection carries the odometry forward; a
    detection triggers the belief update the matching stage would make.
    A landing that terminates the episode is worth +2 on the true
    viewpoint and -1 elsewhere; otherwise it is worth the best expected
    worth of the next step, down to ``depth`` steps, and finally the
    posterior mass on the true viewpoint.  The step with the highest
    expected worth wins (ties: smaller step).
    """

    NOISE = 1.0
    TERMINAL_HIT = 2.0
    TERMINAL_MISS = -1.0

    def __init__(self, actions=DEFAULT_ACTIONS, depth=2):
        self.actions = tuple(sorted(float(a) for a in actions))
        self.depth = depth
        self._cache = {}
        self._cache_key = None

    def _landings(self, world, position):
        """``[(viewpoint, probability)]`` for a landing uniform on ``position +- NOISE``."""
        s = world.config.viewpoint_spacing
        lo, hi = position - self.NOISE, position + self.NOISE
        out = []
        for k in range(math.floor(lo / s - 0.5), math.ceil(hi / s + 0.5) + 1):
            overlap = min(hi, (k + 0.5) * s) - max(lo, (k - 0.5) * s)
            if overlap > 0:
                if not world.config.loop:
                    k = min(max(k, 0), world.n_viewpoints - 1)
                out.append((k % world.n_viewpoints, overlap / (hi - lo)))
        return out

    def _view(self, ep, viewpoint):
        """Cached ``(detected, retrieval)`` of one viewpoint in the episode's domain."""
        key = (id(ep.domain), id(ep.detector), id(ep.matcher))
        if key != self._cache_key:
            self._cache, self._cache_key = {}, key
        if viewpoint not in self._cache:
            obs = render_observation(ep.domain, Pose(float(ep.world.viewpoints[viewpoint])))
            detected = ep.detector.detect(obs)
            self._cache[viewpoint] = (detected, ep.matcher.match(obs) if detected else None)
        return self._cache[viewpoint]

    def _value(self, ep, scores, pending_step, pending_moves, position, depth):
        world, c = ep.world, ep.config
        best = -math.inf
        for a in self.actions:
            centre = position + a
            if world.config.loop:
                centre %= world.config.route_length
            else:
                centre = min(centre, world.config.route_length)
            total = 0.0
            for v, w in self._landings(world, centre):
                detected, retrieval = self._view(ep, v)
                step, moves = pending_step + a, pending_moves + 1
                if detected:
                    b = update_belief(BeliefState(scores), retrieval, step, world.config.viewpoint_spacing,
                                      n_moves=moves, diffusion=c.diffusion, eps=c.eps, loop=world.config.loop)
                    if should_terminate(b, c.margin):
                        total += w * (self.TERMINAL_HIT if int(np.argmax(b.scores)) == v else self.TERMINAL_MISS)
                        continue
                    nxt, step, moves = b.scores, 0.0, 0
                else:
                    nxt = scores
                if depth > 1:
                    total += w * self._value(ep, nxt, step, moves, float(world.viewpoints[v]), depth - 1)[1]
                elif detected:
                    total += w * float(nxt[v])
                else:
                    prior = shift_belief(scores, step, world.config.viewpoint_spacing, moves, c.diffusion,
                                         world.config.loop)
                    total += w * float(prior[v])
            if total > best + 1e-12:
                best_a, best = a, total
        return best_a, best

    def __call__(self, ep, rng):
        return self._value(ep, ep.belief.scores, ep.pending_step, ep.pending_moves, ep.pose.position, self.depth)[0]


class NextViewOracle:
    """One-step ground-truth oracle: best next-view retrieval of the truth.

    Among steps whose noise-free landing is a true landmark view, pick
    the one whose retrieval scores the true viewpoint highest (ties:
    smaller step).  If no step lands on such a view, take the largest
    step that does not overshoot the next one ahead.  Kept as a simpler
    reference next to :class:`OraclePolicy`; it ignores the belief and so
    is not an upper bound on localization quality.
    """

    def __init__(self, actions=DEFAULT_ACTIONS):
        self.actions = tuple(sorted(float(a) for a in actions))

    def _is_view(self, ep, position):
        return ep.world.has_true_view(position)

    def __call__(self, ep, rng):
        world = ep.world
        best, best_sim = None, -1.0
        for a in self.actions:
            land = move(world, ep.pose, a, None, noise=False).position
            if not self._is_view(ep, land):
                continue
            truth = world.nearest_viewpoint(land)
            sims = dict(ep.matcher.match(render_observation(ep.domain, Pose(land))))
            sim = sims.get(truth, 0.0)
            if sim > best_sim:
                best, best_sim = a, sim
        if best is not None:
            return best
        spacing = world.config.viewpoint_spacing
        for n in range(1, world.n_viewpoints):
            ahead = n * spacing
            if self._is_view(ep, move(world, ep.pose, ahead, None, noise=False).position):
                fitting = [a for a in self.actions if a <= ahead]
                return fitting[-1] if fitting else self.actions[0]
        return self.actions[-1]


def make_policy(kind, constants=None, Q=None, actions=DEFAULT_ACTIONS):
    kind = PolicyKind.parse(kind) if not isinstance(kind, PolicyKind) else kind
    if kind is PolicyKind.LEARNED:
        if Q is None:
            raise ConfigError("Learned policy requires a trained Q function", "policies")
        return LearnedPolicy(Q)
    if kind is PolicyKind.ORACLE:
        return OraclePolicy(actions)
    if constants is None:
        raise ConfigError(f"{kind.value} requires learned constants", "policies")
    if kind is PolicyKind.HEURISTICS:
        return HeuristicsPolicy(constants)
    step = {
        PolicyKind.CONSTANT_WITH_VIEW: constants.C_short,
        PolicyKind.CONSTANT_WITHOUT_VIEW: constants.C_long,
        PolicyKind.CONSTANT_ALL: constants.C_all,
    }[kind]
    return ConstantPolicy(step)


def policy_step(kind, ep, rng, constants=None, Q=None, actions=DEFAULT_ACTIONS):
    """Commanded step (meters) of one policy for the episode's current view.

    Motion noise is added later, by :func:`polenav.world.move`.
    """
    return make_policy(kind, constants, Q, actions)(ep, rng)
