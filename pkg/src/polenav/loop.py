"""The active self-localization episode: plan, move, detect, match.

Belief over map viewpoints is a 1D histogram filter.  Odometry shifts it
by the commanded step and blurs it with a ``0.25/0.5/0.25`` kernel per
move; each retrieval multiplies it by ``eps + similarity`` (``eps`` for
places that were not retrieved).  Matching, and therefore any belief
update, happens only on iterations where a landmark is detected, so the
odometry of skipped iterations is carried forward to the next update.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InvariantViolation
from .replay import lookup
from .rng import make_rng
from .sbow import DEFAULT_BIN_WIDTH, anchor
from .sbow import query as sbow_query
from .world import Pose, displacement, move, render_observation

DEFAULT_MARGIN = 0.1
DEFAULT_MAX_ITERATIONS = 100
LIKELIHOOD_FLOOR = 0.01
DIFFUSION_KERNEL = (0.25, 0.5, 0.25)
# differences within this distance of the margin count as equal to it
MARGIN_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class BeliefState:
    scores: np.ndarray
    iterations: int = 0
    travel: float = 0.0

    @classmethod
    def uniform(cls, n):
        return cls(np.full(n, 1.0 / n))


@dataclass(frozen=True)
class EpisodeResult:
    iterations: int
    travel_distance: float
    final_rank: int
    terminated: bool
    true_viewpoint: int
    estimated_viewpoint: int


@dataclass(frozen=True)
class LoopConfig:
    margin: float = DEFAULT_MARGIN
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    eps: float = LIKELIHOOD_FLOOR
    diffusion: tuple | None = DIFFUSION_KERNEL
    history_bins: int = 8
    motion_noise: bool = True


def _diffuse(scores, kernel, loop):
    left, mid, right = kernel
    if loop:
        return left * np.roll(scores, 1) + mid * scores + right * np.roll(scores, -1)
    padded = np.concatenate(([scores[0]], scores, [scores[-1]]))
    return left * padded[:-2] + mid * padded[1:-1] + right * padded[2:]


def shift_belief(scores, commanded_step, spacing, n_moves=1, diffusion=DIFFUSION_KERNEL, loop=True):
    """Motion half of the filter; total mass is preserved."""
    k = math.floor(commanded_step / spacing + 0.5)
    if loop:
        out = np.roll(scores, k)
    else:
        out = np.zeros_like(scores)
        n = len(scores)
        if k >= n:
            out[-1] = scores.sum()
        else:
            out[k:] = scores[: n - k]
            out[-1] += scores[n - k:].sum()
    if diffusion is not None:
        for _ in range(n_moves):
            out = _diffuse(out, diffusion, loop)
    return out


def update_belief(b: BeliefState, retrieval, commanded_step, spacing, *, n_moves=1,
                  diffusion=DIFFUSION_KERNEL, eps=LIKELIHOOD_FLOOR, loop=True) -> BeliefState:
    """Shift-diffuse the belief, weigh it by the retrieval, renormalize."""
    scores = shift_belief(b.scores, commanded_step, spacing, n_moves, diffusion, loop)
    like = np.full(len(scores), eps)
    if retrieval:
        ids = np.fromiter((p for p, _ in retrieval), dtype=np.int64, count=len(retrieval))
        sims = np.fromiter((s for _, s in retrieval), dtype=float, count=len(retrieval))
        like[ids] = eps + sims
    post = scores * like
    total = post.sum()
    if not total > 0 or not np.isfinite(total):
        raise InvariantViolation("belief vanished after measurement update")
    return BeliefState(post / total, b.iterations, b.travel)


def top_two(scores):
    if len(scores) < 2:
        raise ConfigError("termination test needs at least two viewpoints", "route_length")
    part = np.partition(scores, len(scores) - 2)
    return float(part[-1]), float(part[-2])


def should_terminate(b: BeliefState, margin=DEFAULT_MARGIN) -> bool:
    """True when the best score beats the runner-up by more than ``margin``."""
    first, second = top_two(b.scores)
    return (first - second) - margin > MARGIN_TOLERANCE


def ground_truth_rank(b: BeliefState, true_viewpoint: int) -> int:
    """1 + number of viewpoints scored strictly above the true one."""
    return 1 + int(np.count_nonzero(b.scores > b.scores[true_viewpoint]))


class TableMatcher:
    """Matching stage replayed from a lookup table keyed by query viewpoint."""

    def __init__(self, table):
        self.table = table

    def match(self, obs):
        return lookup(self.table, obs.viewpoint)


class IndexMatcher:
    """Live anchoring plus inverted-file query."""

    def __init__(self, index, K, bin_width=DEFAULT_BIN_WIDTH):
        self.index = index
        self.K = K
        self.bin_width = bin_width

    def match(self, obs):
        if len(obs.pole_x) == 0:
            return []
        terms = anchor(obs, bin_width=self.bin_width)
        return sbow_query(self.index, terms, self.K).ranked


@dataclass
class StepOutcome:
    commanded_step: float
    detected: bool
    true_positive: bool
    terminated: bool
    truncated: bool
    final_rank: int | None = None

    @property
    def done(self):
        return self.terminated or self.truncated


@dataclass
class Episode:
    """Mutable state of one localization run; policies read it to plan."""

    world: object
    domain: object
    detector: object
    matcher: object
    config: LoopConfig
    start: Pose
    motion_rng: np.random.Generator
    trace: list | None = None
    pose: Pose = field(init=False)
    belief: BeliefState = field(init=False)

    def __post_init__(self):
        self.pose = self.start
        self.belief = BeliefState.uniform(self.world.n_viewpoints)
        self.iterations = 0
        self.travel = 0.0
        self.terminated = False
        self.pending_step = 0.0
        self.pending_moves = 0
        self._observe()
        self.counter = 0 if self.detected else self.config.history_bins - 1

    def _observe(self):
        self.obs = render_observation(self.domain, self.pose)
        self.q, self.code, self.detected = self.detector.features(self.obs)

    @property
    def state(self):
        return self.code, self.counter

    @property
    def done(self):
        return self.terminated or self.iterations >= self.config.max_iterations

    def true_viewpoint(self):
        return self.world.nearest_viewpoint(self.pose.position)

    def step(self, commanded_step) -> StepOutcome:
        before = self.pose
        self.pose = move(self.world, before, commanded_step, self.motion_rng, noise=self.config.motion_noise)
        self.travel += displacement(self.world, before, self.pose)
        self.pending_step += commanded_step
        self.pending_moves += 1
        self.iterations += 1
        self._observe()

        matched = False
        if self.detected:
            retrieval = self.matcher.match(self.obs)
            c = self.config
            self.belief = update_belief(
                self.belief, retrieval, self.pending_step, self.world.config.viewpoint_spacing,
                n_moves=self.pending_moves, diffusion=c.diffusion, eps=c.eps, loop=self.world.config.loop,
            )
            self.pending_step, self.pending_moves = 0.0, 0
            self.counter = 0
            matched = True
            self.terminated = should_terminate(self.belief, c.margin)
        else:
            self.counter = min(self.counter + 1, self.config.history_bins - 1)

        true_positive = self.detected and self.world.has_true_view(self.pose.position)
        truncated = not self.terminated and self.iterations >= self.config.max_iterations
        rank = ground_truth_rank(self.belief, self.true_viewpoint()) if self.terminated or truncated else None
        if self.trace is not None:
            order = np.argsort(-self.belief.scores, kind="stable")[:3]
            self.trace.append({
                "iteration": self.iterations,
                "pose": self.pose.position,
                "step": commanded_step,
                "detected": bool(self.detected),
                "belief_updated": matched,
                "top3": [[int(i), float(self.belief.scores[i])] for i in order],
            })
        return StepOutcome(
            commanded_step=commanded_step, detected=self.detected, true_positive=true_positive,
            terminated=self.terminated, truncated=truncated, final_rank=rank,
        )

    def result(self) -> EpisodeResult:
        tv = self.true_viewpoint()
        return EpisodeResult(
            iterations=self.iterations,
            travel_distance=self.travel,
            final_rank=ground_truth_rank(self.belief, tv),
            terminated=self.terminated,
            true_viewpoint=tv,
            estimated_viewpoint=int(np.argmax(self.belief.scores)),
        )


def start_pose(world, seed):
    rng = make_rng(seed, "start")
    return Pose(float(rng.uniform(0.0, world.config.route_length)))


def run_episode(policy, world, domain, detector, matcher, config: LoopConfig, seed,
                start=None, trace=None) -> EpisodeResult:
    """One episode on ``domain``; deterministic in ``seed``.

    ``policy(episode, rng)`` returns the commanded step in meters.
    """
    ep = Episode(world, domain, detector, matcher, config,
                 start if start is not None else start_pose(world, seed),
                 make_rng(seed, "motion"), trace)
    rng = make_rng(seed, "policy")
    while not ep.done:
        ep.step(policy(ep, rng))
    return ep.result()


def dump_trace(trace, path):
    with open(path, "w") as fh:
        for rec in trace:
            fh.write(json.dumps(rec) + "\n")
