"""Synthetic 1D route worlds with pole-like landmarks and domain-shifted views.

The route is a line (or a loop) of evenly spaced viewpoints.  Every
viewpoint owns a handful of local features; an image taken at viewpoint
``i`` shows features owned by viewpoints ``i-2 .. i+2`` so neighbouring
images share part of their vocabulary.  Horizontal pixel coordinates come
from a linear bearing model::

    pixel_x = W/2 + slope * (target_position - camera_position)
    slope   = (W/2) / pole_visibility_range

so features ahead of the camera land on the right half of the image.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import ConfigError
from .rng import make_rng

# inclusion probability of a feature owned by a viewpoint at distance 0, 1, 2
WINDOW_INCLUSION = (0.6, 0.4, 0.3)
WINDOW_HALF_WIDTH = len(WINDOW_INCLUSION) - 1
_WINDOW_MASS = WINDOW_INCLUSION[0] + 2 * sum(WINDOW_INCLUSION[1:])
POLE_STRENGTH_RANGE = (0.5, 1.0)


@dataclass(frozen=True)
class WorldConfig:
    route_length: float = 200.0
    viewpoint_spacing: float = 1.0
    n_poles: int = 12
    pole_visibility_range: float = 4.0
    vocab_size: int = 5000
    words_per_image: int = 40
    image_width: int = 320
    seed: int = 0
    loop: bool = True

    def validate(self):
        if not self.route_length > 0:
            raise ConfigError(f"must be > 0, got {self.route_length}", "route_length")
        if not self.viewpoint_spacing > 0:
            raise ConfigError(f"must be > 0, got {self.viewpoint_spacing}", "viewpoint_spacing")
        ratio = self.route_length / self.viewpoint_spacing
        if ratio < 10:
            raise ConfigError(
                f"route_length / viewpoint_spacing must be >= 10, got {ratio:g}", "viewpoint_spacing"
            )
        if abs(ratio - round(ratio)) > 1e-9:
            raise ConfigError("route_length must be a whole multiple of viewpoint_spacing", "viewpoint_spacing")
        if self.n_poles < 0:
            raise ConfigError(f"must be >= 0, got {self.n_poles}", "n_poles")
        if not self.pole_visibility_range > 0:
            raise ConfigError(f"must be > 0, got {self.pole_visibility_range}", "pole_visibility_range")
        if self.image_width <= 0 or self.image_width % 4:
            raise ConfigError(f"must be a positive multiple of 4, got {self.image_width}", "image_width")
        if self.words_per_image < 1:
            raise ConfigError(f"must be >= 1, got {self.words_per_image}", "words_per_image")
        if self.vocab_size < self.words_per_image:
            raise ConfigError(
                f"must be >= words_per_image ({self.words_per_image}), got {self.vocab_size}", "vocab_size"
            )
        if not 0 <= self.seed < 2**64:
            raise ConfigError("must be an unsigned 64-bit integer", "seed")
        return self

    @property
    def n_viewpoints(self):
        n = int(round(self.route_length / self.viewpoint_spacing))
        # in a loop the viewpoint at route_length coincides with the one at 0
        return n if self.loop else n + 1

    @property
    def slope(self):
        return (self.image_width / 2) / self.pole_visibility_range


@dataclass(frozen=True)
class DomainShiftParams:
    """Per-domain perturbation of the ground-truth appearance.

    By convention ``p_pole_drop`` stays much smaller than ``p_word_remap``:
    poles are the cue expected to survive a change of season.
    """

    p_word_remap: float = 0.0
    p_word_drop: float = 0.0
    p_pole_drop: float = 0.0
    bearing_noise_sigma: float = 0.0
    likelihood_noise_sigma: float = 0.0
    domain_seed: int = 0

    def validate(self):
        for name in ("p_word_remap", "p_word_drop", "p_pole_drop"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"probability must lie in [0, 1], got {v}", name)
        for name in ("bearing_noise_sigma", "likelihood_noise_sigma"):
            v = getattr(self, name)
            if not v >= 0.0:
                raise ConfigError(f"must be >= 0, got {v}", name)
        if not 0 <= self.domain_seed < 2**64:
            raise ConfigError("must be an unsigned 64-bit integer", "domain_seed")
        return self


@dataclass(frozen=True)
class Pose:
    position: float


@dataclass(frozen=True, eq=False)
class Observation:
    """What the camera sees: visual words and pole projections.

    ``viewpoint`` is the map index the rendering was taken from.
    """

    word_ids: np.ndarray
    word_x: np.ndarray
    pole_x: np.ndarray
    pole_likelihood: np.ndarray
    viewpoint: int = -1

    @property
    def words(self):
        return list(zip(self.word_ids.tolist(), self.word_x.tolist()))

    @property
    def pole_projections(self):
        return list(zip(self.pole_x.tolist(), self.pole_likelihood.tolist()))


@dataclass(frozen=True, eq=False)
class World:
    config: WorldConfig
    viewpoints: np.ndarray
    pole_positions: np.ndarray
    pole_strengths: np.ndarray
    # per viewpoint: (word_ids, word_x) int arrays
    place_words: list = field(repr=False)

    @property
    def n_viewpoints(self):
        return len(self.viewpoints)

    @property
    def poles(self):
        return list(zip(self.pole_positions.tolist(), self.pole_strengths.tolist()))

    def offset(self, target, origin):
        """Signed route offset ``target - origin``; shortest way round on a loop."""
        d = np.asarray(target, dtype=float) - origin
        if self.config.loop:
            L = self.config.route_length
            d = (d + L / 2) % L - L / 2
        return d

    def visible_poles(self, position):
        """Indices of poles within visibility range of ``position``."""
        d = self.offset(self.pole_positions, position)
        return np.flatnonzero(np.abs(d) <= self.config.pole_visibility_range)

    def has_true_view(self, position):
        return self.visible_poles(position).size > 0

    def nearest_viewpoint(self, position):
        """Index of the nearest viewpoint; equidistant ties go to the lower coordinate."""
        k = math.ceil(position / self.config.viewpoint_spacing - 0.5)
        if self.config.loop:
            return k % self.n_viewpoints
        return min(max(k, 0), self.n_viewpoints - 1)

    def project(self, target, origin):
        c = self.config
        return c.image_width / 2 + c.slope * self.offset(target, origin)

    def same_as(self, other):
        if self.config != other.config:
            return False
        if not (
            np.array_equal(self.viewpoints, other.viewpoints)
            and np.array_equal(self.pole_positions, other.pole_positions)
            and np.array_equal(self.pole_strengths, other.pole_strengths)
        ):
            return False
        return all(
            np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
            for a, b in zip(self.place_words, other.place_words)
        )


@dataclass(frozen=True, eq=False)
class DomainView:
    world: World
    params: DomainShiftParams
    words: list = field(repr=False)
    # per viewpoint: (pole_index, pixel_x, likelihood) arrays
    poles: list = field(repr=False)

    def same_as(self, other):
        if self.params != other.params or not self.world.same_as(other.world):
            return False
        for a, b in zip(self.words, other.words):
            if not (np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])):
                return False
        for a, b in zip(self.poles, other.poles):
            if not all(np.array_equal(x, y) for x, y in zip(a, b)):
                return False
        return True


def _clamp_pixels(x, width):
    return np.clip(np.rint(x), 0, width - 1).astype(np.int64)


def generate_world(config: WorldConfig) -> World:
    config.validate()
    rng = make_rng(config.seed, "world")
    n = config.n_viewpoints
    s = config.viewpoint_spacing
    L = config.route_length
    viewpoints = np.arange(n, dtype=float) * s

    hi = L if config.loop else np.nextafter(L, np.inf)
    pole_positions = np.sort(rng.uniform(0.0, hi, size=config.n_poles))
    if not config.loop:
        pole_positions = np.minimum(pole_positions, L)
    pole_strengths = rng.uniform(*POLE_STRENGTH_RANGE, size=config.n_poles)
    pole_strengths = np.maximum(pole_strengths, np.nextafter(0.0, 1.0))

    # words_per_image is met in expectation
    owned = max(1, math.ceil(config.words_per_image / _WINDOW_MASS))
    feat_ids = rng.integers(0, config.vocab_size, size=(n, owned))
    feat_pos = viewpoints[:, None] + rng.uniform(-s / 2, s / 2, size=(n, owned))

    world = World(config, viewpoints, pole_positions, pole_strengths, place_words=[])
    place_words = []
    for i in range(n):
        ids, xs = [], []
        for j in range(i - WINDOW_HALF_WIDTH, i + WINDOW_HALF_WIDTH + 1):
            if config.loop:
                jj = j % n
            elif 0 <= j < n:
                jj = j
            else:
                continue
            keep = rng.random(owned) < WINDOW_INCLUSION[abs(i - j)]
            ids.append(feat_ids[jj][keep])
            xs.append(world.project(feat_pos[jj][keep], viewpoints[i]))
        place_words.append(
            (np.concatenate(ids).astype(np.int64), _clamp_pixels(np.concatenate(xs), config.image_width))
        )
    world.place_words.extend(place_words)
    return world


def derive_domain(world: World, params: DomainShiftParams) -> DomainView:
    params.validate()
    c = world.config
    rng = make_rng(params.domain_seed, "domain")
    words, poles = [], []
    for i, (ids, xs) in enumerate(world.place_words):
        m = len(ids)
        dropped = rng.random(m) < params.p_word_drop
        remapped = rng.random(m) < params.p_word_remap
        shift = rng.integers(1, c.vocab_size, size=m) if c.vocab_size > 1 else np.zeros(m, dtype=np.int64)
        new_ids = np.where(remapped, (ids + shift) % c.vocab_size, ids)
        words.append((new_ids[~dropped], xs[~dropped].copy()))

        vis = world.visible_poles(world.viewpoints[i])
        k = len(vis)
        kept = rng.random(k) >= params.p_pole_drop
        bearing = rng.standard_normal(k) * params.bearing_noise_sigma
        lik_noise = rng.standard_normal(k) * params.likelihood_noise_sigma
        px = _clamp_pixels(world.project(world.pole_positions[vis], world.viewpoints[i]) + bearing, c.image_width)
        lik = np.clip(world.pole_strengths[vis] + lik_noise, 0.0, 1.0)
        poles.append((vis[kept], px[kept], lik[kept]))
    return DomainView(world, params, words, poles)


def move(world: World, pose: Pose, commanded_step: float, rng, noise=True) -> Pose:
    """Forward motion with uniform odometry noise in [-1, 1] m."""
    if commanded_step < 0:
        raise ValueError("commanded_step must be >= 0")
    dd = rng.uniform(-1.0, 1.0) if noise else 0.0
    p = pose.position + commanded_step + dd
    L = world.config.route_length
    if world.config.loop:
        p = p % L
    else:
        p = min(max(p, 0.0), L)
    return Pose(float(p))


def displacement(world: World, before: Pose, after: Pose) -> float:
    """Distance travelled along the route from ``before`` to ``after``.

    On a loop this is the shorter way round, which is the realized
    displacement for any single move shorter than half the route.
    """
    return float(abs(world.offset(after.position, before.position)))


def render_observation(domain: DomainView, pose: Pose) -> Observation:
    world = domain.world
    k = world.nearest_viewpoint(pose.position)
    ids, xs = domain.words[k]
    pole_idx, px, lik = domain.poles[k]
    if len(pole_idx):
        d = world.offset(world.pole_positions[pole_idx], pose.position)
        near = np.abs(d) <= world.config.pole_visibility_range
        px, lik = px[near], lik[near]
    return Observation(ids, xs, px, lik, viewpoint=k)


def config_from_dict(cls, data, path=""):
    """Build a frozen config dataclass, rejecting unknown fields."""
    if not isinstance(data, dict):
        raise ConfigError("expected an object", path or None)
    known = {f.name: f for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError("unknown field", f"{path}.{key}" if path else key)
    kwargs = {}
    for key, value in data.items():
        default = known[key].default
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError("expected a boolean", f"{path}.{key}" if path else key)
        elif isinstance(default, (int, float)):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError("expected a number", f"{path}.{key}" if path else key)
            if isinstance(default, int) and not isinstance(default, bool):
                if float(value) != int(value):
                    raise ConfigError("expected an integer", f"{path}.{key}" if path else key)
                value = int(value)
        kwargs[key] = value
    obj = cls(**kwargs)
    try:
        obj.validate()
    except ConfigError as exc:
        if path and exc.field:
            raise ConfigError(exc.reason, f"{path}.{exc.field}") from None
        raise
    return obj
