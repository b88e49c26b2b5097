"""Quadrant landmark features: aggregate, activate, vector-quantize.

This module stands in for the learned detection head.  It keeps the
output contract (a 4-dim likelihood vector and its discrete code) while
replacing the network internals with closed-form steps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import CalibrationError, ConfigError, FormatError
from .rng import make_rng
from .world import Pose, render_observation

DEFAULT_GAIN = 8.0
DEFAULT_CODEBOOK_SIZE = 16
MAX_LLOYD_ITERATIONS = 100


def quadrant_of(x, width):
    """Quadrant index of integer pixel ``x``: [0,W/4-1], [W/4,W/2-1], [W/2,3W/4-1], [3W/4,W-1]."""
    if width % 4:
        raise ConfigError(f"image width must be divisible by 4, got {width}", "image_width")
    return np.minimum(np.asarray(x) // (width // 4), 3)


def quadrant_ranges(width):
    if width % 4:
        raise ConfigError(f"image width must be divisible by 4, got {width}", "image_width")
    q = width // 4
    return [(0, q - 1), (q, 2 * q - 1), (2 * q, 3 * q - 1), (3 * q, width - 1)]


def aggregate(obs, width) -> np.ndarray:
    """Per-quadrant maximum pole likelihood; empty quadrants are 0."""
    if width % 4:
        raise ConfigError(f"image width must be divisible by 4, got {width}", "image_width")
    out = np.zeros(4)
    if len(obs.pole_x):
        np.maximum.at(out, quadrant_of(obs.pole_x, width), obs.pole_likelihood)
    return out


def logistic(z):
    return 1.0 / (1.0 + np.exp(-z))


def activate(q, gain, threshold) -> np.ndarray:
    if not gain > 0:
        raise ConfigError(f"gain must be > 0, got {gain}", "gain")
    return logistic(gain * (np.asarray(q, dtype=float) - threshold))


def calibrate_activation(training_features, labels, gain=DEFAULT_GAIN):
    """Threshold halfway between the class means of ``max_i q_i``.

    Returns ``(gain, threshold)``.
    """
    peaks = np.array([float(np.max(q)) for q in training_features])
    labels = np.asarray(labels, dtype=bool)
    if len(peaks) != len(labels):
        raise CalibrationError("features and labels differ in length")
    if not labels.any():
        raise CalibrationError("no positive (has-pole) samples")
    if labels.all():
        raise CalibrationError("no negative (no-pole) samples")
    threshold = 0.5 * (peaks[labels].mean() + peaks[~labels].mean())
    return float(gain), float(threshold)


def has_landmark_view(q, tau) -> bool:
    return bool(np.max(q) >= tau)


@dataclass(frozen=True, eq=False)
class Codebook:
    centroids: np.ndarray
    gain: float = DEFAULT_GAIN
    threshold: float = 0.5

    @property
    def size(self):
        return len(self.centroids)

    def to_json(self) -> str:
        payload = {
            "k": self.size,
            "centroids": [[float(v) for v in row] for row in self.centroids],
            "gain": float(self.gain),
            "threshold": float(self.threshold),
        }
        return json.dumps(payload, indent=1) + "\n"

    @classmethod
    def from_json(cls, text):
        try:
            data = json.loads(text)
            k = int(data["k"])
            centroids = np.array(data["centroids"], dtype=float).reshape(-1, 4)
            gain, threshold = float(data["gain"]), float(data["threshold"])
        except (ValueError, KeyError, TypeError) as exc:
            raise FormatError(f"malformed codebook: {exc}") from None
        if len(centroids) != k or k < 1:
            raise FormatError(f"codebook declares k={k} but holds {len(centroids)} centroids")
        return cls(centroids, gain, threshold)

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(fh.read())


def _sq_dists(x, centroids):
    diff = x[:, None, :] - centroids[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def distortion(samples, centroids):
    d = _sq_dists(np.asarray(samples, dtype=float), centroids)
    return float(d.min(axis=1).sum())


def _farthest_point_init(points, k, rng):
    chosen = [int(rng.integers(len(points)))]
    best = _sq_dists(points, points[chosen])[:, 0]
    while len(chosen) < k:
        nxt = int(np.argmax(best))
        chosen.append(nxt)
        best = np.minimum(best, _sq_dists(points, points[[nxt]])[:, 0])
    return points[chosen].copy()


def lloyd(samples, centroids, max_iter=MAX_LLOYD_ITERATIONS):
    """Lloyd iterations from the given centroids.

    Returns ``(centroids, distortion_history)``; the history starts with
    the distortion of the initial centroids.  Empty clusters keep their
    centroid.
    """
    x = np.asarray(samples, dtype=float)
    c = np.array(centroids, dtype=float)
    history = [distortion(x, c)]
    assign = None
    for _ in range(max_iter):
        new_assign = np.argmin(_sq_dists(x, c), axis=1)
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for j in range(len(c)):
            members = x[assign == j]
            if len(members):
                c[j] = members.mean(axis=0)
        d = distortion(x, c)
        if d > history[-1] * (1 + 1e-12) + 1e-12:
            raise AssertionError(f"Lloyd distortion increased: {history[-1]} -> {d}")
        history.append(d)
    return c, history


def train_codebook(samples, k=DEFAULT_CODEBOOK_SIZE, seed=0, gain=DEFAULT_GAIN, threshold=0.5) -> Codebook:
    x = np.asarray(samples, dtype=float).reshape(-1, 4)
    if len(x) == 0:
        raise CalibrationError("no samples to train the codebook on")
    distinct = np.unique(x, axis=0)
    if k < 1 or k > len(distinct):
        raise CalibrationError(f"codebook size k={k} exceeds the {len(distinct)} distinct samples")
    init = _farthest_point_init(distinct, k, make_rng(seed, "codebook"))
    centroids, _ = lloyd(x, init)
    return Codebook(centroids, gain, threshold)


def quantize(a, codebook: Codebook) -> int:
    """Nearest centroid index; ties go to the lowest index."""
    a = np.asarray(a, dtype=float)
    d = np.sum((codebook.centroids - a) ** 2, axis=1)
    return int(np.argmin(d))


class LandmarkDetector:
    """Bundles the frozen calibration and codebook of the training domain."""

    def __init__(self, codebook: Codebook, width, tau=None):
        self.codebook = codebook
        self.width = width
        self.tau = codebook.threshold if tau is None else tau
        if not 0 < self.tau < 1:
            raise ConfigError(f"detection threshold must lie in (0, 1), got {self.tau}", "tau")

    def features(self, obs):
        """``(q, code, detected)`` for one observation."""
        q = aggregate(obs, self.width)
        a = activate(q, self.codebook.gain, self.codebook.threshold)
        return q, quantize(a, self.codebook), has_landmark_view(q, self.tau)

    def detect(self, obs):
        return has_landmark_view(aggregate(obs, self.width), self.tau)


def fit_detector(domain, seed=0, k=DEFAULT_CODEBOOK_SIZE, gain=DEFAULT_GAIN) -> LandmarkDetector:
    """Calibrate activation and train the codebook on one (training) domain."""
    world = domain.world
    width = world.config.image_width
    feats, labels = [], []
    for pos in world.viewpoints:
        obs = render_observation(domain, Pose(float(pos)))
        feats.append(aggregate(obs, width))
        labels.append(world.has_true_view(pos))
    gain, threshold = calibrate_activation(feats, labels, gain)
    acts = np.array([activate(q, gain, threshold) for q in feats])
    k = min(k, len(np.unique(acts, axis=0)))
    codebook = train_codebook(acts, k, seed, gain, threshold)
    return LandmarkDetector(codebook, width)

