"""On-disk artifacts of the pipeline and an access-audited store for them."""

from __future__ import annotations

import fnmatch
import json
import os
from pathlib import Path

import numpy as np

from .errors import ArtifactAccessError, FormatError, MissingArtifactError
from .world import DomainShiftParams, DomainView, World, WorldConfig

WORLD = "world.json"
# artifacts derived from the test domain; training must never open them
TEST_DOMAIN_PATTERNS = ("*domain_test*", "*table_test*")

# file name -> stage that produces it
PRODUCER = {
    WORLD: "gen",
    "domain_map.json": "gen",
    "domain_train.json": "gen",
    "domain_test.json": "gen",
    "codebook.json": "build",
    "index.sbwi": "build",
    "table_train.sblt": "build",
    "table_test.sblt": "build",
    "constants.json": "build",
    "q.json": "train",
    "training_curve.csv": "train",
    "report.csv": "eval",
}


def pair_dir(p):
    return f"pair{p}"


class ArtifactStore:
    """Resolves artifact names under one output directory and logs every access.

    ``forbid`` installs glob patterns whose reads raise
    :class:`ArtifactAccessError`; ``audit_path`` appends ``read``/``write``
    lines to a log file for external checks.
    """

    def __init__(self, root, audit_path=None):
        self.root = Path(root)
        self.audit_path = audit_path if audit_path is not None else os.environ.get("POLENAV_AUDIT_LOG")
        self.log = []
        self.forbidden = ()

    def forbid(self, *patterns):
        self.forbidden = tuple(self.forbidden) + patterns

    def path(self, name):
        return self.root / name

    def _record(self, mode, name):
        self.log.append((mode, name))
        if self.audit_path:
            with open(self.audit_path, "a") as fh:
                fh.write(f"{mode} {name}\n")

    def reader(self, name):
        """Path of an existing artifact, checked and logged for reading."""
        for pattern in self.forbidden:
            if fnmatch.fnmatch(name, pattern):
                raise ArtifactAccessError(f"access to {name} is forbidden in this stage")
        p = self.path(name)
        if not p.exists():
            raise MissingArtifactError(p, PRODUCER.get(Path(name).name))
        self._record("read", name)
        return p

    def writer(self, name):
        p = self.path(name)
        p.parent.mkdir(parents=True, exist_ok=True)
        self._record("write", name)
        return p

    def read_json(self, name):
        p = self.reader(name)
        try:
            with open(p) as fh:
                return json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{p}: {exc}") from None

    def write_json(self, name, payload):
        with open(self.writer(name), "w") as fh:
            json.dump(payload, fh, sort_keys=True)
            fh.write("\n")


def _ints(a):
    return [int(v) for v in a]


def _floats(a):
    return [float(v) for v in a]


def world_to_dict(world: World):
    return {
        "config": world.config.__dict__,
        "viewpoints": _floats(world.viewpoints),
        "pole_positions": _floats(world.pole_positions),
        "pole_strengths": _floats(world.pole_strengths),
        "place_words": [[_ints(ids), _ints(xs)] for ids, xs in world.place_words],
    }


def world_from_dict(d) -> World:
    try:
        cfg = WorldConfig(**d["config"]).validate()
        return World(
            cfg,
            np.array(d["viewpoints"], dtype=float),
            np.array(d["pole_positions"], dtype=float),
            np.array(d["pole_strengths"], dtype=float),
            [(np.array(ids, dtype=np.int64), np.array(xs, dtype=np.int64)) for ids, xs in d["place_words"]],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed world file: {exc}") from None


def domain_to_dict(domain: DomainView):
    return {
        "params": domain.params.__dict__,
        "words": [[_ints(ids), _ints(xs)] for ids, xs in domain.words],
        "poles": [[_ints(idx), _ints(px), _floats(lik)] for idx, px, lik in domain.poles],
    }


def domain_from_dict(d, world: World) -> DomainView:
    try:
        params = DomainShiftParams(**d["params"]).validate()
        words = [(np.array(ids, dtype=np.int64), np.array(xs, dtype=np.int64)) for ids, xs in d["words"]]
        poles = [
            (np.array(idx, dtype=np.int64), np.array(px, dtype=np.int64), np.array(lik, dtype=float))
            for idx, px, lik in d["poles"]
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed domain file: {exc}") from None
    if len(words) != world.n_viewpoints or len(poles) != world.n_viewpoints:
        raise FormatError("domain file does not match the world's viewpoint count")
    return DomainView(world, params, words, poles)
