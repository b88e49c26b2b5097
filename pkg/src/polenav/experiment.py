"""The staged experiment pipeline: gen -> build -> train -> eval -> plot.

Each stage reads its predecessor's artifacts through an
:class:`~polenav.artifacts.ArtifactStore` and fails with a
:class:`~polenav.errors.MissingArtifactError` when they are absent.

Every pairing ``p`` gets three domain views of the shared world, each
with its own derived seed: the map view (indexed, and used to calibrate
the detector and learn the constant steps), the training query view
(replayed during Q-learning) and the test view (queried at evaluation).
"""

from __future__ import annotations

import csv
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

from .artifacts import (
    TEST_DOMAIN_PATTERNS,
    WORLD,
    ArtifactStore,
    domain_from_dict,
    domain_to_dict,
    pair_dir,
    world_from_dict,
    world_to_dict,
)
from .config import ExperimentConfig
from .detector import Codebook, LandmarkDetector, fit_detector
from .errors import MissingArtifactError
from .loop import LoopConfig, TableMatcher, run_episode
from .planner import Constants, PolicyKind, QFunction, learn_constants, make_policy
from .planner import train as train_q
from .replay import LookupTable, build_table
from .report import ReportRow, format_summary, read_report, summarize, write_report
from .rng import derive_seed
from .sbow import anchor, build_index
from .world import Pose, derive_domain, generate_world, render_observation

REPORT = "report.csv"
FIGURE = "cost_vs_rank.svg"


def _p(p, name):
    return f"{pair_dir(p)}/{name}"


def domain_params(cfg: ExperimentConfig, p):
    """``(map, train_query, test)`` shift parameters of pairing ``p``."""
    pair = cfg.pairing_list()[p]
    tr, te = pair.train_shift, pair.test_shift
    return (
        replace(tr, domain_seed=derive_seed(tr.domain_seed, "map", p)),
        replace(tr, domain_seed=derive_seed(tr.domain_seed, "query", p)),
        replace(te, domain_seed=derive_seed(te.domain_seed, "test", p)),
    )


def loop_config(cfg: ExperimentConfig):
    return LoopConfig(margin=cfg.margin, max_iterations=cfg.max_iterations,
                      history_bins=cfg.planner.history_bins)


def viewpoint_documents(domain, bin_width):
    """Anchored spatial words of every viewpoint image of ``domain`` (id = viewpoint index)."""
    docs = []
    for i, pos in enumerate(domain.world.viewpoints):
        obs = render_observation(domain, Pose(float(pos)))
        docs.append((i, anchor(obs, bin_width=bin_width) if len(obs.pole_x) else []))
    return docs


def store_for(cfg: ExperimentConfig, audit_path=None):
    return ArtifactStore(cfg.output_dir, audit_path)


def _load_world(store):
    return world_from_dict(store.read_json(WORLD))


def _load_domain(store, world, p, which):
    return domain_from_dict(store.read_json(_p(p, f"domain_{which}.json")), world)


def _load_detector(store, world, p):
    return LandmarkDetector(Codebook.load(store.reader(_p(p, "codebook.json"))), world.config.image_width)


def cmd_gen(cfg: ExperimentConfig, store=None):
    """World and per-pairing domain views; reruns rewrite identical bytes."""
    store = store or store_for(cfg)
    world = generate_world(cfg.world)
    store.write_json(WORLD, world_to_dict(world))
    for p in range(len(cfg.pairing_list())):
        for which, params in zip(("map", "train", "test"), domain_params(cfg, p)):
            store.write_json(_p(p, f"domain_{which}.json"), domain_to_dict(derive_domain(world, params)))
    return store


def cmd_build(cfg: ExperimentConfig, store=None):
    """Detector, index, lookup tables and constant steps of every pairing."""
    store = store or store_for(cfg)
    world = _load_world(store)
    for p in range(len(cfg.pairing_list())):
        dmap = _load_domain(store, world, p, "map")
        dtrain = _load_domain(store, world, p, "train")
        dtest = _load_domain(store, world, p, "test")
        det = fit_detector(dmap, seed=derive_seed(cfg.seed, "codebook", p), k=cfg.detector.codebook_k,
                           gain=cfg.detector.gain)
        det.codebook.save(store.writer(_p(p, "codebook.json")))
        index = build_index(viewpoint_documents(dmap, cfg.bin_width), cfg.world.vocab_size, cfg.bin_width)
        index.save(store.writer(_p(p, "index.sbwi")))
        for which, dom in (("train", dtrain), ("test", dtest)):
            table = build_table(index, viewpoint_documents(dom, cfg.bin_width), cfg.K, cfg.B)
            table.save(store.writer(_p(p, f"table_{which}.sblt")))
        c = learn_constants(world, dmap, det, cfg.planner.actions, cfg.constant_trials,
                            seed=derive_seed(cfg.seed, "constants", p))
        store.write_json(_p(p, "constants.json"), {"C_short": c.C_short, "C_long": c.C_long, "C_all": c.C_all})
    return store


def cmd_train(cfg: ExperimentConfig, store=None):
    """Q-learning on the training query view; test-domain artifacts are off limits."""
    store = store or store_for(cfg)
    store.forbid(*TEST_DOMAIN_PATTERNS)
    world = _load_world(store)
    if cfg.episodes_train == 0:
        warnings.warn("episodes_train is 0; writing an all-zero Q table", RuntimeWarning, stacklevel=2)
    lc = loop_config(cfg)
    for p in range(len(cfg.pairing_list())):
        dtrain = _load_domain(store, world, p, "train")
        det = _load_detector(store, world, p)
        table = LookupTable.load(store.reader(_p(p, "table_train.sblt")))
        Q, returns = train_q(world, dtrain, det, table, cfg.episodes_train, cfg.planner, lc,
                             seed=derive_seed(cfg.seed, "train", p))
        Q.save(store.writer(_p(p, "q.json")))
        with open(store.writer(_p(p, "training_curve.csv")), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("episode", "return"))
            for e, r in enumerate(returns):
                w.writerow((e, repr(float(r))))
    return store


def eval_workers():
    try:
        return max(1, int(os.environ.get("POLENAV_THREADS", "1")))
    except ValueError:
        return 1


def _eval_job(kind, p, policy, world, dtest, det, table, lc, cfg):
    matcher = TableMatcher(table)
    rows = []
    for e in range(cfg.episodes_eval):
        r = run_episode(policy, world, dtest, det, matcher, lc, seed=derive_seed(cfg.seed, "eval", p, e))
        rows.append(ReportRow(kind.value, p, e, r.iterations, float(r.travel_distance), r.final_rank,
                              r.terminated))
    return rows


def cmd_eval(cfg: ExperimentConfig, store=None, echo=print):
    """Every policy on every pairing's test view, with common episode seeds.

    Writes the report CSV, prints the per-method summary recomputed from
    that CSV, and renders the cost-versus-rank figure next to it.
    """
    from .plotting import plot_report

    store = store or store_for(cfg)
    world = _load_world(store)
    lc = loop_config(cfg)
    jobs = []
    for p in range(len(cfg.pairing_list())):
        dtest = _load_domain(store, world, p, "test")
        det = _load_detector(store, world, p)
        table = LookupTable.load(store.reader(_p(p, "table_test.sblt")))
        c = store.read_json(_p(p, "constants.json"))
        constants = Constants(float(c["C_short"]), float(c["C_long"]), float(c["C_all"]))
        Q = None
        if PolicyKind.LEARNED in cfg.policy_kinds:
            Q, _ = QFunction.load(store.reader(_p(p, "q.json")))
        for kind in cfg.policy_kinds:
            policy = make_policy(kind, constants, Q, cfg.planner.actions)
            jobs.append((kind, p, policy, world, dtest, det, table, lc, cfg))
    workers = min(eval_workers(), len(jobs))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(lambda j: _eval_job(*j), jobs))
    else:
        results = [_eval_job(*j) for j in jobs]
    rows = [r for rs in results for r in rs]
    report = store.writer(REPORT)
    write_report(rows, report)
    summaries = summarize(read_report(report))
    if echo is not None:
        echo(format_summary(summaries))
    plot_report(report, store.writer(FIGURE))
    return store


def cmd_plot(report_path, out_path=None):
    from .plotting import plot_report

    if not os.path.exists(report_path):
        raise MissingArtifactError(report_path, "eval")
    out_path = out_path or os.path.join(os.path.dirname(os.path.abspath(report_path)), FIGURE)
    return plot_report(report_path, out_path)
