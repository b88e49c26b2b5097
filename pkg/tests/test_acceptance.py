"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line (visible even
under output capture) in addition to asserting.
"""

import contextlib
import fnmatch
import io
import json
import shutil
import time
from dataclasses import replace

import numpy as np
import pytest
from oracles import exhaustive_scores, random_corpus, value_iteration

from polenav import experiment
from polenav.artifacts import ArtifactStore, TEST_DOMAIN_PATTERNS
from polenav.config import load_config
from polenav.detector import Codebook, LandmarkDetector, aggregate, has_landmark_view, quadrant_of, quadrant_ranges
from polenav.errors import FormatError, MagicMismatchError, TruncatedFileError, UnsupportedVersionError
from polenav.loop import BeliefState, TableMatcher, run_episode, should_terminate
from polenav.planner import Constants, HeuristicsPolicy, QFunction, action_probabilities, fit_tabular_mdp, select_action
from polenav.replay import LookupTable, build_table, lookup
from polenav.report import read_report, summarize
from polenav.rng import derive_seed, make_rng
from polenav.sbow import SpatialWord, anchor, build_index, dump_index, load_index, query
from polenav.world import Observation

BASELINES = ("Heuristics", "ConstantWithView", "ConstantWithoutView", "ConstantAll")


@pytest.fixture
def verdict(capsys):
    @contextlib.contextmanager
    def check(n, title):
        detail = {}
        try:
            yield detail
        except BaseException:
            with capsys.disabled():
                print(f"\ncriterion {n}: FAIL  {title} {detail.get('info', '')}")
            raise
        with capsys.disabled():
            print(f"\ncriterion {n}: PASS  {title} {detail.get('info', '')}")
    return check


def test_criterion_1_retrieval_matches_exhaustive_scan(verdict):
    with verdict(1, "inverted index == exhaustive cosine") as v:
        t0 = time.perf_counter()
        n_queries = 0
        for seed in range(25):
            rng = np.random.default_rng(seed)
            n_docs = int(rng.integers(1, 201))
            vocab = int(rng.integers(5, 60))
            idx = build_index(random_corpus(rng, n_docs, 50, vocab=vocab))
            for terms in [d for _, d in random_corpus(rng, 20, 50, vocab=vocab)] + [idx_doc(idx, 0)]:
                for K in (1, 10, n_docs):
                    assert query(idx, terms, K).ranked == exhaustive_scores(idx, terms, K)
                    n_queries += 1
        elapsed = time.perf_counter() - t0
        v["info"] = f"({n_queries} queries on 25 corpora, {elapsed:.1f}s)"
        assert elapsed < 10


def idx_doc(idx, pid):
    return [w for w, c in idx.documents[pid].items() for _ in range(c)]


def test_criterion_2_lookup_table_fidelity(verdict):
    with verdict(2, "table similarities within half a quantization step") as v:
        t0 = time.perf_counter()
        worst = {}
        for seed in range(10):
            rng = np.random.default_rng(100 + seed)
            docs = random_corpus(rng, 120, 40, vocab=50)
            idx = build_index(docs)
            queries = [(i, terms) for i, (_, terms) in enumerate(random_corpus(rng, 40, 40, vocab=50))]
            for B in (4, 8, 16):
                K = 20 if B != 16 else idx.n_images
                table = build_table(idx, queries, K, B)
                bound = 1 / (2 * ((1 << B) - 1))
                for qid, terms in queries:
                    live = query(idx, terms, K).ranked
                    got = lookup(table, qid)
                    if B == 16:
                        assert [p for p, _ in got] == [p for p, _ in live]
                    live_sim = dict(live)
                    for p, s in got:
                        err = abs(s - live_sim[p])
                        worst[B] = max(worst.get(B, 0.0), err / bound)
                        assert err <= bound + 1e-15
        elapsed = time.perf_counter() - t0
        v["info"] = f"(worst error / bound: {', '.join(f'B={b}: {r:.3f}' for b, r in sorted(worst.items()))}; {elapsed:.1f}s)"
        assert elapsed < 10


def test_criterion_3_q_learning_matches_value_iteration(verdict):
    with verdict(3, "tabular Q-learning == value iteration") as v:
        t0 = time.perf_counter()
        errs = []
        for seed in range(5):
            rng = np.random.default_rng(seed)
            n_s, n_a = int(rng.integers(2, 11)), int(rng.integers(1, 5))
            nxt = rng.integers(0, n_s, size=(n_s, n_a))
            rew = rng.uniform(-1, 1, size=(n_s, n_a))
            term = rng.random((n_s, n_a)) < 0.2
            Q = fit_tabular_mdp(nxt, rew, term, gamma=0.9, n_updates=100_000)
            errs.append(float(np.max(np.abs(Q.table - value_iteration(nxt, rew, term, 0.9)))))
        elapsed = time.perf_counter() - t0
        v["info"] = f"(max-norm errors {max(errs):.2e}; {elapsed:.1f}s)"
        assert max(errs) <= 1e-3
        assert elapsed < 30


def test_criterion_4_softmax_frequencies(verdict):
    with verdict(4, "softmax action frequencies") as v:
        n = 100_000
        worst = 0.0
        for values in ([0.3, -1.2, 0.9, 0.0, 2.0], [0.0, 0.0, 0.0], [5.0, -5.0]):
            for c in (0.0, 123.4):
                Q = QFunction(actions=tuple(range(1, len(values) + 1)), k_codebook=1, history_bins=1,
                              temperature=1.0)
                Q.table[0] = np.array(values) + c
                rng = make_rng(7, "softmax", len(values))
                counts = np.bincount([select_action(Q, 0, rng) for _ in range(n)], minlength=len(values))
                target = np.exp(values) / np.exp(values).sum()
                np.testing.assert_allclose(action_probabilities(Q.table[0]), target, atol=1e-12)
                worst = max(worst, float(np.max(np.abs(counts / n - target))))
        v["info"] = f"(worst deviation {worst:.4f})"
        assert worst <= 0.01


def test_criterion_5_quadrants_and_anchoring(verdict):
    with verdict(5, "quadrant partition and anchoring shift invariance") as v:
        for W in range(4, 1025, 4):
            ranges = quadrant_ranges(W)
            assert ranges[0][0] == 0 and ranges[-1][1] == W - 1
            assert all(a[1] + 1 == b[0] for a, b in zip(ranges, ranges[1:]))
            q = quadrant_of(np.arange(W), W)
            for i, (lo, hi) in enumerate(ranges):
                assert np.all(q[lo:hi + 1] == i)
        rng = np.random.default_rng(5)
        for _ in range(10_000):
            n_w, n_p = int(rng.integers(0, 40)), int(rng.integers(1, 5))
            words, xs = rng.integers(0, 1000, n_w), rng.integers(-500, 500, n_w)
            px, lik = rng.integers(-500, 500, n_p), rng.choice([0.3, 0.7, 0.9], n_p)
            shift, bw = int(rng.integers(-2000, 2000)), int(rng.integers(1, 64))
            a = anchor(Observation(words, xs, px, lik), bin_width=bw)
            b = anchor(Observation(words, xs + shift, px + shift, lik), bin_width=bw)
            assert a == b and all(isinstance(w, SpatialWord) for w in a)
        v["info"] = "(W = 4..1024, 10^4 anchoring cases)"


@pytest.fixture(scope="module")
def default_run(tmp_path_factory):
    cfg = load_config("configs/default.json")
    cfg = replace(cfg, output_dir=str(tmp_path_factory.mktemp("default")))
    t0 = time.perf_counter()
    with contextlib.redirect_stdout(io.StringIO()):
        for stage in (experiment.cmd_gen, experiment.cmd_build, experiment.cmd_train, experiment.cmd_eval):
            stage(cfg)
    return cfg, time.perf_counter() - t0


def test_criterion_6_learned_policy_ordering(verdict, default_run):
    cfg, elapsed = default_run
    with verdict(6, "Learned beats baselines, Oracle beats Learned") as v:
        S = {s.method: (s.mean_iterations, s.mean_rank)
             for s in summarize(read_report(f"{cfg.output_dir}/{experiment.REPORT}"))}
        v["info"] = "(" + "; ".join(f"{m} {it:.2f} it / rank {r:.3f}" for m, (it, r) in S.items()) + \
                    f"; {elapsed:.0f}s)"
        assert len(read_report(f"{cfg.output_dir}/{experiment.REPORT}")) == 6 * 200 * 3
        L = S["Learned"]
        for name in BASELINES:
            b = S[name]
            assert (L[0] < b[0] and L[1] <= 1.1 * b[1]) or (L[1] < b[1] and L[0] <= 1.1 * b[0]), name
        O = S["Oracle"]
        assert O[0] <= L[0] and O[1] <= L[1] and O != L
        assert elapsed < 300 and cfg.episodes_train <= 5000


def test_criterion_7_heuristics_trace(verdict, default_run):
    cfg, _ = default_run
    with verdict(7, "Heuristics emits C_long iff no landmark view") as v:
        store = ArtifactStore(cfg.output_dir)
        world = experiment._load_world(store)
        steps = 0
        for p in range(len(cfg.pairing_list())):
            dtest = experiment._load_domain(store, world, p, "test")
            det = LandmarkDetector(Codebook.load(store.path(f"pair{p}/codebook.json")), world.config.image_width)
            table = LookupTable.load(store.path(f"pair{p}/table_test.sblt"))
            c = json.loads(store.path(f"pair{p}/constants.json").read_text())
            constants = Constants(c["C_short"], c["C_long"], c["C_all"])
            inner = HeuristicsPolicy(constants)
            log = []

            def policy(ep, rng):
                step = inner(ep, rng)
                log.append((has_landmark_view(aggregate(ep.obs, world.config.image_width), det.tau), step))
                return step

            for e in range(cfg.episodes_eval):
                run_episode(policy, world, dtest, det, TableMatcher(table), experiment.loop_config(cfg),
                            seed=derive_seed(cfg.seed, "eval", p, e))
            for view, step in log:
                assert step == (constants.C_short if view else constants.C_long)
            assert {v for v, _ in log} == {True, False}
            steps += len(log)
        v["info"] = f"({steps} steps checked)"


def test_criterion_8_termination_grid(verdict):
    with verdict(8, "terminate iff top1 - top2 > 0.10") as v:
        cases = 0
        for a in range(0, 101):
            for b in range(0, 101 - a):
                rest = 100 - a - b
                belief = BeliefState(np.array([a, b, rest], dtype=float) / 100)
                top1, top2 = sorted((a, b, rest), reverse=True)[:2]
                assert should_terminate(belief, 0.1) == (top1 - top2 > 10), (a, b, rest)
                cases += 1
        assert not should_terminate(BeliefState(np.array([0.55, 0.45])), 0.1)
        assert should_terminate(BeliefState(np.array([0.5501, 0.4499])), 0.1)
        v["info"] = f"({cases} beliefs on the 0.01 grid)"


def test_criterion_9_bit_exact_persistence(verdict, tmp_path):
    with verdict(9, "byte-identical round trips, named errors on corruption") as v:
        rng = np.random.default_rng(9)
        idx = build_index(random_corpus(rng, 60, 30), vocab_size=40, bin_width=16)
        blob = dump_index(idx)
        assert dump_index(load_index(blob)) == blob
        queries = [(i, d) for i, (_, d) in enumerate(random_corpus(rng, 15, 30))]
        for B in (4, 8, 16):
            t = build_table(idx, queries, 12, B).to_bytes()
            assert LookupTable.from_bytes(t).to_bytes() == t
        cb = Codebook(rng.random((6, 4)), 8.0, 0.4321)
        cb.save(tmp_path / "a.json")
        Codebook.load(tmp_path / "a.json").save(tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
        Q = QFunction(actions=(1, 2, 4), k_codebook=3, history_bins=2)
        Q.table[:] = rng.normal(size=Q.table.shape)
        Q.save(tmp_path / "q1.json", Constants(1.0, 4.0, 2.0))
        Q2, c2 = QFunction.load(tmp_path / "q1.json")
        Q2.save(tmp_path / "q2.json", c2)
        assert (tmp_path / "q1.json").read_bytes() == (tmp_path / "q2.json").read_bytes()

        for loader, data in ((load_index, blob), (LookupTable.from_bytes, t)):
            with pytest.raises(MagicMismatchError):
                loader(b"ZZZZ" + data[4:])
            with pytest.raises(UnsupportedVersionError):
                loader(data[:4] + (99).to_bytes(2, "little") + data[6:])
            with pytest.raises(TruncatedFileError):
                loader(data[:7])
        for text in ("", "{", '{"k": 2, "centroids": [[0, 0, 0, 0]], "gain": 1, "threshold": 0.5}'):
            with pytest.raises(FormatError):
                Codebook.from_json(text)
        (tmp_path / "bad_q.json").write_text('{"actions": [1]}')
        with pytest.raises(FormatError):
            QFunction.load(tmp_path / "bad_q.json")
        (tmp_path / "bad_q.json").write_text("not json")
        with pytest.raises(FormatError):
            QFunction.load(tmp_path / "bad_q.json")
        v["info"] = "(index, table B=4/8/16, codebook, Q)"


def test_criterion_10_training_never_reads_test_domain(verdict, default_run, tmp_path):
    cfg, _ = default_run
    with verdict(10, "training touches no test-domain artifact") as v:
        audit = tmp_path / "audit.log"
        out = tmp_path / "run"
        shutil.copytree(cfg.output_dir, out)
        small = replace(cfg, episodes_train=50, output_dir=str(out))
        store = ArtifactStore(out, audit_path=str(audit))
        experiment.cmd_train(small, store)
        touched = [name for _, name in store.log]
        bad = [n for n in touched if any(fnmatch.fnmatch(n, p) for p in TEST_DOMAIN_PATTERNS) or "test" in n]
        v["info"] = f"({len(touched)} accesses logged, {len(bad)} test-domain)"
        assert touched and not bad
        assert audit.read_text().count("\n") == len(touched)
