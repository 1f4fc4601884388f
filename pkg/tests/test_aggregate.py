from __future__ import annotations

import itertools

import numpy as np
import pytest

from crowdtag.aggregate import (
    NoUsableWorkersError,
    aggregate,
    aggregate_all,
    aggregation_accuracy,
    worker_accuracy,
)
from crowdtag.annotate import (
    UNPARSEABLE,
    BudgetState,
    ResponseCache,
    SyntheticOracleClient,
    WorkerAnnotation,
    annotate_graph,
)
from crowdtag.synthetic import synthetic_citation_graph

CLASSES = ["A", "B", "C"]


def worker(k: int, guesses: list[tuple[str, int]], failed: bool = False) -> WorkerAnnotation:
    return WorkerAnnotation(
        center=0, config_k=k, guesses=guesses or [(UNPARSEABLE, 0)],
        raw_response="", parse_failed=failed,
    )


# --- aggregate -----------------------------------------------------------------

def test_unanimous_workers():
    workers = [worker(k, [("A", 100)]) for k in range(8)]
    p = aggregate(0, workers, CLASSES)
    assert p.label == 0
    assert p.confidence == pytest.approx(1.0)
    assert p.unparseable_count == 0


def test_two_worker_weighted_sum_hand_case():
    # hand-computed: masses A=0.6+0.2=0.8, B=0.4+0.8=1.2 of total 2
    workers = [
        worker(0, [("A", 60), ("B", 40)]),
        worker(1, [("B", 80), ("A", 20)]),
    ]
    p = aggregate(0, workers, CLASSES)
    assert p.label == 1
    assert p.confidence == pytest.approx(1.2 / 2.0)


def test_one_unparseable_excluded():
    workers = [worker(k, [("A", 100)]) for k in range(7)]
    workers.append(worker(7, [], failed=True))
    p = aggregate(0, workers, CLASSES)
    assert p.label == 0
    assert p.unparseable_count == 1
    assert p.confidence == pytest.approx(1.0)  # mass over the 7 usable workers


def test_all_unparseable_raises():
    workers = [worker(k, [], failed=True) for k in range(8)]
    with pytest.raises(NoUsableWorkersError):
        aggregate(0, workers, CLASSES)


def test_zero_confidence_list_treated_uniform():
    workers = [worker(0, [("A", 0), ("B", 0)])]
    p = aggregate(0, workers, CLASSES)
    # uniform mass over all classes -> tie -> lowest class index
    assert p.label == 0
    assert p.confidence == pytest.approx(1 / 3)


def test_permutation_invariance():
    base = [
        worker(0, [("A", 50), ("B", 30), ("C", 20)]),
        worker(1, [("B", 90), ("A", 10)]),
        worker(2, [("C", 100)]),
        worker(3, [("B", 60), ("C", 40)]),
    ]
    expected = aggregate(0, base, CLASSES)
    for perm in itertools.permutations(base):
        p = aggregate(0, list(perm), CLASSES)
        assert (p.label, p.confidence) == (expected.label, expected.confidence)


def test_scale_invariance_of_one_worker():
    w1 = [worker(0, [("A", 60), ("B", 40)]), worker(1, [("B", 70), ("C", 30)])]
    w2 = [worker(0, [("A", 6), ("B", 4)]), worker(1, [("B", 70), ("C", 30)])]
    a, b = aggregate(0, w1, CLASSES), aggregate(0, w2, CLASSES)
    assert a.label == b.label
    assert a.confidence == pytest.approx(b.confidence)


def test_confidence_bounds():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n_workers = int(rng.integers(1, 9))
        workers = []
        for k in range(n_workers):
            n_guesses = int(rng.integers(1, 4))
            classes = rng.choice(len(CLASSES), size=n_guesses, replace=False)
            guesses = [(CLASSES[c], int(rng.integers(0, 101))) for c in classes]
            workers.append(worker(k, guesses))
        p = aggregate(0, workers, CLASSES)
        assert 1 / len(CLASSES) - 1e-12 <= p.confidence <= 1.0 + 1e-12


def test_adding_worker_for_winner_keeps_winner():
    rng = np.random.default_rng(1)
    for _ in range(50):
        workers = [
            worker(k, [(CLASSES[int(rng.integers(3))], int(rng.integers(1, 101)))])
            for k in range(int(rng.integers(1, 7)))
        ]
        before = aggregate(0, workers, CLASSES)
        boosted = workers + [worker(7, [(CLASSES[before.label], 100)])]
        after = aggregate(0, boosted, CLASSES)
        assert after.label == before.label


def test_aggregate_all_drops_dead_nodes():
    annotations = {
        0: [worker(k, [("A", 100)]) for k in range(8)],
        1: [worker(k, [], failed=True) for k in range(8)],
    }
    pseudo, dropped = aggregate_all(annotations, CLASSES)
    assert list(pseudo) == [0]
    assert dropped == [1]


# --- worker accuracy ----------------------------------------------------------------

def oracle_annotations(graph, noise, seed, nodes=None):
    client = SyntheticOracleClient(graph, noise=noise, seed=seed)
    return annotate_graph(
        graph,
        nodes if nodes is not None else list(range(graph.num_nodes)),
        client,
        ResponseCache(),
        BudgetState(limit_usd=1.0),
        model="oracle",
    )


def test_worker_accuracy_perfect_oracle():
    # alpha=1: every neighbor shares the center's class, so at noise 0 the
    # plurality vote is the truth for every configuration
    g = synthetic_citation_graph(n=40, num_classes=3, alpha=1.0, seed=1)
    annotations = oracle_annotations(g, noise=0.0, seed=0)
    truth = {v: g.labels[v] for v in range(g.num_nodes)}
    rows = worker_accuracy(annotations, truth, g.class_names)
    assert len(rows) == 8
    assert all(acc == pytest.approx(1.0) for _, acc, _ in rows)
    assert all(n == g.num_nodes for _, _, n in rows)


def test_worker_accuracy_config3_beats_config0_on_homophilous_graph():
    # 1000 nodes, structure-rich tie vs singleton tie under a noisy oracle
    g = synthetic_citation_graph(n=1000, num_classes=3, alpha=0.9, avg_out_degree=4.0, seed=6)
    annotations = oracle_annotations(g, noise=0.35, seed=3)
    truth = {v: g.labels[v] for v in range(g.num_nodes)}
    rows = dict((k, acc) for k, acc, _ in worker_accuracy(annotations, truth, g.class_names))
    assert rows[3] >= rows[0]


def test_worker_accuracy_all_unparseable_flagged_zero():
    annotations = {
        0: [worker(k, [("A", 100)]) if k else worker(0, [], failed=True) for k in range(8)],
        1: [worker(k, [("A", 100)]) if k else worker(0, [], failed=True) for k in range(8)],
    }
    truth = {0: 0, 1: 0}
    rows = worker_accuracy(annotations, truth, CLASSES)
    k0 = rows[0]
    assert k0 == (0, 0.0, 0)  # zero evaluated, accuracy reported as 0


def test_worker_accuracy_empty_evaluation_set():
    with pytest.raises(ValueError):
        worker_accuracy({}, {}, CLASSES)


def test_aggregation_accuracy_beats_single_worker():
    g = synthetic_citation_graph(n=600, num_classes=3, alpha=0.9, avg_out_degree=4.0, seed=10)
    annotations = oracle_annotations(g, noise=0.3, seed=4)
    truth = {v: g.labels[v] for v in range(g.num_nodes)}
    pseudo, _ = aggregate_all(annotations, g.class_names)
    agg_acc = aggregation_accuracy(pseudo, truth)
    rows = dict((k, acc) for k, acc, _ in worker_accuracy(annotations, truth, g.class_names))
    assert agg_acc >= rows[0]
