"""Ranking metrics, micro-F1, sequence evaluation, CSV reports."""

import numpy as np
import pytest

import oracles
from ledg import evaluation as ev
from ledg import graphdata as gd
from ledg import meta as mt
from ledg import model as md
from ledg.errors import ValidationError
from ledg.evaluation import MetricReport, RankedQuery
from ledg.meta import TrainingConfig
from ledg.model import EncoderConfig, ModelSpec


def _query(ids, scores, relevance, query_id=0):
    return RankedQuery(query_id, np.array(ids), np.array(scores, dtype=float),
                       np.array(relevance))


def _random_queries(rng, num_queries, allow_empty=True, single_relevant=False):
    queries = []
    for qid in range(num_queries):
        n = int(rng.integers(3, 30))
        ids = rng.choice(1000, size=n, replace=False)
        # one decimal place forces plenty of score ties
        scores = np.round(rng.random(n), 1)
        if single_relevant:
            rel = np.zeros(n, dtype=int)
            rel[rng.integers(0, n)] = 1
        else:
            rel = (rng.random(n) < 0.3).astype(int)
            if not allow_empty and rel.sum() == 0:
                rel[rng.integers(0, n)] = 1
        queries.append(_query(ids, scores, rel, query_id=qid))
    return queries


# ------------------------------------------------------------ ranking metrics


def test_map_and_mrr_hand_worked_example():
    q = _query([10, 20, 30], [3.0, 2.0, 1.0], [1, 0, 1])
    # relevant at ranks 1 and 3: AP = (1/1 + 2/3) / 2
    assert ev.mean_average_precision([q]) == pytest.approx(5.0 / 6.0, abs=1e-15)
    assert ev.mean_reciprocal_rank([q]) == 1.0
    q2 = _query([10, 20, 30], [3.0, 2.0, 1.0], [0, 1, 0])
    assert ev.mean_average_precision([q2]) == 0.5
    assert ev.mean_reciprocal_rank([q2]) == 0.5


def test_perfect_and_inverted_rankings():
    ids = list(range(5))
    perfect = _query(ids, [5.0, 4.0, 3.0, 2.0, 1.0], [1, 1, 0, 0, 0])
    assert ev.mean_average_precision([perfect]) == 1.0
    assert ev.mean_reciprocal_rank([perfect]) == 1.0
    worst = _query(ids, [5.0, 4.0, 3.0, 2.0, 1.0], [0, 0, 0, 0, 1])
    assert ev.mean_reciprocal_rank([worst]) == pytest.approx(0.2)


def test_ties_break_by_ascending_candidate_id():
    q = _query([9, 2, 5], [1.0, 1.0, 1.0], [0, 0, 1])
    # all tied: order is 2, 5, 9, so candidate 5 sits at rank 2
    assert ev.mean_reciprocal_rank([q]) == 0.5
    q2 = _query([9, 2, 5], [1.0, 1.0, 1.0], [0, 1, 0])
    assert ev.mean_reciprocal_rank([q2]) == 1.0


def test_queries_without_relevant_candidates_are_excluded():
    with_rel = _query([1, 2], [2.0, 1.0], [1, 0], query_id=0)
    without = _query([3, 4], [2.0, 1.0], [0, 0], query_id=1)
    assert ev.mean_average_precision([with_rel, without]) == 1.0
    with pytest.raises(ValidationError):
        ev.mean_average_precision([without])
    with pytest.raises(ValidationError):
        ev.mean_average_precision([])


def test_metrics_match_brute_force_on_random_instances():
    for instance in range(50):
        rng = np.random.default_rng([100, instance])
        queries = _random_queries(rng, int(rng.integers(1, 7)), allow_empty=instance % 3 == 0)
        if all(q.num_relevant == 0 for q in queries):
            continue
        assert abs(ev.mean_average_precision(queries)
                   - oracles.brute_force_map(queries)) <= 1e-12
        assert abs(ev.mean_reciprocal_rank(queries)
                   - oracles.brute_force_mrr(queries)) <= 1e-12


def test_metrics_invariant_under_monotone_score_transforms():
    rng = np.random.default_rng(42)
    queries = _random_queries(rng, 5, allow_empty=False)
    base_map = ev.mean_average_precision(queries)
    base_mrr = ev.mean_reciprocal_rank(queries)
    for transform in (lambda s: 3.0 * s + 7.0, np.exp):
        moved = [
            RankedQuery(q.query_id, q.candidate_ids, transform(q.scores), q.relevance)
            for q in queries
        ]
        assert ev.mean_average_precision(moved) == base_map
        assert ev.mean_reciprocal_rank(moved) == base_mrr


def test_mrr_equals_map_with_a_single_relevant_candidate():
    rng = np.random.default_rng(3)
    queries = _random_queries(rng, 20, single_relevant=True)
    assert ev.mean_reciprocal_rank(queries) == ev.mean_average_precision(queries)


def test_ranked_query_validation():
    with pytest.raises(ValidationError):
        _query([], [], [])
    with pytest.raises(ValidationError):
        _query([1, 2], [np.inf, 0.0], [1, 0])
    with pytest.raises(ValidationError):
        _query([1, 2], [1.0, 0.0], [1, 2])
    with pytest.raises(ValidationError):
        _query([1, 2], [1.0], [1, 0])


# ------------------------------------------------------------------- micro F1


def test_micro_f1_trivial_values():
    assert ev.micro_f1([0, 1, 1, 0], [0, 1, 1, 0], 2) == 1.0
    assert ev.micro_f1([0, 0, 1, 1], [0, 1, 0, 1], 2) == 0.5


def test_micro_f1_matches_confusion_matrix_oracle():
    for case in range(50):
        rng = np.random.default_rng([200, case])
        c = int(rng.integers(2, 7))
        n = int(rng.integers(5, 200))
        preds = rng.integers(0, c, size=n)
        labels = rng.integers(0, c, size=n)
        ours = ev.micro_f1(preds, labels, c)
        assert abs(ours - oracles.confusion_micro_f1(preds, labels, c)) <= 1e-12


def test_micro_f1_equals_accuracy_for_single_label_predictions():
    rng = np.random.default_rng(8)
    preds = rng.integers(0, 4, size=500)
    labels = rng.integers(0, 4, size=500)
    assert ev.micro_f1(preds, labels, 4) == float(np.mean(preds == labels))


def test_micro_f1_validation():
    with pytest.raises(ValidationError):
        ev.micro_f1([0, 3], [0, 1], 2)
    with pytest.raises(ValidationError):
        ev.micro_f1([0, 1], [0, -1], 2)
    with pytest.raises(ValidationError):
        ev.micro_f1([0, 1], [0], 2)
    with pytest.raises(ValidationError):
        ev.micro_f1([], [], 2)


# ------------------------------------------------------------- query building


def test_queries_from_batch_groups_by_source():
    batch = gd.TaskBatch(1, "edge", np.array([[0, 1], [0, 2], [3, 4]]),
                         np.array([1, 0, 1]))
    queries = ev.queries_from_batch(batch, [0.9, 0.2, 0.7])
    assert [q.query_id for q in queries] == [0, 3]
    assert np.array_equal(queries[0].candidate_ids, [1, 2])
    assert np.array_equal(queries[0].scores, [0.9, 0.2])
    assert np.array_equal(queries[0].relevance, [1, 0])
    with pytest.raises(ValidationError):
        ev.queries_from_batch(batch, [0.9, 0.2])
    node_batch = gd.TaskBatch(1, "node", np.array([0, 1]), np.array([0, 1]))
    with pytest.raises(ValidationError):
        ev.queries_from_batch(node_batch, [0.1, 0.2])


def test_symmetrized_edge_scores_are_order_invariant():
    spec = ModelSpec(EncoderConfig(num_layers=1, input_dim=6, hidden_dim=3))
    params = md.init_parameters(spec, seed=0)
    snap = gd.SnapshotGraph(1, 6, [(0, 1), (2, 3), (4, 5)], np.eye(6))
    bundle = md.embed(snap, params, spec)
    batch = gd.TaskBatch(1, "edge", np.array([[0, 1], [2, 5], [4, 3]]),
                         np.array([1, 0, 0]))
    swapped = gd.TaskBatch(1, "edge", batch.items[:, ::-1], batch.labels)
    a = ev.symmetrized_edge_scores(bundle, params, spec, batch)
    b = ev.symmetrized_edge_scores(bundle, params, spec, swapped)
    assert np.array_equal(a, b)
    assert np.all((a > 0.0) & (a < 1.0))


# -------------------------------------------------------------------- reports


def test_metric_report_aggregates_by_mean():
    report = MetricReport.from_breakdown("map", [(5, 0.5), (6, 0.7)])
    assert report.value == pytest.approx(0.6, abs=1e-15)
    with pytest.raises(ValidationError):
        MetricReport.from_breakdown("map", [])
    with pytest.raises(ValidationError):
        MetricReport.from_breakdown("map", [(5, 1.5)])
    with pytest.raises(ValidationError):
        MetricReport(name="map", value=0.9, breakdown=((5, 0.5), (6, 0.7)))


def test_reports_to_csv_roundtrip():
    reports = {
        "map": MetricReport.from_breakdown("map", [(5, 0.5), (6, 0.25)]),
        "mrr": MetricReport.from_breakdown("mrr", [(5, 1.0), (6, 0.5)]),
    }
    text = ev.reports_to_csv(reports, fingerprint="abc123")
    lines = text.strip().split("\n")
    assert lines[0] == "# config_sha256=abc123"
    assert lines[1] == "metric,snapshot_time,value"
    rows = [line.split(",") for line in lines[2:]]
    for name in ("map", "mrr"):
        per_snapshot = [float(v) for m, t, v in rows if m == name and t != "all"]
        aggregate = [float(v) for m, t, v in rows if m == name and t == "all"]
        assert len(aggregate) == 1
        assert abs(aggregate[0] - np.mean(per_snapshot)) <= 5e-12


# ----------------------------------------------------------- whole sequences


def _link_sequence(seed=2):
    return gd.generate_drifting_sbm(16, 2, 0.4, 0.1, 0.1, 6, seed=seed,
                                    train_frac=0.7, val_frac=0.1)


def _link_setup():
    seq = _link_sequence()
    spec = ModelSpec(EncoderConfig(num_layers=2, input_dim=16, hidden_dim=4))
    params = md.init_parameters(spec, seed=0)
    config = TrainingConfig(window_size=2, eta_in=0.1, eta_out=0.01, seed=0)
    return seq, spec, params, config


def test_evaluate_sequence_model_path_reports_both_link_metrics():
    seq, spec, params, config = _link_setup()
    reports = ev.evaluate_sequence(seq, params, spec, config, seq.times_in("test"),
                                   negative_ratio=5)
    assert set(reports) == {"map", "mrr"}
    for report in reports.values():
        assert 0.0 <= report.value <= 1.0
        assert [t for t, _ in report.breakdown] == list(seq.times_in("test"))


def test_evaluate_sequence_single_snapshot_equals_its_breakdown():
    seq, spec, params, config = _link_setup()
    reports = ev.evaluate_sequence(seq, params, spec, config, [6], negative_ratio=5)
    for report in reports.values():
        assert len(report.breakdown) == 1
        assert report.value == report.breakdown[0][1]


def test_evaluate_sequence_perfect_scorer_scores_one():
    seq, spec, params, config = _link_setup()
    reports = ev.evaluate_sequence(
        seq, params, spec, config, seq.times_in("test"), negative_ratio=5,
        scorer=lambda batch: batch.labels.astype(float),
    )
    assert reports["map"].value == 1.0
    assert reports["mrr"].value == 1.0


def test_evaluate_sequence_micro_f1_path():
    seq = gd.generate_drifting_sbm(12, 2, 0.8, 0.1, 0.1, 5, seed=4,
                                   task="node_classification",
                                   train_frac=0.7, val_frac=0.1)
    spec = ModelSpec(EncoderConfig(num_layers=1, input_dim=12, hidden_dim=3),
                     task="node_classification")
    params = md.init_parameters(spec, seed=1)
    config = TrainingConfig(window_size=2, eta_in=0.1, eta_out=0.01)
    reports = ev.evaluate_sequence(seq, params, spec, config, [5],
                                   scorer=lambda batch: batch.labels)
    assert set(reports) == {"micro_f1"}
    assert reports["micro_f1"].value == 1.0


def test_evaluate_sequence_validation():
    seq, spec, params, config = _link_setup()
    with pytest.raises(ValidationError):
        ev.evaluate_sequence(seq, params, spec, config, [])
    snaps = [gd.SnapshotGraph(1, 4, [(0, 1), (2, 3)], np.eye(4)),
             gd.SnapshotGraph(2, 4, [(0, 2), (1, 3)], np.eye(4)),
             gd.SnapshotGraph(3, 4, [(0, 3), (1, 2)], np.eye(4)),
             gd.SnapshotGraph(4, 4, [], np.eye(4))]
    gappy = gd.DynamicGraphSequence(snaps, (3, 3, 4), "link_prediction", 2)
    with pytest.raises(ValidationError):
        ev.evaluate_sequence(gappy, params, spec, config, [4])


def test_uniform_scorer_mrr_concentrates_at_the_moment_oracle():
    # 1000 single-relevant queries over 101 candidates with iid uniform
    # scores: the relevant rank is uniform on 1..101
    rng = np.random.default_rng(1234)
    queries = []
    for qid in range(1000):
        scores = rng.random(101)
        rel = np.zeros(101, dtype=int)
        rel[rng.integers(0, 101)] = 1
        queries.append(_query(np.arange(101), scores, rel, query_id=qid))
    observed = ev.mean_reciprocal_rank(queries)
    mean, var = oracles.uniform_rank_mrr_moments(101)
    assert abs(observed - mean) <= 3.0 * np.sqrt(var / 1000)
