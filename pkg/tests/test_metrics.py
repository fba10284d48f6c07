import math

import pytest

from reprobench.algos import AlgoSpec, fit_pdataset
from reprobench.errors import DataError
from reprobench.metrics import (
    EvalContext,
    MetricId,
    MetricTable,
    apt_at_k,
    default_metric_pool,
    evaluate_all,
    item_coverage_at_k,
    mrr_at_k,
    ndcg_at_k,
    precision_at_k,
    recall_at_k,
)
from reprobench.protocol import PDataset, Protocol, Session, TestPair


def test_hand_example():
    rec, rel = [3, 7, 1, 9], {7, 9}
    assert precision_at_k(rec, rel, 3) == pytest.approx(1 / 3)
    assert recall_at_k(rec, rel, 3) == pytest.approx(0.5)
    assert mrr_at_k(rec, rel, 3) == pytest.approx(0.5)
    # one hit at rank 2, ideal has two hits at ranks 1-2
    assert ndcg_at_k(rec, rel, 3) == pytest.approx((1 / math.log2(3)) / (1 + 1 / math.log2(3)))


def test_ndcg_two_hits():
    expected = (1 + 1 / math.log2(4)) / (1 + 1 / math.log2(3))
    assert ndcg_at_k([5, 6, 8], {5, 8}, 3) == pytest.approx(expected)
    assert expected == pytest.approx(0.9197, abs=1e-4)


def test_precision_short_list_divides_by_k():
    assert precision_at_k([1], {1}, 5) == pytest.approx(0.2)


def test_no_hits():
    assert mrr_at_k([1, 2], {3}, 2) == 0.0
    assert ndcg_at_k([1, 2], {3}, 2) == 0.0


def test_perfect_ranking():
    rel = {1, 2, 3}
    assert ndcg_at_k([1, 2, 3, 4], rel, 4) == pytest.approx(1.0)
    assert recall_at_k([1, 2, 3, 4], rel, 4) == 1.0


@pytest.mark.parametrize("func", [precision_at_k, recall_at_k, mrr_at_k, ndcg_at_k])
def test_empty_relevant_set(func):
    with pytest.raises(DataError, match="no relevant items"):
        func([1, 2], set(), 2)


def test_long_tail_definition():
    # 100 interactions; item 0 alone holds 50 >= 20, so the head is {0}
    ctx = EvalContext.from_popularity({0: 50, 1: 20, 2: 15, 3: 10, 4: 5})
    assert ctx.long_tail == frozenset({1, 2, 3, 4})
    assert apt_at_k([[0, 1], [2, 0]], ctx, 2) == pytest.approx(0.5)


def test_coverage_and_apt_degenerate():
    ctx = EvalContext.from_popularity({0: 3, 1: 2, 2: 0})
    assert item_coverage_at_k([[0, 1], [1, 2]], ctx, 1) == pytest.approx(2 / 3)
    with pytest.raises(DataError, match="empty catalog"):
        item_coverage_at_k([[0]], EvalContext.from_popularity({}), 1)


def test_metric_id_roundtrip():
    m = MetricId.parse("ndcg@10")
    assert (m.family, m.k, str(m)) == ("ndcg", 10, "ndcg@10")
    assert len(default_metric_pool()) == 18
    for bad in ("ndcg", "foo@3", "ndcg@0", "ndcg@x"):
        with pytest.raises(Exception):
            MetricId.parse(bad)


def test_table_roundtrip():
    t = MetricTable({(MetricId.parse("precision@10"), "a"): (0.1, 0.01)}, 5)
    assert MetricTable.from_dict(t.to_dict()) == t
    with pytest.raises(DataError):
        t.mean(MetricId.parse("recall@10"), "a")


def _toy_pdataset():
    train = tuple(Session(u, items, (1.0,) * len(items), tuple(range(len(items))))
                  for u, items in enumerate([(0, 1, 2), (0, 1), (0, 3), (1, 2, 4), (0, 4)]))
    pairs = (
        TestPair(Session(10, (1,), (1.0,), (0,)), frozenset({0})),
        TestPair(Session(11, (2,), (1.0,), (0,)), frozenset({3})),
        TestPair(Session(12, (0,), (1.0,), (0,)), frozenset({1})),
        TestPair(Session(13, (3,), (1.0,), (0,)), frozenset({0})),
        TestPair(Session(14, (4,), (1.0,), (0,)), frozenset({2})),
    )
    import numpy as np
    return PDataset(train, pairs, np.arange(5), Protocol(), "toy", {})


def test_evaluate_all_best_of_by_hand():
    d = _toy_pdataset()
    model = fit_pdataset(AlgoSpec("best_of"), d)
    table = evaluate_all(d, [model], [MetricId.parse("precision@1"), MetricId.parse("recall@2")], n_boot=10)
    # popularity 0:4, 1:3, 2:2, 3:1, 4:2; top-1 excluding the input item
    # inputs 1,2,0,3,4 -> recs [0],[0],[1],[0],[0]; hits on pairs 1,3,4 -> 3/5
    assert table.mean(MetricId.parse("precision@1"), "best_of") == pytest.approx(0.6)
    # top-2: [0,2],[0,1],[1,2],[0,1],[0,1]; hits 1,0,1,1,0
    assert table.mean(MetricId.parse("recall@2"), "best_of") == pytest.approx(0.6)
    mean, std = table.entries[(MetricId.parse("precision@1"), "best_of")]
    assert std > 0


def test_evaluate_all_deterministic():
    d = _toy_pdataset()
    models = [fit_pdataset(AlgoSpec(k), d) for k in ("random", "best_of")]
    ms = [MetricId.parse(m) for m in ("ndcg@3", "item_coverage@3", "apt@3")]
    assert evaluate_all(d, models, ms, 20, 4) == evaluate_all(d, models, ms, 20, 4)
