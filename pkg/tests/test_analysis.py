import numpy as np
import pytest
from scipy.spatial import cKDTree

from reprobench.analysis import (
    PerformanceVector,
    Signature,
    embed_2d,
    find_ranking_flips,
    robustness,
    select_protocol,
    signature,
    zscore_signatures,
)
from reprobench.errors import DataError
from reprobench.metrics import MetricId, MetricTable

M = MetricId.parse("ndcg@10")
ALGOS = ("a", "b", "c")


def _vec(scores, pid=""):
    return PerformanceVector(M, tuple(scores), ALGOS[: len(scores)], pid)


def test_robustness_identical_is_one():
    assert robustness([_vec([0.1, 0.2, 0.3])] * 4).robustness == 1.0


def test_robustness_reversed_is_minus_one():
    assert robustness([_vec([0.1, 0.2, 0.3]), _vec([0.3, 0.2, 0.1])]).robustness == -1.0


def test_robustness_three_vectors():
    # pairwise rho: (v1, v2) = 0.5, (v1, v3) = 1, (v2, v3) = 0.5; 5th percentile of [0.5, 0.5, 1] = 0.5
    v1, v2, v3 = _vec([1, 2, 3]), _vec([2, 1, 3]), _vec([10, 20, 30])
    rep = robustness([v1, v2, v3])
    assert rep.robustness == pytest.approx(0.5)
    assert len(rep.pair_correlations) == 3


def test_robustness_skips_constant_vectors():
    rep = robustness([_vec([1, 2, 3], "p0"), _vec([1, 1, 1], "p1"), _vec([1, 2, 3], "p2")])
    assert rep.skipped_pairs == [("p0", "p1"), ("p1", "p2")]
    assert rep.robustness == 1.0


def test_robustness_errors():
    with pytest.raises(DataError, match="insufficient"):
        robustness([_vec([1, 2, 3])])
    with pytest.raises(DataError):
        robustness([_vec([1, 1, 1]), _vec([2, 2, 2])])


def _sig(values):
    return Signature(tuple(values), (M,), tuple(f"a{j}" for j in range(len(values))))


def test_signature_layout():
    m2 = MetricId.parse("precision@10")
    t = MetricTable({(M, "a"): (1.0, 0), (M, "b"): (2.0, 0), (m2, "a"): (3.0, 0), (m2, "b"): (4.0, 0)})
    s = signature(t, [m2, M], ["a", "b"])
    assert s.values == (3.0, 4.0, 1.0, 2.0)
    assert s.values[s.index(1, 0)] == 1.0


def test_select_self_and_kdtree(rng):
    for _ in range(20):
        pts = rng.normal(size=(15, 4))
        pool = [(f"p{n:02d}", _sig(p)) for n, p in enumerate(pts)]
        k = int(rng.integers(15))
        assert select_protocol(pool[k][1], pool) == (pool[k][0], 0.0)
        q = rng.normal(size=4)
        dist, idx = cKDTree(pts).query(q)
        pid, d = select_protocol(_sig(q), pool)
        assert pid == f"p{idx:02d}"
        assert d == pytest.approx(dist)


def test_select_tie_goes_to_smaller_id():
    pool = [("p1", _sig([1.0, 0.0])), ("p0", _sig([-1.0, 0.0]))]
    assert select_protocol(_sig([0.0, 0.0]), pool) == ("p0", 1.0)


def test_select_incomparable():
    with pytest.raises(DataError, match="incomparable"):
        select_protocol(_sig([0, 0]), [("p0", _sig([0, 0, 0]))])


def test_zscore():
    z = zscore_signatures([_sig([1, 5]), _sig([3, 5])])
    assert [s.values for s in z] == [(-1.0, 0.0), (1.0, 0.0)]


def test_pca_preserves_planar_distances(rng):
    basis = np.linalg.qr(rng.normal(size=(6, 2)))[0]
    pts = rng.normal(size=(10, 2)) @ basis.T + rng.normal(size=6)
    coords = np.array(embed_2d([_sig(p) for p in pts], "pca"))
    d_in = np.linalg.norm(pts[:, None] - pts[None], axis=2)
    d_out = np.linalg.norm(coords[:, None] - coords[None], axis=2)
    assert np.allclose(d_in, d_out)


def test_pca_identical_points():
    assert embed_2d([_sig([1, 2])] * 3, "pca") == [(0.0, 0.0)] * 3


def test_tsne_deterministic(rng):
    sigs = [_sig(p) for p in rng.normal(size=(8, 3))]
    assert embed_2d(sigs, "tsne", 3) == embed_2d(sigs, "tsne", 3)


def test_embed_too_few():
    with pytest.raises(DataError):
        embed_2d([_sig([1, 2])] * 4, "tsne")
    with pytest.raises(DataError):
        embed_2d([_sig([1, 2])] * 2, "pca")


def _table(scores, metric=M):
    return MetricTable({(metric, a): (s, 0.0) for a, s in zip(ALGOS, scores)})


def test_ranking_flips():
    tables = {"p0": _table([0.1, 0.3, 0.2]), "p1": _table([0.1, 0.2, 0.3]), "p2": _table([0.1, 0.35, 0.2]),
              "p3": _table([0.3, 0.3, 0.1])}
    flips = find_ranking_flips(tables, M, ALGOS)
    assert {(f["protocol_a"], f["protocol_b"]) for f in flips} == {("p0", "p1"), ("p1", "p2")}
    f = flips[0]
    assert (f["top_a"], f["top_b"]) == ("b", "c")
    assert f["spearman"] == pytest.approx(0.5)


def test_no_flips_when_rankings_agree():
    tables = {"p0": _table([0.1, 0.2, 0.3]), "p1": _table([0.2, 0.3, 0.4])}
    assert find_ranking_flips(tables, M, ALGOS) == []
