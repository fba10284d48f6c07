"""Dataset robustness, p-dataset signatures, protocol selection and 2-D embeddings."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .metrics import MetricId, MetricTable
from .stats import percentile_linear, spearman

ROBUSTNESS_PERCENTILE = 5.0


@dataclass(frozen=True)
class PerformanceVector:
    metric: MetricId
    scores: tuple[float, ...]
    algo_order: tuple[str, ...]
    pdataset_id: str = ""

    def __post_init__(self):
        if len(self.scores) != len(self.algo_order):
            raise DataError("scores and algorithm order differ in length")
        if not all(math.isfinite(s) for s in self.scores):
            raise DataError("non-finite performance value")


def performance_vector(t: MetricTable, metric: MetricId, algo_order, pdataset_id: str = "") -> PerformanceVector:
    algo_order = tuple(algo_order)
    return PerformanceVector(metric, tuple(t.mean(metric, a) for a in algo_order), algo_order, pdataset_id)


@dataclass
class RobustnessReport:
    dataset_id: str
    metric: MetricId
    robustness: float
    pair_correlations: list = field(default_factory=list)
    n_pdatasets: int = 0
    skipped_pairs: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "metric": str(self.metric),
            "robustness": self.robustness,
            "n_pdatasets": self.n_pdatasets,
            "n_pairs": len(self.pair_correlations),
            "n_skipped_pairs": len(self.skipped_pairs),
            "pair_correlations": [list(p) for p in self.pair_correlations],
            "skipped_pairs": [list(p) for p in self.skipped_pairs],
        }


def robustness(vectors, metric: MetricId | None = None, dataset_id: str = "") -> RobustnessReport:
    """5th percentile of Spearman correlations over all unordered p-dataset pairs.

    Pairs where either vector has all algorithms tied are skipped and listed
    in ``skipped_pairs``.
    """
    vectors = list(vectors)
    if len(vectors) < 2:
        raise DataError("insufficient p-datasets")
    metric = metric or vectors[0].metric
    order = vectors[0].algo_order
    for v in vectors:
        if v.algo_order != order:
            raise DataError("performance vectors use different algorithm orders")
        if v.metric != metric:
            raise DataError(f"performance vector for {v.metric} in a {metric} robustness computation")
    labels = [v.pdataset_id or str(n) for n, v in enumerate(vectors)]
    pairs, skipped = [], []
    for a, b in itertools.combinations(range(len(vectors)), 2):
        try:
            rho = spearman(vectors[a].scores, vectors[b].scores)
        except DataError:
            skipped.append((labels[a], labels[b]))
            continue
        pairs.append((labels[a], labels[b], rho))
    if not pairs:
        raise DataError("insufficient p-datasets: every pair has a constant performance vector")
    value = percentile_linear([rho for _, _, rho in pairs], ROBUSTNESS_PERCENTILE)
    return RobustnessReport(dataset_id, metric, value, pairs, len(vectors), skipped)


@dataclass(frozen=True)
class Signature:
    """Flattened metric x algorithm score matrix; entry ``(i, j)`` lives at ``i * A + j``."""

    values: tuple[float, ...]
    metric_order: tuple[MetricId, ...]
    algo_order: tuple[str, ...]

    def index(self, i: int, j: int) -> int:
        return i * len(self.algo_order) + j

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)


def signature(t: MetricTable, metric_order, algo_order) -> Signature:
    metric_order, algo_order = tuple(metric_order), tuple(algo_order)
    values = tuple(t.mean(m, a) for m in metric_order for a in algo_order)
    return Signature(values, metric_order, algo_order)


def zscore_signatures(signatures) -> list[Signature]:
    """Standardize each coordinate with the mean/std of the given pool (zero-variance coordinates become 0)."""
    signatures = list(signatures)
    _check_comparable(signatures[0], signatures)
    mat = np.vstack([s.as_array() for s in signatures])
    mu = mat.mean(axis=0)
    sd = mat.std(axis=0)
    sd[sd == 0] = 1.0
    z = (mat - mu) / sd
    return [Signature(tuple(row.tolist()), s.metric_order, s.algo_order) for row, s in zip(z, signatures)]


def _check_comparable(target: Signature, pool) -> None:
    for s in pool:
        if s.metric_order != target.metric_order or s.algo_order != target.algo_order:
            raise DataError("incomparable signatures")


def select_protocol(target: Signature, pool) -> tuple[str, float]:
    """Nearest pool entry to ``target`` in Euclidean distance; ties go to the smaller protocol id."""
    pool = list(pool)
    if not pool:
        raise DataError("empty protocol pool")
    _check_comparable(target, [s for _, s in pool])
    t = target.as_array()
    best = None
    for pid, sig in pool:
        dist = float(np.sqrt(np.sum((sig.as_array() - t) ** 2)))
        if best is None or (dist, pid) < best[::-1]:
            best = (pid, dist)
    return best


def find_ranking_flips(tables: dict, metric: MetricId, algo_order) -> list[dict]:
    """Pairs of p-datasets whose best algorithm differs and whose rankings are not identical.

    ``tables`` maps p-dataset id to :class:`MetricTable`. A p-dataset whose
    top score is shared by several algorithms has no single winner and is
    left out.
    """
    algo_order = tuple(algo_order)
    winners = {}
    vectors = {}
    for pid, t in tables.items():
        v = performance_vector(t, metric, algo_order, pid)
        best = max(v.scores)
        top = [a for a, s in zip(algo_order, v.scores) if s == best]
        if len(top) == 1:
            winners[pid] = top[0]
            vectors[pid] = v
    flips = []
    for a, b in itertools.combinations(sorted(winners), 2):
        if winners[a] == winners[b]:
            continue
        try:
            rho = spearman(vectors[a].scores, vectors[b].scores)
        except DataError:
            continue
        if rho < 1.0:
            flips.append({"protocol_a": a, "protocol_b": b, "top_a": winners[a], "top_b": winners[b],
                          "spearman": rho})
    return flips


def _pca_2d(mat: np.ndarray) -> np.ndarray:
    centered = mat - mat.mean(axis=0)
    if not np.any(centered):
        return np.zeros((mat.shape[0], 2))
    u, s, vt = np.linalg.svd(centered, full_matrices=False)
    coords = np.zeros((mat.shape[0], 2))
    n = min(2, len(s))
    coords[:, :n] = centered @ vt[:n].T
    # fix the sign of each axis so the largest-magnitude loading is positive
    for c in range(n):
        if vt[c][np.argmax(np.abs(vt[c]))] < 0:
            coords[:, c] *= -1
    return coords


def _tsne_2d(mat: np.ndarray, seed: int) -> np.ndarray:
    from sklearn.manifold import TSNE

    n = mat.shape[0]
    perplexity = min(5.0, (n - 1) / 3.0)
    tsne = TSNE(
        n_components=2,
        perplexity=perplexity,
        method="exact",
        init="random",
        max_iter=1000,
        random_state=int(seed) & 0xFFFF_FFFF,
    )
    return tsne.fit_transform(mat)


def embed_2d(signatures, method: str = "pca", seed: int = 0) -> list[tuple[float, float]]:
    signatures = list(signatures)
    if method not in ("pca", "tsne"):
        raise DataError(f"unknown embedding method {method!r}")
    needed = 5 if method == "tsne" else 3
    if len(signatures) < needed:
        raise DataError(f"{method} embedding needs at least {needed} signatures, got {len(signatures)}")
    _check_comparable(signatures[0], signatures)
    mat = np.vstack([s.as_array() for s in signatures])
    coords = _pca_2d(mat) if method == "pca" else _tsne_2d(mat, seed)
    return [(float(x), float(y)) for x, y in coords]
