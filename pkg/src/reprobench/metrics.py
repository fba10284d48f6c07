"""Top-k metric pool and per-p-dataset evaluation.

Relevance is binary: an item is relevant for a test pair iff it is in the
pair's held-out output set.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, DataError
from .stats import bootstrap_indices, bootstrap_std_ci

FAMILIES = ("precision", "recall", "mrr", "ndcg", "item_coverage", "apt")
PER_PAIR = ("precision", "recall", "mrr", "ndcg", "apt")
DEFAULT_KS = (10, 30, 100)
HEAD_SHARE = 0.2


@dataclass(frozen=True, order=True)
class MetricId:
    family: str
    k: int

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown metric family {self.family!r}")
        if self.k < 1:
            raise ConfigError("metric k must be >= 1")

    @classmethod
    def parse(cls, text: str) -> "MetricId":
        family, sep, k = text.strip().partition("@")
        if not sep:
            raise ConfigError(f"metric {text!r} is not of the form family@k")
        try:
            return cls(family, int(k))
        except ValueError:
            raise ConfigError(f"metric {text!r}: k is not an integer") from None

    def __str__(self) -> str:
        return f"{self.family}@{self.k}"


def default_metric_pool(ks=DEFAULT_KS) -> list[MetricId]:
    return [MetricId(f, k) for f in FAMILIES for k in ks]


def _items(rec):
    return rec.items if hasattr(rec, "items") else tuple(rec)


def _check_rel(rel):
    if not rel:
        raise DataError("no relevant items")


def _hits(rec, rel, k):
    return [i in rel for i in _items(rec)[:k]]


def precision_at_k(rec, rel, k: int) -> float:
    _check_rel(rel)
    return sum(_hits(rec, rel, k)) / k


def recall_at_k(rec, rel, k: int) -> float:
    _check_rel(rel)
    return sum(_hits(rec, rel, k)) / len(rel)


def mrr_at_k(rec, rel, k: int) -> float:
    _check_rel(rel)
    for pos, hit in enumerate(_hits(rec, rel, k), start=1):
        if hit:
            return 1.0 / pos
    return 0.0


def ndcg_at_k(rec, rel, k: int) -> float:
    """Binary-gain NDCG; the ideal list has ``min(|rel|, k)`` hits at the top."""
    _check_rel(rel)
    dcg = sum(1.0 / math.log2(pos + 1) for pos, hit in enumerate(_hits(rec, rel, k), start=1) if hit)
    idcg = sum(1.0 / math.log2(pos + 1) for pos in range(1, min(len(rel), k) + 1))
    return dcg / idcg


@dataclass(frozen=True)
class EvalContext:
    catalog: frozenset
    popularity: dict
    long_tail: frozenset

    @classmethod
    def from_popularity(cls, popularity: dict, head_share: float = HEAD_SHARE) -> "EvalContext":
        """The head is the shortest most-popular prefix holding ``head_share`` of all interactions."""
        catalog = frozenset(popularity)
        ranked = sorted(catalog, key=lambda i: (-popularity[i], i))
        total = sum(popularity.values())
        head, cum = set(), 0.0
        if total > 0:
            for item in ranked:
                if cum >= head_share * total:
                    break
                head.add(item)
                cum += popularity[item]
        return cls(catalog, dict(popularity), catalog - head)

    @classmethod
    def from_pdataset(cls, d, head_share: float = HEAD_SHARE) -> "EvalContext":
        items = np.fromiter((i for s in d.train_sessions for i in s.items), dtype=np.int64)
        counts = np.bincount(items, minlength=d.n_items)
        return cls.from_popularity({i: int(c) for i, c in enumerate(counts.tolist())}, head_share)


def item_coverage_at_k(all_recs, ctx: EvalContext, k: int) -> float:
    if not ctx.catalog:
        raise DataError("empty catalog")
    seen = set()
    for rec in all_recs:
        seen.update(_items(rec)[:k])
    return len(seen & ctx.catalog) / len(ctx.catalog)


def _apt_one(rec, long_tail, k):
    return sum(1 for i in _items(rec)[:k] if i in long_tail) / k


def apt_at_k(all_recs, ctx: EvalContext, k: int) -> float:
    if not ctx.long_tail:
        raise DataError("degenerate long-tail definition")
    all_recs = list(all_recs)
    if not all_recs:
        raise DataError("no recommendation lists")
    return sum(_apt_one(r, ctx.long_tail, k) for r in all_recs) / len(all_recs)


_PAIR_FUNCS = {
    "precision": precision_at_k,
    "recall": recall_at_k,
    "mrr": mrr_at_k,
    "ndcg": ndcg_at_k,
}


@dataclass
class MetricTable:
    """``entries[(MetricId, algo_id)] = (mean, std)`` for one p-dataset."""

    entries: dict = field(default_factory=dict)
    n_test_pairs: int = 0

    def mean(self, metric: MetricId, algo_id: str) -> float:
        try:
            return self.entries[(metric, algo_id)][0]
        except KeyError:
            raise DataError(f"missing entry {metric} / {algo_id}") from None

    @property
    def metrics(self) -> list[MetricId]:
        return sorted({m for m, _ in self.entries})

    @property
    def algorithms(self) -> list[str]:
        return list(dict.fromkeys(a for _, a in self.entries))

    def to_dict(self) -> dict:
        out = {}
        for (metric, algo), (mean, std) in self.entries.items():
            out.setdefault(str(metric), {})[algo] = {"mean": mean, "std": std}
        return {"n_test_pairs": self.n_test_pairs, "entries": out}

    @classmethod
    def from_dict(cls, data: dict) -> "MetricTable":
        entries = {}
        for metric, per_algo in data["entries"].items():
            mid = MetricId.parse(metric)
            for algo, v in per_algo.items():
                entries[(mid, algo)] = (float(v["mean"]), float(v["std"]))
        return cls(entries, int(data.get("n_test_pairs", 0)))


def _coverage_bootstrap(recs, k, n_items, idx):
    rows = [r for r, rec in enumerate(recs) for _ in rec.items[:k]]
    cols = [i for rec in recs for i in rec.items[:k]]
    incidence = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(recs), n_items))
    values = []
    for draw in idx:
        chosen = np.bincount(draw, minlength=len(recs)) > 0
        values.append(np.count_nonzero(incidence.T @ chosen.astype(np.float64)) / n_items)
    return float(np.std(values, ddof=1))


def evaluate_all(d, models, metric_ids, n_boot: int = 100, seed: int = 0, model_seeds=None) -> MetricTable:
    """Score every fitted model on every metric over the test pairs of ``d``.

    Means are over test pairs (coverage over their union); std is the
    bootstrap std with test pairs as the resampling unit.
    """
    pairs = d.test_pairs
    if not pairs:
        raise DataError("no valid test pairs")
    metric_ids = list(metric_ids)
    ctx = EvalContext.from_pdataset(d)
    k_max = max(m.k for m in metric_ids)
    inputs = [tp.input.items for tp in pairs]
    rels = [tp.output for tp in pairs]
    table = MetricTable(n_test_pairs=len(pairs))
    for j, model in enumerate(models):
        boot_seed = model_seeds[j] if model_seeds is not None else [seed, j]
        recs = model.recommend_batch(inputs, k_max)
        for metric in metric_ids:
            k = metric.k
            if metric.family == "item_coverage":
                mean = item_coverage_at_k(recs, ctx, k)
                std = _coverage_bootstrap(recs, k, d.n_items, bootstrap_indices(len(recs), n_boot, boot_seed))
            else:
                if metric.family == "apt":
                    if not ctx.long_tail:
                        raise DataError("degenerate long-tail definition")
                    values = [_apt_one(rec, ctx.long_tail, k) for rec in recs]
                else:
                    func = _PAIR_FUNCS[metric.family]
                    values = [func(rec, rel, k) for rec, rel in zip(recs, rels)]
                mean, std = bootstrap_std_ci(values, n_boot, boot_seed)
            table.entries[(metric, model.spec.id)] = (mean, std)
    return table
