"""Figure data files (CSV) and SVG renderings from one or more results documents."""
from __future__ import annotations

import csv
import io
import logging
from pathlib import Path

from .analysis import embed_2d, find_ranking_flips, performance_vector, robustness, signature
from .errors import DataError
from .metrics import MetricId
from .runner import results_tables

log = logging.getLogger(__name__)

Z95 = 1.96


def write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    Path(path).write_text(buf.getvalue())


def robustness_rows(results_list, metrics=None):
    """(dataset, metric, robustness, n_pdatasets, n_pairs, n_skipped) rows plus a per-dataset mean row."""
    rows = []
    for res in results_list:
        tables = results_tables(res)
        algos = res["algorithms"]
        chosen = [MetricId.parse(m) for m in (metrics or res["metrics"])]
        values = []
        for metric in chosen:
            vecs = [performance_vector(t, metric, algos, pid) for pid, t in sorted(tables.items())]
            try:
                rep = robustness(vecs, metric, res["dataset_id"])
            except DataError as exc:
                log.warning("%s %s: %s", res["dataset_id"], metric, exc)
                rows.append([res["dataset_id"], str(metric), "", len(vecs), 0, 0])
                continue
            values.append(rep.robustness)
            rows.append([res["dataset_id"], str(metric), rep.robustness, rep.n_pdatasets,
                         len(rep.pair_correlations), len(rep.skipped_pairs)])
        if values:
            rows.append([res["dataset_id"], "mean_over_metrics", sum(values) / len(values), len(tables), "", ""])
    return rows


def _svg_figure():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "reprobench"
    return plt


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})


def render_robustness(rows, path):
    plt = _svg_figure()
    metrics = list(dict.fromkeys(r[1] for r in rows if r[1] != "mean_over_metrics" and r[2] != ""))
    datasets = list(dict.fromkeys(r[0] for r in rows))
    lookup = {(r[0], r[1]): r[2] for r in rows if r[2] != ""}
    fig, ax = plt.subplots(figsize=(7, 3.5))
    width = 0.8 / max(len(datasets), 1)
    for n, ds in enumerate(datasets):
        xs = [m + n * width for m in range(len(metrics))]
        ax.bar(xs, [lookup.get((ds, m), 0.0) for m in metrics], width, label=ds)
    ax.set_xticks([m + 0.4 - width / 2 for m in range(len(metrics))])
    ax.set_xticklabels(metrics, rotation=30, ha="right")
    ax.set_ylim(-1, 1)
    ax.set_ylabel("robustness")
    ax.legend(fontsize="small")
    _save(fig, path)
    plt.close(fig)


def render_flip(res, flip, metric, path):
    plt = _svg_figure()
    tables = results_tables(res)
    algos = res["algorithms"]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    width = 0.4
    for n, pid in enumerate((flip["protocol_a"], flip["protocol_b"])):
        t = tables[pid]
        means = [t.entries[(metric, a)][0] for a in algos]
        stds = [t.entries[(metric, a)][1] for a in algos]
        ax.bar([x + n * width for x in range(len(algos))], means, width, yerr=stds, capsize=3,
               label=f"{res['dataset_id']}/{pid}")
    ax.set_xticks([x + width / 2 for x in range(len(algos))])
    ax.set_xticklabels(algos)
    ax.set_ylabel(str(metric))
    ax.legend(fontsize="small")
    _save(fig, path)
    plt.close(fig)


def render_embedding(rows, path):
    plt = _svg_figure()
    fig, ax = plt.subplots(figsize=(5, 4))
    for ds in dict.fromkeys(r[0] for r in rows):
        pts = [(r[2], r[3]) for r in rows if r[0] == ds]
        ax.scatter([p[0] for p in pts], [p[1] for p in pts], label=ds, s=18)
    ax.legend(fontsize="small")
    _save(fig, path)
    plt.close(fig)


def pooled_signatures(results_list, metrics=None):
    """``[(dataset/protocol id, Signature)]`` over all results; pools must share algorithms."""
    out = []
    algos = results_list[0]["algorithms"]
    metric_order = [MetricId.parse(m) for m in (metrics or results_list[0]["metrics"])]
    for res in results_list:
        if res["algorithms"] != algos:
            raise DataError("incomparable signatures: algorithm pools differ")
        for pid, t in sorted(results_tables(res).items()):
            out.append((f"{res['dataset_id']}/{pid}", signature(t, metric_order, algos)))
    return out


def build_report(results_list, out_dir, metrics=None, flip_metric="precision@10", embed_method="pca",
                 seed=0, render=True) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = {}

    rob = robustness_rows(results_list, metrics)
    write_csv(out_dir / "fig1_robustness.csv",
              ["dataset_id", "metric", "robustness", "n_pdatasets", "n_pairs", "n_skipped_pairs"], rob)
    written["fig1"] = out_dir / "fig1_robustness.csv"

    score_rows = []
    for res in results_list:
        for pid, t in sorted(results_tables(res).items()):
            for (metric, algo), (mean, std) in t.entries.items():
                score_rows.append([res["dataset_id"], pid, str(metric), algo, mean, std,
                                   mean - Z95 * std, mean + Z95 * std])
    write_csv(out_dir / "fig2_scores.csv",
              ["dataset_id", "protocol_id", "metric", "algorithm", "mean", "std", "ci95_low", "ci95_high"],
              score_rows)
    written["fig2"] = out_dir / "fig2_scores.csv"

    fmetric = MetricId.parse(flip_metric)
    flip_rows, best = [], None
    for res in results_list:
        if flip_metric not in res["metrics"]:
            continue
        for f in find_ranking_flips(results_tables(res), fmetric, res["algorithms"]):
            flip_rows.append([res["dataset_id"], flip_metric, f["protocol_a"], f["protocol_b"],
                              f["top_a"], f["top_b"], f["spearman"]])
            if best is None or f["spearman"] < best[1]["spearman"]:
                best = (res, f)
    write_csv(out_dir / "fig2_flips.csv",
              ["dataset_id", "metric", "protocol_a", "protocol_b", "top_a", "top_b", "spearman"], flip_rows)
    written["flips"] = out_dir / "fig2_flips.csv"

    sigs = pooled_signatures(results_list, metrics)
    emb_rows = []
    needed = 5 if embed_method == "tsne" else 3
    if len(sigs) >= needed:
        coords = embed_2d([s for _, s in sigs], embed_method, seed)
        for (sid, _), (x, y) in zip(sigs, coords):
            ds, _, pid = sid.rpartition("/")
            emb_rows.append([ds, pid, x, y])
    write_csv(out_dir / "fig3_embedding.csv", ["dataset_id", "protocol_id", "x", "y"], emb_rows)
    written["fig3"] = out_dir / "fig3_embedding.csv"

    if render:
        render_robustness(rob, out_dir / "fig1_robustness.svg")
        if best is not None:
            render_flip(best[0], best[1], fmetric, out_dir / "fig2_flip.svg")
        if emb_rows:
            render_embedding(emb_rows, out_dir / "fig3_embedding.svg")
    return {"written": written, "n_flips": len(flip_rows)}
