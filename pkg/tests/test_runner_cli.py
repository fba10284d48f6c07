import json
from pathlib import Path

import pytest
import yaml

from reprobench.cli import main
from reprobench.config import config_from_mapping, load_config
from reprobench.errors import ConfigError, NoSuccessfulProtocols
from reprobench.ingest import write_canonical
from reprobench.runner import dumps, run_experiment, stable_seed
from reprobench.synth import SynthSpec, generate_synthetic


@pytest.fixture(scope="module")
def synth_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "synth.csv"
    write_canonical(generate_synthetic(SynthSpec(n_users=150, n_items=80, mean_events_per_user=15, seed=1)), path)
    return path


def _config(tmp_path, data_path, **over):
    cfg = {
        "dataset": {"path": str(data_path), "format": "canonical", "id": "synth"},
        "grid": {"rating_threshold": [1.0, 3.5], "n_output_items": [1, 2], "min_user_interactions": 3},
        "algorithms": ["random", "best_of", "item_knn", {"kind": "svd", "hyperparameters": {"rank": 5}}],
        "metrics": ["precision@5", "ndcg@5", "item_coverage@5", "apt@5"],
        "n_boot": 10,
        "output_dir": str(tmp_path / "out"),
        "parallelism": 1,
    }
    cfg.update(over)
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(cfg))
    return path


def test_stable_seed():
    assert stable_seed(1, "a") == stable_seed(1, "a")
    assert stable_seed(1, "a") != stable_seed(1, "b")
    assert 0 <= stable_seed(0) < 2**64


def test_run_writes_results(tmp_path, synth_csv):
    cfg = load_config(_config(tmp_path, synth_csv))
    res = run_experiment(cfg)
    assert sorted(res["protocols"]) == ["p0000", "p0001", "p0002", "p0003"]
    on_disk = json.loads((tmp_path / "out" / "results.json").read_text())
    assert on_disk == json.loads(dumps(res))
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["config_hash"] == res["config_hash"]
    assert manifest["protocols"]["p0001"]["protocol"]["n_output_items"] == 2
    entry = res["protocols"]["p0000"]["entries"]["precision@5"]
    assert set(entry) == {"random", "best_of", "item_knn", "svd"}


def test_parallel_run_is_byte_identical(tmp_path, synth_csv):
    a = _config(tmp_path, synth_csv, output_dir=str(tmp_path / "a"))
    main(["run", "--config", str(a)])
    main(["run", "--config", str(a), "--parallelism", "3", "--output-dir", str(tmp_path / "b")])
    for name in ("results.json", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_all_protocols_skipped(tmp_path, synth_csv):
    cfg = load_config(_config(tmp_path, synth_csv, grid={"min_user_interactions": [1000]}))
    with pytest.raises(NoSuccessfulProtocols):
        run_experiment(cfg)
    assert main(["run", "--config", str(_config(tmp_path, synth_csv, grid={"min_user_interactions": [1000]}))]) == 3
    res = json.loads((tmp_path / "out" / "results.json").read_text())
    assert "eliminates all" in res["skipped"]["p0000"]


def test_config_errors(tmp_path, synth_csv):
    with pytest.raises(ConfigError, match="unknown configuration keys"):
        config_from_mapping({"dataset": {"path": str(synth_csv), "format": "canonical"}, "bogus": 1})
    with pytest.raises(ConfigError, match="not found"):
        config_from_mapping({"dataset": {"path": str(tmp_path / "nope"), "format": "canonical"}})
    with pytest.raises(ConfigError, match="algorithm pool is empty"):
        config_from_mapping({"dataset": {"path": str(synth_csv), "format": "canonical"},
                             "metrics": ["ndcg@10"]})


def test_cli_grid(tmp_path, capsys):
    spec = tmp_path / "grid.yaml"
    spec.write_text("rating_threshold: [1, 4]\nn_output_items: [1, 3, 5]\n")
    assert main(["grid", "--config", str(spec)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["n_protocols"] == 6
    assert out["protocols"]["p0005"]["n_output_items"] == 5


def test_cli_exit_codes(tmp_path):
    assert main(["grid", "--config", str(tmp_path / "missing.yaml")]) == 1
    bad = tmp_path / "bad.yaml"
    bad.write_text("bogus_key: [1]\n")
    assert main(["grid", "--config", str(bad)]) == 1
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == 1
    broken = tmp_path / "u.data"
    broken.write_text("1\t2\t3\n")
    assert main(["ingest", "--format", "ml-100k", "--input", str(broken)]) == 2
    assert main(["robustness", "--results", str(tmp_path / "nothing.json")]) == 2


def test_cli_ingest_and_synth(tmp_path, capsys):
    out = tmp_path / "s.csv"
    assert main(["synth", "--n-users", "20", "--n-items", "15", "--output", str(out)]) == 0
    stats = json.loads(capsys.readouterr().out)
    assert main(["ingest", "--format", "canonical", "--input", str(out)]) == 0
    assert json.loads(capsys.readouterr().out) == stats


def _results_file(path, dataset, tables, algos=("a", "b", "c")):
    doc = {"dataset_id": dataset, "algorithms": list(algos), "metrics": ["ndcg@10"], "skipped": {},
           "protocols": {pid: {"n_test_pairs": 10, "entries": {"ndcg@10": {
               a: {"mean": s, "std": 0.0} for a, s in zip(algos, scores)}}} for pid, scores in tables.items()}}
    path.write_text(dumps(doc))
    return path


def test_cli_robustness_handmade(tmp_path, capsys):
    res = _results_file(tmp_path / "r.json", "toy",
                        {"p0000": [1, 2, 3], "p0001": [2, 1, 3], "p0002": [10, 20, 30]})
    out_csv = tmp_path / "rob.csv"
    assert main(["robustness", "--results", str(res), "--output", str(out_csv)]) == 0
    first = capsys.readouterr().out.splitlines()[0].split()
    assert first[:2] == ["toy", "ndcg@10"]
    assert float(first[2]) == pytest.approx(0.5)
    assert out_csv.read_text().startswith("dataset_id,metric,robustness")


def test_cli_select_and_embed(tmp_path, capsys):
    pool = _results_file(tmp_path / "pool.json", "pub",
                         {"p0000": [0.1, 0.2, 0.3], "p0001": [0.3, 0.2, 0.1], "p0002": [0.2, 0.2, 0.2]})
    target = _results_file(tmp_path / "t.json", "mine", {"p0000": [0.3, 0.2, 0.1]})
    assert main(["select", "--target", str(target), "--pool", str(pool)]) == 0
    assert capsys.readouterr().out.strip() == "pub/p0001 0.0"
    assert main(["embed", "--results", str(pool), "--output", str(tmp_path / "e.csv")]) == 0
    assert len((tmp_path / "e.csv").read_text().splitlines()) == 4


def test_cli_report(tmp_path, capsys):
    res = _results_file(tmp_path / "r.json", "toy",
                        {"p0000": [0.1, 0.3, 0.2], "p0001": [0.1, 0.2, 0.3], "p0002": [0.3, 0.1, 0.2]})
    out = tmp_path / "rep"
    assert main(["report", "--results", str(res), "--output-dir", str(out), "--flip-metric", "ndcg@10"]) == 0
    text = capsys.readouterr().out
    assert "ranking flips on ndcg@10: 3" in text
    for name in ("fig1_robustness.csv", "fig2_scores.csv", "fig2_flips.csv", "fig3_embedding.csv",
                 "fig1_robustness.svg", "fig2_flip.svg", "fig3_embedding.svg"):
        assert (out / name).exists()
    # SVG output is reproducible
    first = (out / "fig1_robustness.svg").read_bytes()
    main(["report", "--results", str(res), "--output-dir", str(out), "--flip-metric", "ndcg@10"])
    assert (out / "fig1_robustness.svg").read_bytes() == first
