"""Run a full study: protocol grid -> p-datasets -> fits -> metric tables.

Every random draw is keyed on a seed derived from the master seed and the
task's indices, and BLAS is pinned to one thread inside each task, so the
results file is byte-identical whatever the worker count.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import __version__
from .algos import fit_pdataset
from .config import RunConfig
from .errors import DataError, NoSuccessfulProtocols, ReprobenchError
from .ingest import RawDataset, dataset_stats, parse_interactions
from .metrics import MetricTable, evaluate_all
from .protocol import build_pdataset, enumerate_grid

log = logging.getLogger(__name__)

_RAW: RawDataset | None = None


def stable_seed(*parts) -> int:
    """64-bit seed from a stable hash of ``parts`` (ints / strings)."""
    digest = hashlib.blake2b(repr(tuple(parts)).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def protocol_id(index: int) -> str:
    return f"p{index:04d}"


def dumps(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n"


def _file_sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def config_fingerprint(config: RunConfig) -> dict:
    """Everything that determines results; excludes output location and worker count."""
    return {
        "dataset_sha256": _file_sha256(config.dataset_path),
        "dataset_format": config.dataset_format,
        "grid": {k: list(v) for k, v in config.grid.values.items()},
        "algorithms": [a.to_dict() for a in config.algorithms],
        "metrics": [str(m) for m in config.metrics],
        "n_boot": config.n_boot,
        "master_seed": config.master_seed,
    }


def _init_worker(raw):
    global _RAW
    _RAW = raw


def run_protocol(raw: RawDataset, index: int, protocol, algorithms, metrics, n_boot: int,
                 master_seed: int) -> dict:
    """Materialize, fit and evaluate one protocol; degenerate protocols come back as skips."""
    protocol = dataclasses.replace(protocol, seed=stable_seed(master_seed, "protocol", protocol.seed))
    entry = {"index": index, "protocol": protocol.to_dict()}
    with threadpool_limits(limits=1):
        try:
            d = build_pdataset(raw, protocol)
            entry["pdataset"] = dict(d.stage_counts)
            models = []
            for j, spec in enumerate(algorithms):
                seeded = dataclasses.replace(spec, seed=stable_seed(master_seed, index, j, spec.seed))
                models.append(fit_pdataset(seeded, d))
            boot = [stable_seed(master_seed, index, j, "bootstrap") for j in range(len(algorithms))]
            table = evaluate_all(d, models, metrics, n_boot=n_boot, model_seeds=boot)
        except ReprobenchError as exc:
            entry.update(status="skipped", reason=str(exc))
            return entry
    entry.update(status="ok", table=table.to_dict())
    return entry


def _task(args):
    return run_protocol(_RAW, *args)


def run_experiment(config: RunConfig, raw: RawDataset | None = None, write: bool = True) -> dict:
    """Run every protocol of the grid and return the results document.

    With ``write`` the document goes to ``results.json`` and the protocol
    manifest to ``manifest.json`` inside ``config.output_dir``. Raises
    :class:`NoSuccessfulProtocols` (after writing) when every protocol was
    skipped.
    """
    if raw is None:
        raw = parse_interactions(config.dataset_format, config.dataset_path, config.dataset_id)
    dataset_id = config.dataset_id or raw.source_id
    protocols = enumerate_grid(config.grid, cap=config.grid_cap)
    tasks = [(i, p, config.algorithms, config.metrics, config.n_boot, config.master_seed)
             for i, p in enumerate(protocols)]
    workers = min(config.workers, len(tasks))
    if workers <= 1:
        entries = [run_protocol(raw, *t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(raw,)) as pool:
            entries = list(pool.map(_task, tasks))

    fingerprint = config_fingerprint(config)
    stats = dataset_stats(raw)
    results = {
        "tool": "reprobench",
        "version": __version__,
        "config_hash": hashlib.sha256(dumps(fingerprint).encode()).hexdigest(),
        "dataset_id": dataset_id,
        "dataset_stats": dataclasses.asdict(stats),
        "algorithms": [a.id for a in config.algorithms],
        "metrics": [str(m) for m in config.metrics],
        "protocols": {},
    }
    manifest = {
        "tool": "reprobench",
        "version": __version__,
        "config_hash": results["config_hash"],
        "config": fingerprint,
        "dataset_id": dataset_id,
        "protocols": {},
    }
    for e in entries:
        pid = protocol_id(e["index"])
        manifest["protocols"][pid] = {k: e[k] for k in ("index", "protocol", "status") if k in e}
        if "pdataset" in e:
            manifest["protocols"][pid]["pdataset"] = e["pdataset"]
        if e["status"] == "ok":
            results["protocols"][pid] = e["table"]
        else:
            manifest["protocols"][pid]["reason"] = e["reason"]
            log.warning("%s skipped: %s", pid, e["reason"])
    results["skipped"] = {protocol_id(e["index"]): e["reason"] for e in entries if e["status"] != "ok"}
    if write:
        out = Path(config.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "results.json").write_text(dumps(results))
        (out / "manifest.json").write_text(dumps(manifest))
    if not results["protocols"]:
        raise NoSuccessfulProtocols(f"all {len(entries)} protocols were skipped")
    return results


def load_results(path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / "results.json"
    if not path.exists():
        raise DataError(f"results file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not a results file ({exc})") from None
    if "protocols" not in data or "algorithms" not in data:
        raise DataError(f"{path}: not a results file")
    return data


def results_tables(results: dict) -> dict:
    """``protocol id -> MetricTable`` for the successful protocols of a results document."""
    return {pid: MetricTable.from_dict(t) for pid, t in results["protocols"].items()}
