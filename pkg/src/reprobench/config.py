"""Run configuration files (YAML)."""
from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import yaml

from .algos import AlgoSpec
from .errors import ConfigError
from .ingest import FORMATS
from .metrics import MetricId
from .protocol import GRID_CAP, GridSpec

_TOP_KEYS = {"dataset", "grid", "algorithms", "metrics", "n_boot", "master_seed", "output_dir",
             "parallelism", "grid_cap"}
_DATASET_KEYS = {"path", "format", "id"}
_ALGO_KEYS = {"kind", "name", "hyperparameters", "seed"}


@dataclass
class RunConfig:
    dataset_path: Path
    dataset_format: str
    grid: GridSpec
    algorithms: list
    metrics: list
    dataset_id: str | None = None
    n_boot: int = 100
    master_seed: int = 0
    output_dir: Path = Path("runs/default")
    parallelism: int | str = 1
    grid_cap: int = GRID_CAP

    def __post_init__(self):
        if self.dataset_format not in FORMATS:
            raise ConfigError(f"dataset format must be one of {FORMATS}")
        if not self.algorithms:
            raise ConfigError("algorithm pool is empty")
        if not self.metrics:
            raise ConfigError("metric pool is empty")
        ids = [a.id for a in self.algorithms]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"duplicate algorithm names: {ids}")
        if self.n_boot < 2:
            raise ConfigError("n_boot must be >= 2")
        if self.parallelism != "auto" and (not isinstance(self.parallelism, int) or self.parallelism < 1):
            raise ConfigError("parallelism must be a positive integer or 'auto'")

    @property
    def workers(self) -> int:
        if self.parallelism == "auto":
            return os.cpu_count() or 1
        return int(self.parallelism)


def _algo(entry) -> AlgoSpec:
    if isinstance(entry, str):
        return AlgoSpec(entry)
    if not isinstance(entry, dict):
        raise ConfigError(f"algorithm entry must be a mapping, got {entry!r}")
    unknown = set(entry) - _ALGO_KEYS
    if unknown:
        raise ConfigError(f"unknown algorithm keys: {sorted(unknown)}")
    if "kind" not in entry:
        raise ConfigError("algorithm entry needs a kind")
    return AlgoSpec(entry["kind"], dict(entry.get("hyperparameters") or {}), int(entry.get("seed", 0)),
                    entry.get("name"))


def config_from_mapping(data: dict, base_dir: Path = Path(".")) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    ds = data.get("dataset")
    if not isinstance(ds, dict) or "path" not in ds or "format" not in ds:
        raise ConfigError("dataset needs path and format")
    if set(ds) - _DATASET_KEYS:
        raise ConfigError(f"unknown dataset keys: {sorted(set(ds) - _DATASET_KEYS)}")
    path = Path(ds["path"])
    if not path.is_absolute():
        path = base_dir / path
    if not path.exists():
        raise ConfigError(f"dataset file not found: {path}")
    out = Path(data.get("output_dir", "runs/default"))
    if not out.is_absolute():
        out = base_dir / out
    metrics = data.get("metrics") or []
    return RunConfig(
        dataset_path=path,
        dataset_format=ds["format"],
        dataset_id=ds.get("id"),
        grid=GridSpec.from_mapping(data.get("grid") or {}),
        algorithms=[_algo(a) for a in data.get("algorithms") or []],
        metrics=[MetricId.parse(str(m)) for m in metrics],
        n_boot=int(data.get("n_boot", 100)),
        master_seed=int(data.get("master_seed", 0)),
        output_dir=out,
        parallelism=data.get("parallelism", 1),
        grid_cap=int(data.get("grid_cap", GRID_CAP)),
    )


def _read_yaml(path: Path):
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        return yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None


def load_config(path) -> RunConfig:
    path = Path(path)
    return config_from_mapping(_read_yaml(path), path.parent)


def load_grid(path) -> GridSpec:
    """Read a grid either from a full run config (its ``grid`` key) or from a bare grid file."""
    data = _read_yaml(Path(path)) or {}
    if not isinstance(data, dict):
        raise ConfigError("grid file must be a mapping")
    if "grid" in data:
        data = data["grid"]
    return GridSpec.from_mapping(data)
