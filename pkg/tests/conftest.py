from pathlib import Path

import numpy as np
import pytest

from reprobench.ingest import RawDataset

ROOT = Path(__file__).resolve().parents[1]
DATA = ROOT / "data"
ML100K = DATA / "ml-100k" / "u.data"
ML1M = DATA / "ml-1m" / "ratings.dat.gz"

needs_ml100k = pytest.mark.skipif(not ML100K.exists(), reason="run scripts/fetch_movielens.py")
needs_ml1m = pytest.mark.skipif(not ML1M.exists(), reason="run scripts/fetch_movielens.py")

ACCEPTANCE_LINES: dict = {}


def raw_from_rows(rows, source_id="test", scale=(0.5, 5.0, 0.5)) -> RawDataset:
    """rows: (user, item, rating, timestamp) tuples in any order."""
    rows = list(rows)
    cols = list(zip(*rows)) if rows else [(), (), (), ()]
    return RawDataset.from_columns(*cols, source_id=source_id, rating_scale=scale)


def random_raw(rng, n_users=20, n_items=15, n_rows=120, source_id="rand"):
    rows = {}
    for _ in range(n_rows):
        u, i = int(rng.integers(n_users)), int(rng.integers(n_items))
        rows[(u, i)] = (u, i, float(rng.integers(1, 6)), int(rng.integers(0, 10_000)))
    return raw_from_rows(rows.values(), source_id, (1.0, 5.0, 1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
