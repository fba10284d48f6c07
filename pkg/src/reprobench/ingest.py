"""Rating-log ingestion: MovieLens formats, canonical CSV, dataset statistics."""
from __future__ import annotations

import gzip
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import DataError

FORMATS = ("ml-100k", "ml-dat", "ml-csv", "canonical")

CANONICAL_HEADER = "user_id,item_id,rating,timestamp"
ML_CSV_HEADER = ("userId", "movieId", "rating", "timestamp")

# (min, max, step) per source format
RATING_SCALES = {
    "ml-100k": (1.0, 5.0, 1.0),
    "ml-dat": (1.0, 5.0, 1.0),
    "ml-csv": (0.5, 5.0, 0.5),
    "canonical": (0.5, 5.0, 0.5),
}


@dataclass(frozen=True)
class Interaction:
    user_id: int
    item_id: int
    rating: float
    timestamp: int


class RawDataset:
    """An immutable interaction log stored column-wise.

    Rows are unique on ``(user_id, item_id, timestamp)`` and sorted by
    ``(user_id, timestamp, item_id)``. Use :meth:`from_columns` to build one
    from unsorted / duplicated data; the plain constructor trusts its input.
    """

    __slots__ = ("users", "items", "ratings", "timestamps", "source_id", "rating_scale")

    def __init__(self, users, items, ratings, timestamps, source_id="unknown",
                 rating_scale=(0.5, 5.0, 0.5)):
        self.users = np.asarray(users, dtype=np.int64)
        self.items = np.asarray(items, dtype=np.int64)
        self.ratings = np.asarray(ratings, dtype=np.float64)
        self.timestamps = np.asarray(timestamps, dtype=np.int64)
        self.source_id = str(source_id)
        self.rating_scale = tuple(float(v) for v in rating_scale)
        for arr in (self.users, self.items, self.ratings, self.timestamps):
            arr.setflags(write=False)

    @classmethod
    def from_columns(cls, users, items, ratings, timestamps, source_id="unknown",
                     rating_scale=(0.5, 5.0, 0.5)) -> "RawDataset":
        """Sort rows and drop exact ``(user, item, timestamp)`` duplicates, keeping the last."""
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        ratings = np.asarray(ratings, dtype=np.float64)
        timestamps = np.asarray(timestamps, dtype=np.int64)
        n = len(users)
        if not (len(items) == len(ratings) == len(timestamps) == n):
            raise DataError("column lengths differ")
        if n:
            if users.min() < 0 or items.min() < 0:
                raise DataError("negative user or item id")
            if timestamps.min() < 0:
                raise DataError("negative timestamp")
        order = np.arange(n)
        # group duplicates together with file order last, keep the final one
        idx = np.lexsort((order, timestamps, items, users))
        key_u, key_i, key_t = users[idx], items[idx], timestamps[idx]
        last = np.ones(n, dtype=bool)
        if n > 1:
            last[:-1] = (key_u[1:] != key_u[:-1]) | (key_i[1:] != key_i[:-1]) | (key_t[1:] != key_t[:-1])
        idx = idx[last]
        idx = idx[np.lexsort((items[idx], timestamps[idx], users[idx]))]
        return cls(users[idx], items[idx], ratings[idx], timestamps[idx], source_id, rating_scale)

    def __len__(self) -> int:
        return len(self.users)

    def __eq__(self, other) -> bool:
        if not isinstance(other, RawDataset):
            return NotImplemented
        return (
            self.source_id == other.source_id
            and self.rating_scale == other.rating_scale
            and np.array_equal(self.users, other.users)
            and np.array_equal(self.items, other.items)
            and np.array_equal(self.ratings, other.ratings)
            and np.array_equal(self.timestamps, other.timestamps)
        )

    def __repr__(self) -> str:
        return f"RawDataset(source_id={self.source_id!r}, n={len(self)})"

    @property
    def interactions(self) -> list[Interaction]:
        return list(self.iter_interactions())

    def iter_interactions(self) -> Iterator[Interaction]:
        for u, i, r, t in zip(self.users.tolist(), self.items.tolist(),
                              self.ratings.tolist(), self.timestamps.tolist()):
            yield Interaction(u, i, r, t)

    def subset(self, mask) -> "RawDataset":
        """Rows selected by a boolean mask, order preserved."""
        return RawDataset(self.users[mask], self.items[mask], self.ratings[mask],
                          self.timestamps[mask], self.source_id, self.rating_scale)


@dataclass(frozen=True)
class DatasetStats:
    n_users: int
    n_items: int
    n_interactions: int
    density: float
    time_span: tuple[int, int]


def dataset_stats(d: RawDataset) -> DatasetStats:
    if len(d) == 0:
        raise DataError("empty dataset")
    n_users = len(np.unique(d.users))
    n_items = len(np.unique(d.items))
    return DatasetStats(
        n_users=n_users,
        n_items=n_items,
        n_interactions=len(d),
        density=len(d) / (n_users * n_items),
        time_span=(int(d.timestamps.min()), int(d.timestamps.max())),
    )


def _open_text(path: Path):
    if path.suffix == ".gz":
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8", newline="")
    return open(path, encoding="utf-8", newline="")


def _check_rating(value: float, scale, lineno: int) -> None:
    lo, hi, step = scale
    if not lo - 1e-9 <= value <= hi + 1e-9:
        raise DataError(f"line {lineno}: rating {value} outside scale [{lo}, {hi}]")
    q = (value - lo) / step
    if abs(q - round(q)) > 1e-9:
        raise DataError(f"line {lineno}: rating {value} not on the {step} grid of the scale")


def parse_interactions(fmt: str, path, source_id: str | None = None) -> RawDataset:
    """Parse a MovieLens ratings file (``.gz`` accepted) into a :class:`RawDataset`."""
    if fmt not in FORMATS:
        raise DataError(f"unknown format {fmt!r}; expected one of {', '.join(FORMATS)}")
    path = Path(path)
    if fmt == "canonical":
        return read_canonical(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    sep = {"ml-100k": "\t", "ml-dat": "::", "ml-csv": ","}[fmt]
    scale = RATING_SCALES[fmt]
    users, items, ratings, stamps = [], [], [], []
    with _open_text(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if fmt == "ml-csv" and lineno == 1:
                if tuple(f.strip() for f in line.split(",")) != ML_CSV_HEADER:
                    raise DataError(f"line 1: expected header {','.join(ML_CSV_HEADER)!r}, got {line!r}")
                continue
            if not line.strip():
                continue
            fields = line.split(sep)
            if len(fields) != 4:
                raise DataError(f"line {lineno}: expected 4 fields separated by {sep!r}, got {len(fields)}")
            try:
                u, i, r, t = int(fields[0]), int(fields[1]), float(fields[2]), int(fields[3])
            except ValueError as exc:
                raise DataError(f"line {lineno}: {exc}") from None
            if u < 0 or i < 0 or t < 0:
                raise DataError(f"line {lineno}: negative id or timestamp")
            _check_rating(r, scale, lineno)
            users.append(u)
            items.append(i)
            ratings.append(r)
            stamps.append(t)
    if not users:
        raise DataError("empty dataset")
    if source_id is None:
        source_id = {"ml-100k": "ml-100k", "ml-dat": path.parent.name or "ml-dat",
                     "ml-csv": path.parent.name or "ml-csv"}[fmt]
    return RawDataset.from_columns(users, items, ratings, stamps, source_id, scale)


def write_canonical(d: RawDataset, path) -> None:
    """Write ``d`` as comma-separated text.

    Two ``#`` preamble lines carry the source id and rating scale so that
    reading the file back reproduces ``d`` exactly.
    """
    if len(d) == 0:
        raise DataError("empty dataset")
    path = Path(path)
    lines = [
        f"# source_id: {d.source_id}",
        "# rating_scale: " + ",".join(repr(v) for v in d.rating_scale),
        CANONICAL_HEADER,
    ]
    lines.extend(
        f"{u},{i},{r!r},{t}"
        for u, i, r, t in zip(d.users.tolist(), d.items.tolist(), d.ratings.tolist(), d.timestamps.tolist())
    )
    try:
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc


def read_canonical(path) -> RawDataset:
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    source_id = path.stem
    scale = RATING_SCALES["canonical"]
    users, items, ratings, stamps = [], [], [], []
    header_seen = False
    with _open_text(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not header_seen:
                if line.startswith("#"):
                    key, _, value = line[1:].partition(":")
                    key, value = key.strip(), value.strip()
                    if key == "source_id":
                        source_id = value
                    elif key == "rating_scale":
                        try:
                            scale = tuple(float(v) for v in value.split(","))
                        except ValueError:
                            raise DataError(f"line {lineno}: bad rating_scale {value!r}") from None
                        if len(scale) != 3:
                            raise DataError(f"line {lineno}: rating_scale needs min,max,step")
                    continue
                if line.strip() != CANONICAL_HEADER:
                    raise DataError(f"line {lineno}: missing header {CANONICAL_HEADER!r}")
                header_seen = True
                continue
            if not line.strip():
                continue
            fields = line.split(",")
            if len(fields) != 4:
                raise DataError(f"line {lineno}: expected 4 comma-separated fields, got {len(fields)}")
            try:
                u, i, r, t = int(fields[0]), int(fields[1]), float(fields[2]), int(fields[3])
            except ValueError as exc:
                raise DataError(f"line {lineno}: {exc}") from None
            _check_rating(r, scale, lineno)
            users.append(u)
            items.append(i)
            ratings.append(r)
            stamps.append(t)
    if not users:
        raise DataError("empty dataset")
    return RawDataset.from_columns(users, items, ratings, stamps, source_id, scale)
