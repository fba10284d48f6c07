"""Preprocessing protocols, protocol grids and p-dataset materialization.

A p-dataset is what you get by running one :class:`Protocol` over a raw
rating log. The stages always run in this order::

    rating threshold -> k-core -> user subsample -> per-user cap
    -> sessionize -> train/test holdout -> input/output split (test only)
"""
from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import ConfigError, ProtocolError
from .ingest import RawDataset
from .stats import percentile_linear

OUTPUT_STRATEGIES = ("last-n", "random-n")
SPLIT_STRATEGIES = ("user-holdout", "temporal-global")
GRID_CAP = 10_000
MIN_TEST_PAIRS = 10

# stream ids mixed into the protocol seed so stages draw independent numbers
_SUBSAMPLE_STREAM = 1
_HOLDOUT_STREAM = 2
_OUTPUT_STREAM = 3

_UNLIMITED = (None, "none", "unlimited")


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) & 0xFFFF_FFFF_FFFF_FFFF, *stream])


@dataclass(frozen=True)
class Protocol:
    rating_threshold: float = 0.0
    min_user_interactions: int = 0
    min_item_interactions: int = 0
    max_interactions_per_user: int | None = None
    max_users: int | None = None
    session_gap: int | None = None
    n_output_items: int = 1
    output_strategy: str = "last-n"
    test_fraction: float = 0.2
    split_strategy: str = "user-holdout"
    seed: int = 0
    kcore_iterate: bool = True

    def __post_init__(self):
        for name in ("min_user_interactions", "min_item_interactions"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        for name in ("max_interactions_per_user", "max_users"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ConfigError(f"{name} must be >= 1 or unlimited")
        if self.session_gap is not None and self.session_gap < 0:
            raise ConfigError("session_gap must be >= 0 or none")
        if self.n_output_items < 1:
            raise ConfigError("n_output_items must be >= 1")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError("test_fraction must lie in (0, 1)")
        if self.output_strategy not in OUTPUT_STRATEGIES:
            raise ConfigError(f"output_strategy must be one of {OUTPUT_STRATEGIES}")
        if self.split_strategy not in SPLIT_STRATEGIES:
            raise ConfigError(f"split_strategy must be one of {SPLIT_STRATEGIES}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Session:
    """One user's timestamp-ordered run of events, stored as parallel tuples."""

    user_id: int
    items: tuple[int, ...]
    ratings: tuple[float, ...]
    timestamps: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.items)


@dataclass(frozen=True)
class TestPair:
    __test__ = False  # not a pytest test class

    input: Session
    output: frozenset


@dataclass(eq=False)
class PDataset:
    """Train sessions plus test (input, output) pairs over a densely indexed catalog.

    Item ids inside sessions and outputs are dense ``0..n_items-1``;
    ``item_ids[k]`` is the raw id of dense item ``k``.
    """

    train_sessions: tuple[Session, ...]
    test_pairs: tuple[TestPair, ...]
    item_ids: np.ndarray
    protocol: Protocol
    source_id: str
    stage_counts: dict = field(default_factory=dict)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def catalog(self) -> frozenset:
        return frozenset(range(self.n_items))

    def __eq__(self, other) -> bool:
        if not isinstance(other, PDataset):
            return NotImplemented
        return (
            self.train_sessions == other.train_sessions
            and self.test_pairs == other.test_pairs
            and np.array_equal(self.item_ids, other.item_ids)
            and self.protocol == other.protocol
            and self.source_id == other.source_id
        )


def apply_rating_threshold(d: RawDataset, threshold: float) -> RawDataset:
    out = d.subset(d.ratings >= threshold)
    if len(out) == 0:
        raise ProtocolError("protocol eliminates all interactions")
    return out


def _counts_for(ids: np.ndarray, alive: np.ndarray) -> np.ndarray:
    """Per-row count of alive rows sharing the same id."""
    _, inverse = np.unique(ids, return_inverse=True)
    counts = np.bincount(inverse, weights=alive.astype(np.float64))
    return counts[inverse]


def kcore_filter(d: RawDataset, min_user: int, min_item: int, iterate: bool = True) -> RawDataset:
    """Drop users with fewer than ``min_user`` and items with fewer than ``min_item`` interactions.

    With ``iterate`` (the default) the two filters alternate until nothing
    changes, which yields the largest subset meeting both minimums.
    ``iterate=False`` applies one user pass followed by one item pass.
    """
    if min_user < 0 or min_item < 0:
        raise ConfigError("k-core minimums must be >= 0")
    alive = np.ones(len(d), dtype=bool)
    while True:
        before = alive.sum()
        alive &= _counts_for(d.users, alive) >= min_user
        alive &= _counts_for(d.items, alive) >= min_item
        if not iterate or alive.sum() == before:
            break
    if not alive.any():
        raise ProtocolError("protocol eliminates all interactions")
    return d.subset(alive)


def subsample_users(d: RawDataset, max_users: int, seed: int) -> RawDataset:
    if max_users < 1:
        raise ConfigError("max_users must be >= 1")
    users = np.unique(d.users)
    if len(users) <= max_users:
        return d
    keep = _rng(seed, _SUBSAMPLE_STREAM).choice(users, size=max_users, replace=False)
    return d.subset(np.isin(d.users, keep))


def _group_bounds(keys: np.ndarray) -> np.ndarray:
    """Start offsets of runs of equal consecutive keys, plus a final end offset."""
    if len(keys) == 0:
        return np.array([0])
    starts = np.flatnonzero(np.r_[True, keys[1:] != keys[:-1]])
    return np.r_[starts, len(keys)]


def cap_user_interactions(d: RawDataset, max_n: int) -> RawDataset:
    """Keep each user's ``max_n`` latest rows in ``(timestamp, item_id)`` order."""
    if max_n < 1:
        raise ConfigError("max_interactions_per_user must be >= 1")
    bounds = _group_bounds(d.users)
    ends = np.repeat(bounds[1:], np.diff(bounds))
    from_end = ends - np.arange(len(d))
    return d.subset(from_end <= max_n)


def sessionize(d: RawDataset, gap: int | None) -> list[Session]:
    """Cut each user's history wherever consecutive events are more than ``gap`` seconds apart."""
    n = len(d)
    if n == 0:
        return []
    cut = np.zeros(n, dtype=bool)
    cut[0] = True
    cut[1:] = d.users[1:] != d.users[:-1]
    if gap is not None:
        cut[1:] |= np.diff(d.timestamps) > gap
    starts = np.flatnonzero(cut).tolist() + [n]
    users, items = d.users.tolist(), d.items.tolist()
    ratings, stamps = d.ratings.tolist(), d.timestamps.tolist()
    return [
        Session(users[a], tuple(items[a:b]), tuple(ratings[a:b]), tuple(stamps[a:b]))
        for a, b in zip(starts[:-1], starts[1:])
    ]


def split_input_output(s: Session, strategy: str, n_out: int, seed: int = 0) -> TestPair | None:
    """Hold out ``n_out`` events of ``s`` as the relevant set; ``None`` when the session is too short.

    ``random-n`` draws from a generator keyed on the session itself, so the
    choice does not depend on which other sessions are split.
    """
    if n_out < 1:
        raise ConfigError("n_out must be >= 1")
    n = len(s)
    if n < n_out + 1:
        return None
    if strategy == "last-n":
        out_idx = set(range(n - n_out, n))
    elif strategy == "random-n":
        rng = _rng(seed, _OUTPUT_STREAM, s.user_id, s.timestamps[0], n)
        out_idx = set(rng.choice(n, size=n_out, replace=False).tolist())
    else:
        raise ConfigError(f"unknown output strategy {strategy!r}")
    output = frozenset(s.items[k] for k in out_idx)
    if len(output) < n_out:
        # a repeated item would shrink the relevant set; never pad it
        return None
    keep = [k for k in range(n) if k not in out_idx]
    inp = Session(
        s.user_id,
        tuple(s.items[k] for k in keep),
        tuple(s.ratings[k] for k in keep),
        tuple(s.timestamps[k] for k in keep),
    )
    return TestPair(inp, output)


def holdout_split(sessions, strategy: str, test_fraction: float, seed: int):
    """Split sessions into ``(train, test)`` lists.

    ``user-holdout`` sends each user to test with probability
    ``test_fraction``; ``temporal-global`` sends sessions ending after the
    ``1 - test_fraction`` quantile of session end times to test.
    """
    sessions = list(sessions)
    if len(sessions) < 2:
        raise ProtocolError("degenerate split: fewer than 2 sessions")
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError("test_fraction must lie in (0, 1)")
    if strategy == "user-holdout":
        users = sorted({s.user_id for s in sessions})
        draws = _rng(seed, _HOLDOUT_STREAM).random(len(users))
        test_users = {u for u, x in zip(users, draws.tolist()) if x < test_fraction}
        is_test = [s.user_id in test_users for s in sessions]
    elif strategy == "temporal-global":
        ends = [s.timestamps[-1] for s in sessions]
        cutoff = percentile_linear(ends, 100.0 * (1.0 - test_fraction))
        is_test = [e > cutoff for e in ends]
    else:
        raise ConfigError(f"unknown split strategy {strategy!r}")
    train = [s for s, t in zip(sessions, is_test) if not t]
    test = [s for s, t in zip(sessions, is_test) if t]
    if not train or not test:
        raise ProtocolError("degenerate split")
    return train, test


def _reindex(session: Session, mapping: dict) -> Session:
    return Session(session.user_id, tuple(mapping[i] for i in session.items),
                   session.ratings, session.timestamps)


def build_pdataset(d: RawDataset, p: Protocol) -> PDataset:
    counts = {"raw": len(d)}
    d = apply_rating_threshold(d, p.rating_threshold)
    counts["threshold"] = len(d)
    d = kcore_filter(d, p.min_user_interactions, p.min_item_interactions, iterate=p.kcore_iterate)
    counts["kcore"] = len(d)
    if p.max_users is not None:
        d = subsample_users(d, p.max_users, p.seed)
    counts["subsample"] = len(d)
    if p.max_interactions_per_user is not None:
        d = cap_user_interactions(d, p.max_interactions_per_user)
    counts["cap"] = len(d)
    sessions = sessionize(d, p.session_gap)
    counts["sessions"] = len(sessions)
    train, test = holdout_split(sessions, p.split_strategy, p.test_fraction, p.seed)
    pairs = [split_input_output(s, p.output_strategy, p.n_output_items, p.seed) for s in test]
    pairs = [tp for tp in pairs if tp is not None]
    if len(pairs) < MIN_TEST_PAIRS:
        raise ProtocolError(f"test set too small: {len(pairs)} pairs")

    raw_items = {i for s in train for i in s.items}
    for tp in pairs:
        raw_items.update(tp.input.items)
        raw_items.update(tp.output)
    item_ids = np.array(sorted(raw_items), dtype=np.int64)
    mapping = {raw: k for k, raw in enumerate(item_ids.tolist())}
    train_sessions = tuple(_reindex(s, mapping) for s in train)
    test_pairs = tuple(
        TestPair(_reindex(tp.input, mapping), frozenset(mapping[i] for i in tp.output)) for tp in pairs
    )
    counts["train_sessions"] = len(train_sessions)
    counts["test_pairs"] = len(test_pairs)
    counts["n_items"] = len(item_ids)
    item_ids.setflags(write=False)
    return PDataset(train_sessions, test_pairs, item_ids, p, d.source_id, counts)


_FIELD_NAMES = tuple(f.name for f in fields(Protocol))
_OPTIONAL_COUNT_FIELDS = ("max_interactions_per_user", "max_users", "session_gap")


def _normalize_value(name: str, value):
    if name in _OPTIONAL_COUNT_FIELDS:
        if value is None or (isinstance(value, str) and value.lower() in _UNLIMITED):
            return None
        return int(value)
    if name in ("rating_threshold", "test_fraction"):
        return float(value)
    if name in ("min_user_interactions", "min_item_interactions", "n_output_items", "seed"):
        if isinstance(value, bool) or int(value) != value:
            raise ConfigError(f"{name} must be an integer, got {value!r}")
        return int(value)
    if name == "kcore_iterate":
        if not isinstance(value, bool):
            raise ConfigError("kcore_iterate must be true or false")
        return value
    return str(value)


@dataclass(frozen=True)
class GridSpec:
    """Candidate values per protocol field; fields left out keep their default."""

    values: dict

    @classmethod
    def from_mapping(cls, mapping: dict) -> "GridSpec":
        unknown = sorted(set(mapping) - set(_FIELD_NAMES))
        if unknown:
            raise ConfigError(f"unknown grid keys: {', '.join(unknown)}")
        defaults = Protocol()
        values = {}
        for name in _FIELD_NAMES:
            raw = mapping.get(name, [getattr(defaults, name)])
            if not isinstance(raw, (list, tuple)):
                raw = [raw]
            if not raw:
                raise ConfigError(f"grid key {name!r} has an empty value list")
            try:
                normalized = [_normalize_value(name, v) for v in raw]
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"grid key {name!r}: {exc}") from None
            values[name] = tuple(dict.fromkeys(normalized))
        return cls(values)

    @property
    def size(self) -> int:
        n = 1
        for vals in self.values.values():
            n *= len(vals)
        return n


def enumerate_grid(g: GridSpec, cap: int = GRID_CAP) -> list[Protocol]:
    """Cartesian product of the grid, last field varying fastest."""
    if g.size > cap:
        raise ConfigError(f"grid too large: {g.size} protocols exceeds cap {cap}")
    names = list(_FIELD_NAMES)
    lists = [g.values.get(n, (getattr(Protocol(), n),)) for n in names]
    return [Protocol(**dict(zip(names, combo))) for combo in itertools.product(*lists)]
