"""Seeded synthetic rating logs used as stand-ins for private datasets.

Users and items get Gaussian taste vectors. Each user draws a Poisson
number of distinct items with probability proportional to
``zipf_popularity * exp(affinity)``; ratings are an affine map of the
affinity plus noise, snapped to the 1-5 scale in half steps.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .ingest import RawDataset

RATING_SCALE = (1.0, 5.0, 0.5)
T0 = 1_000_000_000
MEAN_GAP_SECONDS = 1800.0


@dataclass(frozen=True)
class SynthSpec:
    n_users: int = 1000
    n_items: int = 500
    popularity_skew: float = 1.0
    taste_dim: int = 8
    mean_events_per_user: float = 40.0
    rating_noise: float = 0.5
    seed: int = 0
    nonnegative_factors: bool = False
    source_id: str = "synthetic"

    def __post_init__(self):
        if self.n_users < 1 or self.n_items < 1 or self.taste_dim < 1:
            raise ConfigError("n_users, n_items and taste_dim must be >= 1")
        if self.popularity_skew <= 0:
            raise ConfigError("popularity_skew must be positive")
        if self.mean_events_per_user < 0:
            raise ConfigError("mean_events_per_user must be non-negative")
        if self.rating_noise < 0:
            raise ConfigError("rating_noise must be non-negative")


def generate_synthetic_with_factors(s: SynthSpec):
    """Like :func:`generate_synthetic` but also returns the user and item factor matrices."""
    if s.n_users * s.mean_events_per_user == 0:
        raise DataError("expected event count is 0")
    rng = np.random.default_rng(int(s.seed) & 0xFFFF_FFFF_FFFF_FFFF)
    scale = 1.0 / np.sqrt(s.taste_dim)
    user_f = rng.normal(0.0, np.sqrt(scale), (s.n_users, s.taste_dim))
    item_f = rng.normal(0.0, np.sqrt(scale), (s.n_items, s.taste_dim))
    if s.nonnegative_factors:
        user_f, item_f = np.abs(user_f), np.abs(item_f)
    # Zipf popularity over a random item order so popularity is unrelated to id
    pop_rank = rng.permutation(s.n_items)
    log_pop = -s.popularity_skew * np.log1p(pop_rank)
    counts = np.minimum(rng.poisson(s.mean_events_per_user, s.n_users), s.n_items)

    users, items, ratings, stamps = [], [], [], []
    for u in range(s.n_users):
        n = int(counts[u])
        if n == 0:
            continue
        affinity = item_f @ user_f[u]
        # Gumbel top-n samples n distinct items proportional to the weights
        keys = log_pop + affinity + rng.gumbel(size=s.n_items)
        chosen = np.argpartition(-keys, n - 1)[:n]
        chosen = chosen[np.argsort(-keys[chosen], kind="stable")]
        raw = 3.0 + 1.5 * affinity[chosen] + rng.normal(0.0, 1.0, n) * s.rating_noise
        r = np.clip(np.round(raw * 2.0) / 2.0, *RATING_SCALE[:2])
        start = T0 + int(rng.integers(0, 365 * 86400))
        gaps = np.ceil(rng.exponential(MEAN_GAP_SECONDS, n)).astype(np.int64) + 1
        users.append(np.full(n, u))
        items.append(chosen)
        ratings.append(r)
        stamps.append(start + np.cumsum(gaps))
    if not users:
        raise DataError("empty dataset")
    d = RawDataset.from_columns(
        np.concatenate(users), np.concatenate(items), np.concatenate(ratings),
        np.concatenate(stamps), s.source_id, RATING_SCALE,
    )
    return d, user_f, item_f


def generate_synthetic(s: SynthSpec) -> RawDataset:
    return generate_synthetic_with_factors(s)[0]
