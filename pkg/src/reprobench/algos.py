"""The algorithm pool: Random, Best-Of, ItemKNN, PureSVD-style SVD and a one-hidden-layer MLP.

Every model is fitted on binary session data over a dense catalog
``0..n_items-1`` and ranks items for an input list of item ids. Ranking
ties are always broken by ascending item id.
"""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .errors import ConfigError, DataError, TrainingError
from .protocol import split_input_output

log = logging.getLogger(__name__)

KINDS = ("random", "best_of", "item_knn", "svd", "mlp")

DEFAULT_HYPERPARAMETERS = {
    "random": {},
    "best_of": {},
    "item_knn": {"n_neighbors": 50},
    "svd": {"rank": 20, "n_power_iterations": 2, "oversampling": 10},
    "mlp": {"hidden_dim": 64, "epochs": 10, "learning_rate": 0.01, "batch_size": 128},
}

_SCORE_CHUNK = 1024


@dataclass(frozen=True)
class AlgoSpec:
    kind: str
    hyperparameters: dict = field(default_factory=dict)
    seed: int = 0
    name: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown algorithm kind {self.kind!r}; expected one of {KINDS}")
        allowed = DEFAULT_HYPERPARAMETERS[self.kind]
        unknown = sorted(set(self.hyperparameters) - set(allowed))
        if unknown:
            raise ConfigError(f"{self.kind}: unknown hyperparameters {unknown}")
        merged = {**allowed, **self.hyperparameters}
        for key, value in merged.items():
            if isinstance(value, bool) or not isinstance(value, (int, float)) or value <= 0:
                raise ConfigError(f"{self.kind}: hyperparameter {key} must be positive, got {value!r}")
        object.__setattr__(self, "hyperparameters", merged)

    @property
    def id(self) -> str:
        return self.name or self.kind

    def to_dict(self) -> dict:
        return {"kind": self.kind, "name": self.id, "hyperparameters": dict(self.hyperparameters),
                "seed": self.seed}


@dataclass(frozen=True)
class RankedList:
    items: tuple[int, ...]
    scores: tuple[float, ...]

    def __len__(self) -> int:
        return len(self.items)


def _seed_words(seed: int) -> int:
    return int(seed) & 0xFFFF_FFFF_FFFF_FFFF


def interaction_matrix(sessions, n_items: int) -> sp.csr_matrix:
    """Binary user x item matrix; rows are the distinct users in ``sessions`` in ascending id order."""
    users = sorted({s.user_id for s in sessions})
    row_of = {u: r for r, u in enumerate(users)}
    rows, cols = [], []
    for s in sessions:
        r = row_of[s.user_id]
        rows.extend([r] * len(s.items))
        cols.extend(s.items)
    m = sp.csr_matrix(
        (np.ones(len(rows)), (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64))),
        shape=(len(users), n_items),
    )
    m.data[:] = 1.0  # duplicate (user, item) entries were summed
    return m


def multi_hot(inputs, n_items: int) -> sp.csr_matrix:
    rows, cols = [], []
    for r, items in enumerate(inputs):
        rows.extend([r] * len(items))
        cols.extend(items)
    m = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(inputs), n_items))
    m.data[:] = 1.0
    return m


class RecModel:
    """Fitted recommender; subclasses implement :meth:`score_batch`."""

    def __init__(self, spec: AlgoSpec, n_items: int):
        self.spec = spec
        self.n_items = n_items

    def score_batch(self, inputs) -> np.ndarray:
        raise NotImplementedError

    def _clean(self, inputs):
        cleaned = []
        n_unknown = 0
        for items in inputs:
            known = sorted({int(i) for i in items if 0 <= int(i) < self.n_items})
            n_unknown += len({int(i) for i in items}) - len(known)
            cleaned.append(known)
        if n_unknown:
            log.warning("%s: ignored %d input items outside the catalog", self.spec.id, n_unknown)
        return cleaned

    def recommend_batch(self, inputs, k: int) -> list[RankedList]:
        if k < 1:
            raise DataError("k must be >= 1")
        inputs = self._clean(inputs)
        out = []
        for start in range(0, len(inputs), _SCORE_CHUNK):
            chunk = inputs[start:start + _SCORE_CHUNK]
            scores = np.asarray(self.score_batch(chunk), dtype=np.float64)
            for row, items in zip(scores, chunk):
                eligible = self.n_items - len(items)
                if eligible <= 0:
                    raise DataError("empty eligible catalog")
                row = row.copy()
                row[items] = -np.inf
                # stable sort on negated scores keeps ascending item id among ties
                top = np.argsort(-row, kind="stable")[: min(k, eligible)]
                out.append(RankedList(tuple(top.tolist()), tuple(row[top].tolist())))
        return out

    def recommend(self, input_items, k: int) -> RankedList:
        return self.recommend_batch([input_items], k)[0]


class RandomModel(RecModel):
    def score_batch(self, inputs):
        rows = []
        for items in inputs:
            digest = hashlib.blake2b(np.asarray(items, dtype=np.int64).tobytes(), digest_size=8).digest()
            rng = np.random.default_rng([_seed_words(self.spec.seed), int.from_bytes(digest, "little")])
            rows.append(rng.random(self.n_items))
        return np.vstack(rows)


class BestOfModel(RecModel):
    def __init__(self, spec, n_items, sessions):
        super().__init__(spec, n_items)
        items = np.fromiter((i for s in sessions for i in s.items), dtype=np.int64)
        self.popularity = np.bincount(items, minlength=n_items).astype(np.float64)

    def score_batch(self, inputs):
        return np.broadcast_to(self.popularity, (len(inputs), self.n_items))


def cosine_item_similarity(user_item: sp.csr_matrix) -> np.ndarray:
    """Dense item x item cosine similarity of binary columns; zero diagonal."""
    x = user_item.tocsc().astype(np.float64)
    co = (x.T @ x).toarray()
    norms = np.sqrt(np.diag(co).copy())
    norms[norms == 0] = 1.0
    sim = co / norms[:, None] / norms[None, :]
    np.fill_diagonal(sim, 0.0)
    return sim


def truncate_neighbors(sim: np.ndarray, n_neighbors: int) -> sp.csr_matrix:
    """Keep the ``n_neighbors`` largest positive entries of each row (lower item id wins ties)."""
    n = sim.shape[0]
    order = np.argsort(-sim, axis=1, kind="stable")[:, :n_neighbors]
    vals = np.take_along_axis(sim, order, axis=1)
    rows = np.repeat(np.arange(n), order.shape[1])
    keep = vals.ravel() > 0
    return sp.csr_matrix((vals.ravel()[keep], (rows[keep], order.ravel()[keep])), shape=sim.shape)


class ItemKNNModel(RecModel):
    """Score of candidate ``j`` is the sum over input items ``i`` of ``sim(i, j)`` among i's stored neighbors."""

    def __init__(self, spec, n_items, sessions):
        super().__init__(spec, n_items)
        sim = cosine_item_similarity(interaction_matrix(sessions, n_items))
        self.neighbors = truncate_neighbors(sim, int(spec.hyperparameters["n_neighbors"]))

    def score_batch(self, inputs):
        return np.asarray((multi_hot(inputs, self.n_items) @ self.neighbors).todense())


def randomized_svd(a, rank: int, n_power_iterations: int = 2, oversampling: int = 10, seed=0):
    """Truncated SVD via a seeded Gaussian range finder with power iterations.

    Returns ``(u, s, vt)`` with ``rank`` components. ``a`` may be dense or sparse.
    """
    m, n = a.shape
    if rank < 1 or rank >= min(m, n):
        raise ConfigError(f"svd rank {rank} must be in [1, min(n_users, n_items)) = [1, {min(m, n)})")
    width = min(rank + oversampling, min(m, n))
    rng = np.random.default_rng(_seed_words(seed))
    q, _ = np.linalg.qr(a @ rng.standard_normal((n, width)))
    for _ in range(n_power_iterations):
        z, _ = np.linalg.qr(a.T @ q)
        q, _ = np.linalg.qr(a @ z)
    b = np.asarray((a.T @ q).T)
    ub, s, vt = np.linalg.svd(b, full_matrices=False)
    u = q @ ub
    return u[:, :rank], s[:rank], vt[:rank]


class SVDModel(RecModel):
    """Input sessions are folded in as the mean of their items' right-singular-vector rows."""

    def __init__(self, spec, n_items, sessions):
        super().__init__(spec, n_items)
        hp = spec.hyperparameters
        r = interaction_matrix(sessions, n_items)
        _, self.singular_values, vt = randomized_svd(
            r, int(hp["rank"]), int(hp["n_power_iterations"]), int(hp["oversampling"]), spec.seed
        )
        self.item_factors = np.ascontiguousarray(vt.T)

    def score_batch(self, inputs):
        x = multi_hot(inputs, self.n_items)
        lengths = np.maximum(np.asarray(x.sum(axis=1)).ravel(), 1.0)
        query = np.asarray(x @ self.item_factors) / lengths[:, None]
        return query @ self.item_factors.T


@dataclass
class MLPWeights:
    w1: np.ndarray  # (n_items, hidden)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden, n_items)
    b2: np.ndarray  # (n_items,)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.w1.ravel(), self.b1, self.w2.ravel(), self.b2])

    @classmethod
    def from_flat(cls, vec, n_items: int, hidden: int) -> "MLPWeights":
        sizes = [n_items * hidden, hidden, hidden * n_items, n_items]
        parts = np.split(np.asarray(vec, dtype=np.float64), np.cumsum(sizes)[:-1])
        return cls(parts[0].reshape(n_items, hidden), parts[1], parts[2].reshape(hidden, n_items), parts[3])

    @classmethod
    def zeros(cls, n_items: int, hidden: int) -> "MLPWeights":
        return cls(np.zeros((n_items, hidden)), np.zeros(hidden), np.zeros((hidden, n_items)), np.zeros(n_items))


def _forward(w: MLPWeights, x):
    z1 = np.asarray(x @ w.w1) + w.b1
    h = np.maximum(z1, 0.0)
    return z1, h, h @ w.w2 + w.b2


def mlp_loss_and_grad(weights: MLPWeights, batch):
    """Binary cross-entropy of the MLP on ``batch = (x, y)`` and its exact gradient.

    The loss is summed over output items and averaged over batch rows, so
    all-zero weights give ``ln 2`` per output item. ``x`` may be sparse.
    """
    x, y = batch
    y = np.asarray(y, dtype=np.float64)
    n_rows = y.shape[0]
    if n_rows == 0:
        raise DataError("empty batch")
    x_data = x.data if sp.issparse(x) else np.asarray(x)
    if not (np.all(np.isfinite(x_data)) and np.all(np.isfinite(y))
            and all(np.all(np.isfinite(p)) for p in (weights.w1, weights.b1, weights.w2, weights.b2))):
        raise DataError("non-finite input to mlp_loss_and_grad")
    z1, h, z2 = _forward(weights, x)
    # softplus(z) - y*z is the logistic loss written to avoid overflow
    loss = float((np.logaddexp(0.0, z2) - y * z2).sum() / n_rows)
    dz2 = (expit(z2) - y) / n_rows
    dh = dz2 @ weights.w2.T
    dz1 = dh * (z1 > 0)
    grad = MLPWeights(
        w1=np.asarray(x.T @ dz1),
        b1=dz1.sum(axis=0),
        w2=h.T @ dz2,
        b2=dz2.sum(axis=0),
    )
    return loss, grad


def mlp_training_pairs(sessions, n_items: int, output_strategy: str, n_output_items: int, seed: int):
    """(input multi-hot, output multi-hot) rows built with the protocol's input/output split."""
    inputs, outputs = [], []
    for s in sessions:
        pair = split_input_output(s, output_strategy, n_output_items, seed)
        if pair is None:
            continue
        inputs.append(pair.input.items)
        outputs.append(sorted(pair.output))
    if not inputs:
        raise DataError("mlp: no training session is long enough for an input/output split")
    return multi_hot(inputs, n_items), multi_hot(outputs, n_items)


class MLPModel(RecModel):
    def __init__(self, spec, n_items, sessions, output_strategy="last-n", n_output_items=1):
        super().__init__(spec, n_items)
        hp = spec.hyperparameters
        hidden, epochs = int(hp["hidden_dim"]), int(hp["epochs"])
        lr, batch_size = float(hp["learning_rate"]), int(hp["batch_size"])
        x_all, y_all = mlp_training_pairs(sessions, n_items, output_strategy, n_output_items, spec.seed)
        rng = np.random.default_rng(_seed_words(spec.seed))
        limit = np.sqrt(6.0 / (n_items + hidden))
        base_rate = np.clip(np.asarray(y_all.mean(axis=0)).ravel(), 1e-4, 1 - 1e-4)
        w = MLPWeights(
            w1=rng.uniform(-limit, limit, (n_items, hidden)),
            b1=np.zeros(hidden),
            w2=rng.uniform(-limit, limit, (hidden, n_items)),
            # start the output layer at the label log-odds
            b2=np.log(base_rate / (1 - base_rate)),
        )
        n = x_all.shape[0]
        self.loss_history = []
        for _ in range(epochs):
            perm = rng.permutation(n)
            total = 0.0
            for start in range(0, n, batch_size):
                idx = perm[start:start + batch_size]
                loss, g = mlp_loss_and_grad(w, (x_all[idx], y_all[idx].toarray()))
                if not np.isfinite(loss):
                    raise TrainingError("training diverged")
                w.w1 -= lr * g.w1
                w.b1 -= lr * g.b1
                w.w2 -= lr * g.w2
                w.b2 -= lr * g.b2
                total += loss * len(idx)
            epoch_loss = total / n
            if not np.isfinite(epoch_loss) or not all(np.all(np.isfinite(p)) for p in (w.w1, w.w2)):
                raise TrainingError("training diverged")
            self.loss_history.append(epoch_loss)
        self.weights = w

    def score_batch(self, inputs):
        # logits rank identically to the sigmoid probabilities and tie less often
        return _forward(self.weights, multi_hot(inputs, self.n_items))[2]


def fit(spec: AlgoSpec, train_sessions, n_items: int, output_strategy: str = "last-n",
        n_output_items: int = 1) -> RecModel:
    """Fit one algorithm on binary train sessions over a dense catalog of ``n_items``.

    ``output_strategy`` and ``n_output_items`` only matter for the MLP, whose
    training pairs mirror the protocol's test-time input/output split.
    """
    train_sessions = list(train_sessions)
    if not train_sessions:
        raise DataError("empty training set")
    if n_items < 2:
        raise DataError("catalog needs at least 2 items")
    if spec.kind == "random":
        return RandomModel(spec, n_items)
    if spec.kind == "best_of":
        return BestOfModel(spec, n_items, train_sessions)
    if spec.kind == "item_knn":
        return ItemKNNModel(spec, n_items, train_sessions)
    if spec.kind == "svd":
        return SVDModel(spec, n_items, train_sessions)
    return MLPModel(spec, n_items, train_sessions, output_strategy, n_output_items)


def fit_pdataset(spec: AlgoSpec, d) -> RecModel:
    return fit(spec, d.train_sessions, d.n_items, d.protocol.output_strategy, d.protocol.n_output_items)


def recommend(model: RecModel, input_items, k: int) -> RankedList:
    return model.recommend(input_items, k)

