"""Mean-pooling session recommender used for both the teacher and the student.

A session prefix is encoded as the mean of its item embeddings (plus an
optional weighted copy of the last item's embedding), and an item's score is
the dot product of that encoding with the item's embedding.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import Session

log = logging.getLogger(__name__)

ROLES = ("teacher", "student")
_MAGIC = b"ALKD"
_VERSION = 1
_HEADER = struct.Struct("<4sIQQBd")


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class RecommenderModel:
    item_embeddings: np.ndarray
    role: str = "student"
    seed: int = 0
    last_item_weight: float = 0.0

    @property
    def n_items(self) -> int:
        return self.item_embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self.item_embeddings.shape[1]

    def copy(self) -> "RecommenderModel":
        return replace(self, item_embeddings=self.item_embeddings.copy())


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 1024
    epochs: int = 30
    negatives_per_positive: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.negatives_per_positive < 1:
            raise ValueError("negatives_per_positive must be >= 1")


def init_model(n_items: int, dim: int, seed: int, role: str = "student", last_item_weight: float = 0.0) -> RecommenderModel:
    if n_items < 1:
        raise ValueError("model needs at least one item")
    if dim < 1:
        raise ValueError("dimension must be >= 1")
    if role not in ROLES:
        raise ValueError(f"role must be one of {ROLES}")
    bound = 1.0 / np.sqrt(dim)
    emb = np.random.default_rng(seed).uniform(-bound, bound, size=(n_items, dim))
    return RecommenderModel(emb, role, seed, float(last_item_weight))


def encode(model: RecommenderModel, prefix: Sequence[int]) -> np.ndarray:
    if len(prefix) == 0:
        raise ValueError("cannot encode an empty prefix")
    idx = np.asarray(prefix, dtype=np.int64)
    E = model.item_embeddings
    enc = E[idx].mean(axis=0)
    if model.last_item_weight:
        enc = enc + model.last_item_weight * E[idx[-1]]
    return enc


def score(model: RecommenderModel, prefix: Sequence[int], item: int) -> float:
    if not 0 <= item < model.n_items:
        raise IndexError(f"unknown item {item}")
    return float(encode(model, prefix) @ model.item_embeddings[item])


def score_all(model: RecommenderModel, prefix: Sequence[int]) -> np.ndarray:
    return model.item_embeddings @ encode(model, prefix)


def rank(model: RecommenderModel, prefix: Sequence[int], k: int) -> np.ndarray:
    """Top-``k`` item ids by score, skipping prefix items; ties go to the smaller id."""
    seen = np.unique(np.asarray(prefix, dtype=np.int64))
    available = model.n_items - len(seen)
    if k > available:
        raise ValueError(f"requested top-{k} but only {available} items are outside the prefix")
    scores = score_all(model, prefix)
    candidates = np.setdiff1d(np.arange(model.n_items), seen, assume_unique=True)
    order = np.argsort(-scores[candidates], kind="stable")
    return candidates[order[:k]]


# -- batched encoding --------------------------------------------------------

def pad_prefixes(prefixes: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray]:
    """Right-pad prefixes with item 0 into an index matrix plus a boolean mask."""
    width = max(len(p) for p in prefixes)
    idx = np.zeros((len(prefixes), width), dtype=np.int64)
    mask = np.zeros((len(prefixes), width), dtype=bool)
    for row, p in enumerate(prefixes):
        idx[row, : len(p)] = p
        mask[row, : len(p)] = True
    return idx, mask


def _encode_batch(E: np.ndarray, idx: np.ndarray, mask: np.ndarray, w_last: float):
    """Returns encodings (B, d), per-entry pooling weights (B, L) and last-item index."""
    lengths = mask.sum(axis=1)
    weights = mask / lengths[:, None]
    last = idx[np.arange(len(idx)), lengths - 1]
    enc = np.einsum("bl,bld->bd", weights, E[idx])
    if w_last:
        enc = enc + w_last * E[last]
    return enc, weights, last


def _scatter_encoder_grad(grad: np.ndarray, idx, weights, last, w_last: float, g_enc: np.ndarray) -> None:
    # d enc / d E[idx[b, l]] = weights[b, l] (times identity)
    np.add.at(grad, idx.ravel(), (weights[:, :, None] * g_enc[:, None, :]).reshape(-1, grad.shape[1]))
    if w_last:
        np.add.at(grad, last, w_last * g_enc)


def batch_scores(model: RecommenderModel, prefixes: Sequence[Sequence[int]]) -> np.ndarray:
    """Score matrix (len(prefixes), n_items)."""
    idx, mask = pad_prefixes(prefixes)
    enc, _, _ = _encode_batch(model.item_embeddings, idx, mask, model.last_item_weight)
    return enc @ model.item_embeddings.T


def log_sigmoid(x: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -x)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def pairwise_loss_and_grad(
    E: np.ndarray,
    idx: np.ndarray,
    mask: np.ndarray,
    pos: np.ndarray,
    neg: np.ndarray,
    weights: np.ndarray | None = None,
    w_last: float = 0.0,
) -> tuple[float, np.ndarray]:
    """Weighted pairwise log-sigmoid loss ``-sum w * log sigma(s(pos) - s(neg))`` and its gradient.

    ``pos``/``neg`` may be (B,) or (B, M): M positive/negative pairs share one
    prefix row. ``weights`` broadcasts against the (B, M) view of ``pos``.
    """
    enc, pool_w, last = _encode_batch(E, idx, mask, w_last)
    pos2 = pos.reshape(len(idx), -1)
    neg2 = neg.reshape(len(idx), -1)
    w = np.ones(pos2.shape) if weights is None else np.broadcast_to(np.asarray(weights, dtype=np.float64), pos2.shape)

    diff_emb = E[pos2] - E[neg2]                           # (B, M, d)
    margin = np.einsum("bd,bmd->bm", enc, diff_emb)
    loss = float(-(w * log_sigmoid(margin)).sum())

    coef = -w * sigmoid(-margin)                           # dL/dmargin
    grad = np.zeros_like(E)
    g_item = coef[:, :, None] * enc[:, None, :]
    np.add.at(grad, pos2.ravel(), g_item.reshape(-1, E.shape[1]))
    np.add.at(grad, neg2.ravel(), -g_item.reshape(-1, E.shape[1]))
    g_enc = np.einsum("bm,bmd->bd", coef, diff_emb)
    _scatter_encoder_grad(grad, idx, pool_w, last, w_last, g_enc)
    return loss, grad


class Adam:
    """Adaptive-moment optimizer over a single dense parameter matrix."""

    def __init__(self, shape, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, param: np.ndarray, grad: np.ndarray) -> None:
        self.t += 1
        self.m *= self.beta1
        self.m += (1 - self.beta1) * grad
        self.v *= self.beta2
        self.v += (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        param -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


# -- negative sampling -------------------------------------------------------

class NegativeSampler:
    """Uniform negatives over items outside a per-row exclusion set."""

    def __init__(self, n_items: int, exclusions: Sequence[Sequence[int]]):
        self.n_items = n_items
        keys = [row * n_items + np.unique(np.asarray(ex, dtype=np.int64)) for row, ex in enumerate(exclusions)]
        self._keys = np.sort(np.concatenate(keys)) if keys else np.zeros(0, dtype=np.int64)
        sizes = np.array([len(set(ex)) for ex in exclusions])
        if len(sizes) and sizes.max() >= n_items:
            raise ValueError("an exclusion set covers every item; no negative exists")

    def _excluded(self, rows: np.ndarray, items: np.ndarray) -> np.ndarray:
        keys = rows * self.n_items + items
        pos = np.searchsorted(self._keys, keys)
        pos = np.minimum(pos, len(self._keys) - 1)
        return self._keys[pos] == keys if len(self._keys) else np.zeros(keys.shape, dtype=bool)

    def sample(self, rows: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.int64)
        out = rng.integers(0, self.n_items, size=rows.shape)
        bad = self._excluded(rows, out)
        while bad.any():
            out[bad] = rng.integers(0, self.n_items, size=int(bad.sum()))
            bad = self._excluded(rows, out)
        return out


# -- base training -----------------------------------------------------------

def session_pairs(sessions: Sequence[Session]) -> tuple[list[tuple[int, ...]], np.ndarray, np.ndarray]:
    """Every (prefix, next item) pair inside each session, with its source row."""
    prefixes, targets, rows = [], [], []
    for row, s in enumerate(sessions):
        for t in range(1, len(s.items)):
            prefixes.append(s.items[:t])
            targets.append(s.items[t])
            rows.append(row)
    return prefixes, np.asarray(targets, dtype=np.int64), np.asarray(rows, dtype=np.int64)


def train_bpr(model: RecommenderModel, sessions: Sequence[Session], cfg: TrainConfig) -> tuple[RecommenderModel, list[float]]:
    """Fit embeddings with the pairwise log-sigmoid objective.

    Returns the trained copy and a loss history whose entry 0 is the mean
    loss of the initial model and entry ``e`` the mean loss seen during epoch ``e``.
    """
    if not sessions:
        raise ValueError("training split is empty")
    model = model.copy()
    E = model.item_embeddings
    rng = np.random.default_rng(cfg.seed)
    prefixes, targets, rows = session_pairs(sessions)
    if not len(targets):
        raise ValueError("training sessions contain no (prefix, next item) pairs")
    idx_all, mask_all = pad_prefixes(prefixes)
    sampler = NegativeSampler(model.n_items, [s.items for s in sessions])
    M = cfg.negatives_per_positive
    n = len(targets)
    pos_all = np.repeat(targets[:, None], M, axis=1)

    neg0 = sampler.sample(np.repeat(rows[:, None], M, axis=1), rng)
    loss0, _ = pairwise_loss_and_grad(E, idx_all, mask_all, pos_all, neg0, w_last=model.last_item_weight)
    history = [loss0 / (n * M)]

    opt = Adam(E.shape, lr=cfg.learning_rate)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        negs = sampler.sample(np.repeat(rows[:, None], M, axis=1), rng)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            b = order[start : start + cfg.batch_size]
            width = mask_all[b].sum(axis=1).max()
            loss, grad = pairwise_loss_and_grad(
                E, idx_all[b, :width], mask_all[b, :width], pos_all[b], negs[b], w_last=model.last_item_weight
            )
            if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch starting {start}: loss={loss}, "
                    f"max|E|={np.abs(E).max():.3g}, lr={cfg.learning_rate}"
                )
            opt.step(E, grad / len(b))
            total += loss
        history.append(total / (n * M))
        log.debug("epoch %d loss %.5f", epoch, history[-1])
    return model, history


# -- model file --------------------------------------------------------------

def save_model(path: str | Path, model: RecommenderModel) -> None:
    """Binary header (magic, version, N, d, role, last-item weight) then row-major <f8 data."""
    header = _HEADER.pack(_MAGIC, _VERSION, model.n_items, model.dim, ROLES.index(model.role), model.last_item_weight)
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(model.item_embeddings, dtype="<f8").tobytes())
    tmp.replace(path)


def load_model(path: str | Path) -> RecommenderModel:
    data = Path(path).read_bytes()
    magic, version, n, d, role, w_last = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise ValueError(f"{path}: not a model file")
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported model version {version}")
    body = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    if body.size != n * d:
        raise ValueError(f"{path}: truncated model ({body.size} of {n * d} values)")
    return RecommenderModel(body.reshape(n, d).astype(np.float64), ROLES[role], 0, w_last)
