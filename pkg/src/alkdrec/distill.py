"""Fine-tuning the student on teacher rankings with a position-weighted pairwise loss."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .backbone import Adam, NegativeSampler, RecommenderModel, TrainingDiverged, pad_prefixes, pairwise_loss_and_grad
from .dataset import EvalInstance
from .metrics import evaluate
from .teacher import TeacherRanking

log = logging.getLogger(__name__)

# (last position of band, weight); positions past the last band weigh 0
DEFAULT_ALPHA = ((5, 3.0), (15, 2.0), (25, 1.0))


@dataclass
class DistillConfig:
    epochs: int = 50
    learning_rate: float = 1e-3
    negatives_per_positive: int = 1
    alpha: tuple[tuple[int, float], ...] = DEFAULT_ALPHA
    patience: int = 5
    batch_size: int = 1024
    seed: int = 0

    def __post_init__(self):
        if any(w < 0 for _, w in self.alpha):
            raise ValueError("alpha weights must be non-negative")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")


def alpha_weight(position: int, schedule: Sequence[tuple[int, float]] = DEFAULT_ALPHA) -> float:
    if position < 1:
        raise ValueError("positions are 1-based")
    for last, weight in schedule:
        if position <= last:
            return float(weight)
    return 0.0


def alpha_vector(n: int, schedule: Sequence[tuple[int, float]] = DEFAULT_ALPHA) -> np.ndarray:
    return np.array([alpha_weight(i, schedule) for i in range(1, n + 1)])


def _check_negatives(session_items, ranking_items, negatives) -> None:
    banned = set(session_items) | set(ranking_items)
    for v, neg in zip(ranking_items, negatives):
        if neg in banned:
            raise ValueError(f"negative {neg} for item {v} lies in the session or the ranking")


def distill_loss_and_grad(
    student: RecommenderModel,
    instance: EvalInstance,
    ranking: Sequence[int],
    negatives: Sequence[int],
    schedule: Sequence[tuple[int, float]] = DEFAULT_ALPHA,
) -> tuple[float, np.ndarray]:
    """``-sum_v alpha_v log sigma(s(v) - s(v'))`` over the ranked items, and its gradient."""
    ranking = list(ranking)
    if len(negatives) != len(ranking):
        raise ValueError("need one negative per ranked item")
    _check_negatives((*instance.prefix, instance.target), ranking, negatives)
    idx, mask = pad_prefixes([instance.prefix])
    return pairwise_loss_and_grad(
        student.item_embeddings, idx, mask,
        np.asarray([ranking]), np.asarray([list(negatives)]),
        weights=alpha_vector(len(ranking), schedule)[None, :],
        w_last=student.last_item_weight,
    )


def distill_loss(student, instance, ranking, negatives, schedule=DEFAULT_ALPHA) -> float:
    return distill_loss_and_grad(student, instance, ranking, negatives, schedule)[0]


def finetune(
    student: RecommenderModel,
    rankings: Sequence[TeacherRanking],
    instances: Mapping[int, EvalInstance],
    valid: Sequence[EvalInstance],
    cfg: DistillConfig,
) -> tuple[RecommenderModel, list[float]]:
    """Distill the rankings into a copy of ``student``.

    ``instances`` maps each ranked sid to its leave-one-out instance, whose
    prefix is the context for the ranked items. Negatives are redrawn every
    epoch. After each epoch the model is scored by ndcg@10 on ``valid``; the
    best model seen (the starting one included) is returned, and training
    stops after ``cfg.patience`` epochs without improvement. The returned
    history lists validation ndcg@10 from epoch 0.
    """
    if not rankings:
        raise ValueError("cannot distill from an empty batch")
    model = student.copy()
    E = model.item_embeddings
    rng = np.random.default_rng(cfg.seed)
    insts = [instances[r.sid] for r in rankings]
    n_rank = len(rankings[0].items)
    M = cfg.negatives_per_positive

    idx_all, mask_all = pad_prefixes([inst.prefix for inst in insts])
    pos_all = np.repeat(np.asarray([r.items for r in rankings], dtype=np.int64), M, axis=1)
    w_all = np.tile(np.repeat(alpha_vector(n_rank, cfg.alpha), M), (len(insts), 1))
    sampler = NegativeSampler(model.n_items, [(*inst.prefix, inst.target, *r.items) for inst, r in zip(insts, rankings)])
    rows = np.repeat(np.arange(len(insts))[:, None], n_rank * M, axis=1)
    per_step = max(1, cfg.batch_size // (n_rank * M))

    def score():
        return evaluate(model, valid, ks=(10,))["ndcg@10"] if valid else 0.0

    best = score()
    best_E = E.copy()
    history = [best]
    stale = 0
    opt = Adam(E.shape, lr=cfg.learning_rate)
    for epoch in range(1, cfg.epochs + 1):
        negs = sampler.sample(rows, rng)
        order = rng.permutation(len(insts))
        for start in range(0, len(insts), per_step):
            b = order[start : start + per_step]
            width = mask_all[b].sum(axis=1).max()
            loss, grad = pairwise_loss_and_grad(
                E, idx_all[b, :width], mask_all[b, :width], pos_all[b], negs[b], weights=w_all[b], w_last=model.last_item_weight
            )
            if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise TrainingDiverged(f"non-finite distillation loss at epoch {epoch}: {loss}")
            opt.step(E, grad / (len(b) * n_rank * M))
        current = score()
        history.append(current)
        log.debug("distill epoch %d valid ndcg@10 %.5f", epoch, current)
        if current > best:
            best, best_E, stale = current, E.copy(), 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    model.item_embeddings = best_E
    return model, history
