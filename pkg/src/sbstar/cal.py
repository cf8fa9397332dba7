"""Continuous active learning: seed, train, review top-scored batches, repeat.

The loop reviews growing batches of the highest-scored unreviewed documents
until a configured fraction of the collection has been labeled, then hands
its final relevance probabilities to the question-search phase.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.special import expit

from .corpus import DocumentStore, FeatureMatrix, Qrels, Topic

log = logging.getLogger(__name__)

PSEUDO_NEGATIVES_PER_ROUND = 100


@dataclass(frozen=True)
class LrHyper:
    """Gradient-descent settings for the relevance model."""

    l2_lambda: float = 1e-4
    learning_rate: float = 0.1
    max_epochs: int = 200
    tolerance: float = 1e-6


@dataclass
class LrModel:
    weights: np.ndarray
    bias: float
    hyper: LrHyper

    def decision(self, rows: sparse.csr_matrix) -> np.ndarray:
        return np.asarray(rows @ self.weights).ravel() + self.bias


@dataclass(frozen=True)
class ReviewRecord:
    doc_index: int
    label: int
    round: int


@dataclass
class CalState:
    """Everything the post-stop phase needs from a finished review run."""

    topic_id: str
    stop_ratio: float
    seed: int
    reviewed: list[ReviewRecord]
    relevance_probs: np.ndarray
    rounds: int
    model: LrModel | None = None

    def reviewed_docs(self) -> list[int]:
        return [r.doc_index for r in self.reviewed]

    def reviewed_set(self) -> set[int]:
        return {r.doc_index for r in self.reviewed}

    def unreviewed_docs(self, n_documents: int) -> np.ndarray:
        mask = np.ones(n_documents, dtype=bool)
        mask[[r.doc_index for r in self.reviewed]] = False
        return np.flatnonzero(mask)

    def to_json_dict(self) -> dict:
        return {
            "topic_id": self.topic_id,
            "stop_ratio": self.stop_ratio,
            "seed": self.seed,
            "rounds": self.rounds,
            "reviewed": [[r.doc_index, r.label, r.round] for r in self.reviewed],
            "relevance_probs": [float(p) for p in self.relevance_probs],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "CalState":
        return cls(
            topic_id=data["topic_id"],
            stop_ratio=float(data["stop_ratio"]),
            seed=int(data["seed"]),
            rounds=int(data["rounds"]),
            reviewed=[ReviewRecord(int(d), int(l), int(r)) for d, l, r in data["reviewed"]],
            relevance_probs=np.asarray(data["relevance_probs"], dtype=np.float64),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "CalState":
        return cls.from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def checkpoint_path(checkpoint_dir: str | Path, topic_id: str, stop_ratio: float) -> Path:
    """Canonical checkpoint location for a (topic, stopping point) pair."""
    return Path(checkpoint_dir) / f"{topic_id}__r{stop_ratio:.4f}.json"


def pseudo_negative_count(n_documents: int) -> int:
    """100 random presumed-nonrelevant docs per round, or N/10 if smaller."""
    return max(1, min(PSEUDO_NEGATIVES_PER_ROUND, n_documents // 10))


def _round_examples(
    topic: Topic,
    store: DocumentStore,
    features: FeatureMatrix,
    rng: np.random.Generator,
    reviewed: Sequence[ReviewRecord] = (),
) -> tuple[sparse.csr_matrix, np.ndarray]:
    """Training set for one round: the synthetic topic-title positive, all
    reviewed documents with their labels, and pseudo-negatives resampled
    from the unreviewed pool so the negative class stays representative."""
    if len(store) == 0:
        raise ValueError("cannot seed training from an empty store")
    if not topic.title_text.strip():
        raise ValueError(f"topic {topic.topic_id!r} has an empty title")
    unreviewed = np.ones(len(store), dtype=bool)
    if reviewed:
        unreviewed[[r.doc_index for r in reviewed]] = False
    pool = np.flatnonzero(unreviewed)
    n_neg = min(pseudo_negative_count(len(store)), pool.size)
    blocks = [features.transform_text(topic.title_text)]
    labels = [np.ones(1, dtype=np.float64)]
    if reviewed:
        blocks.append(features.rows([r.doc_index for r in reviewed]))
        labels.append(np.array([r.label for r in reviewed], dtype=np.float64))
    if n_neg > 0:
        negatives = np.sort(rng.choice(pool, size=n_neg, replace=False))
        blocks.append(features.rows(negatives))
        labels.append(np.zeros(n_neg, dtype=np.float64))
    x = sparse.vstack(blocks, format="csr")
    return x, np.concatenate(labels)


def seed_training(
    topic: Topic,
    store: DocumentStore,
    features: FeatureMatrix,
    rng: np.random.Generator,
) -> tuple[sparse.csr_matrix, np.ndarray]:
    """Initial labeled examples: a synthetic positive built from the topic
    title plus uniformly sampled presumed-nonrelevant documents."""
    return _round_examples(topic, store, features, rng)


def train_model(x: sparse.csr_matrix, y: np.ndarray, hyper: LrHyper | None = None) -> LrModel:
    """Fit L2-regularized logistic regression by full-batch gradient descent.

    Runs until the gradient norm drops below the tolerance or max_epochs is
    reached; the step size decays as learning_rate / sqrt(epoch).
    """
    hyper = hyper or LrHyper()
    y = np.asarray(y, dtype=np.float64)
    n = x.shape[0]
    if n == 0 or y.shape[0] != n:
        raise ValueError("examples and labels must be non-empty and aligned")
    n_pos = int((y == 1).sum())
    if n_pos == 0 or n_pos == n:
        raise ValueError("training requires at least one positive and one negative example")

    w = np.zeros(x.shape[1], dtype=np.float64)
    b = 0.0
    xt = x.T.tocsr()
    for epoch in range(1, hyper.max_epochs + 1):
        p = expit(np.asarray(x @ w).ravel() + b)
        err = p - y
        grad_w = np.asarray(xt @ err).ravel() / n + hyper.l2_lambda * w
        grad_b = float(err.mean())
        grad_norm = math.sqrt(float(grad_w @ grad_w) + grad_b * grad_b)
        if grad_norm < hyper.tolerance:
            break
        step = hyper.learning_rate / math.sqrt(epoch)
        w -= step * grad_w
        b -= step * grad_b
    if not (np.all(np.isfinite(w)) and math.isfinite(b)):
        raise ValueError("training diverged to non-finite weights")
    return LrModel(weights=w, bias=b, hyper=hyper)


def score(model: LrModel, features: FeatureMatrix, docs: Sequence[int] | np.ndarray | None = None) -> np.ndarray:
    """Relevance probability sigmoid(w.x + b) per document."""
    rows = features.matrix if docs is None else features.rows(docs)
    return expit(model.decision(rows))


def next_batch(probs: np.ndarray, reviewed: set[int], batch_size: int) -> list[int]:
    """Top unreviewed documents by probability, ties by ascending doc index."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    probs = np.asarray(probs, dtype=np.float64)
    mask = np.ones(probs.shape[0], dtype=bool)
    if reviewed:
        mask[list(reviewed)] = False
    pool = np.flatnonzero(mask)
    if pool.size == 0:
        return []
    order = np.lexsort((pool, -probs[pool]))
    return pool[order][:batch_size].tolist()


def grow_batch(batch_size: int, growth: float = 0.1) -> int:
    """Next review batch size: B + ceil(B * growth), 10% growth by default."""
    if growth <= 0:
        raise ValueError("batch growth must be positive")
    return batch_size + math.ceil(batch_size * growth)


def run_cal_checkpoints(
    store: DocumentStore,
    features: FeatureMatrix,
    topic: Topic,
    qrels: Qrels,
    stop_ratios: Sequence[float],
    hyper: LrHyper | None = None,
    seed: int = 0,
    batch_growth: float = 0.1,
) -> dict[float, CalState]:
    """One review run captured at several stopping points.

    A snapshot at ratio r is identical to a dedicated run with stop_ratio=r:
    training precedes reviewing within a round, so the state at the first
    crossing of ceil(r*N) reviewed documents does not depend on any later
    stopping point.
    """
    ratios = sorted(set(float(r) for r in stop_ratios))
    if not ratios:
        raise ValueError("need at least one stop ratio")
    for r in ratios:
        if not 0 < r <= 1:
            raise ValueError(f"stop_ratio must be in (0, 1], got {r}")
    if topic.topic_id not in qrels:
        raise ValueError(f"topic {topic.topic_id!r} missing from qrels")
    n = len(store)
    if n == 0:
        raise ValueError("cannot run review on an empty store")

    targets = {r: math.ceil(r * n) for r in ratios}
    max_target = max(targets.values())
    rng = np.random.default_rng(seed)

    reviewed: list[ReviewRecord] = []
    reviewed_set: set[int] = set()
    states: dict[float, CalState] = {}
    batch_size = 1
    round_no = 0
    hyper = hyper or LrHyper()

    def label_of(doc_index: int) -> int:
        return qrels.label(topic.topic_id, store[doc_index].external_id)

    while len(reviewed) < max_target:
        round_no += 1
        x, y = _round_examples(topic, store, features, rng, reviewed)
        if not ((y == 1).any() and (y == 0).any()):
            raise ValueError("review loop produced a single-class training set")
        model = train_model(x, y, hyper)
        probs = score(model, features)

        batch = next_batch(probs, reviewed_set, batch_size)
        if not batch:
            break
        # Capture any stopping point this round's batch crosses; a dedicated
        # run would have clipped the batch to the target, i.e. taken a prefix.
        for r in ratios:
            if r in states:
                continue
            if len(reviewed) + len(batch) >= targets[r]:
                take = targets[r] - len(reviewed)
                snap = reviewed + [
                    ReviewRecord(d, label_of(d), round_no) for d in batch[:take]
                ]
                states[r] = CalState(
                    topic_id=topic.topic_id,
                    stop_ratio=r,
                    seed=seed,
                    reviewed=snap,
                    relevance_probs=probs.copy(),
                    rounds=round_no,
                    model=model,
                )
        take = min(len(batch), max_target - len(reviewed))
        for d in batch[:take]:
            reviewed.append(ReviewRecord(d, label_of(d), round_no))
            reviewed_set.add(d)
        batch_size = grow_batch(batch_size, batch_growth)

    missing_ratios = [r for r in ratios if r not in states]
    if missing_ratios:
        raise RuntimeError(f"review loop ended before reaching stop ratios {missing_ratios}")
    log.info(
        "topic %s: reviewed %d/%d docs over %d rounds (stop ratios %s)",
        topic.topic_id, len(reviewed), n, round_no, ratios,
    )
    return states


def run_cal(
    store: DocumentStore,
    features: FeatureMatrix,
    topic: Topic,
    qrels: Qrels,
    stop_ratio: float,
    hyper: LrHyper | None = None,
    seed: int = 0,
    batch_growth: float = 0.1,
) -> CalState:
    """Review until ceil(stop_ratio * N) documents are labeled."""
    return run_cal_checkpoints(
        store, features, topic, qrels, [stop_ratio], hyper, seed, batch_growth,
    )[float(stop_ratio)]
