"""Sequential Bayesian search over entity questions.

A Dirichlet belief over which unreviewed documents are the targets is
sharpened one yes/no/not-sure answer at a time: each question is the pool
entity that most evenly splits the current preference mass (generalized
binary search), and each answer adds agreement counts that re-rank the
candidates by counting and re-normalization.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Collection, Iterator, Sequence

import numpy as np

from .corpus import EntityIncidenceMatrix

QUESTION_TEMPLATE = "Are the documents you are interested in about {entity}?"

DEFAULT_ALPHA_FLOOR = 1e-6


def question_text(entity: str) -> str:
    return QUESTION_TEMPLATE.format(entity=entity)


class Answer(str, enum.Enum):
    YES = "yes"
    NO = "no"
    NOT_SURE = "not_sure"

    @classmethod
    def parse(cls, raw: str) -> "Answer":
        normalized = raw.strip().lower().replace(" ", "_").replace("-", "_")
        for member in cls:
            if member.value == normalized:
                return member
        raise ValueError(f"not a valid answer: {raw!r} (expected yes, no, or not_sure)")


AnswerSource = Callable[[str], Answer]
Selector = Callable[["Belief", "EntityPool", EntityIncidenceMatrix], str | None]


class EntityPool:
    """Ordered set of entities still available to ask about."""

    def __init__(self, labels: Sequence[str]):
        self._labels: list[str] = []
        self._members: set[str] = set()
        for label in labels:
            if label in self._members:
                raise ValueError(f"duplicate entity in pool: {label!r}")
            self._labels.append(label)
            self._members.add(label)

    def __len__(self) -> int:
        return len(self._labels)

    def __contains__(self, label: str) -> bool:
        return label in self._members

    def __iter__(self) -> Iterator[str]:
        return iter(self._labels)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(self._labels)

    def remove(self, label: str) -> None:
        if label not in self._members:
            raise ValueError(f"entity not in pool: {label!r}")
        self._members.discard(label)
        self._labels.remove(label)

    def copy(self) -> "EntityPool":
        return EntityPool(self._labels)


@dataclass(frozen=True)
class Belief:
    """Dirichlet parameters plus accumulated agreement counts.

    The candidate set is fixed for a session; alpha and counts are aligned
    to candidate_docs and never mutated in place.
    """

    candidate_docs: np.ndarray
    alpha: np.ndarray
    counts: np.ndarray

    def __post_init__(self) -> None:
        cand = np.asarray(self.candidate_docs, dtype=np.int64)
        alpha = np.asarray(self.alpha, dtype=np.float64)
        counts = np.asarray(self.counts, dtype=np.int64)
        if cand.size == 0:
            raise ValueError("candidate set must be non-empty")
        if not (cand.shape == alpha.shape == counts.shape):
            raise ValueError("candidate_docs, alpha, counts must be aligned")
        if np.unique(cand).size != cand.size:
            raise ValueError("candidate_docs must be unique")
        if not np.all(np.isfinite(alpha)) or alpha.sum() <= 0 or np.any(alpha < 0):
            raise ValueError("alpha must be nonnegative with positive total mass")
        if np.any(counts < 0):
            raise ValueError("counts must be nonnegative")
        for arr in (cand, alpha, counts):
            arr.setflags(write=False)
        object.__setattr__(self, "candidate_docs", cand)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "counts", counts)

    @property
    def n_candidates(self) -> int:
        return int(self.candidate_docs.size)

    def preference(self) -> np.ndarray:
        """Posterior-mean document preference: counting and re-normalization."""
        mass = self.alpha + self.counts
        return mass / mass.sum()


def init_belief(
    relevance_probs: np.ndarray,
    candidates: Sequence[int] | np.ndarray,
    alpha_floor: float = DEFAULT_ALPHA_FLOOR,
    prior_scale: float = 1.0,
) -> Belief:
    """Seed the belief from the learner's relevance probabilities.

    alpha(d) = prior_scale * max(p(d), alpha_floor); the floor keeps a
    zero-probability candidate rankable, and prior_scale trades prior
    strength against the unit count increments.
    """
    cand = np.asarray(list(candidates), dtype=np.int64)
    if cand.size == 0:
        raise ValueError("candidate set must be non-empty")
    if alpha_floor <= 0 or prior_scale <= 0:
        raise ValueError("alpha_floor and prior_scale must be positive")
    probs = np.asarray(relevance_probs, dtype=np.float64)
    if cand.max() >= probs.shape[0]:
        raise ValueError("relevance probabilities missing for some candidates")
    alpha = prior_scale * np.maximum(probs[cand], alpha_floor)
    return Belief(candidate_docs=cand, alpha=alpha, counts=np.zeros(cand.size, dtype=np.int64))


def preference_entropy(pi: np.ndarray) -> float:
    """Shannon entropy (nats) of a preference vector."""
    pi = np.asarray(pi, dtype=np.float64)
    nz = pi[pi > 0]
    return float(-(nz * np.log(nz)).sum())


def balance_scores(presence: np.ndarray, pi: np.ndarray) -> np.ndarray:
    """|sum_d (2*present(e,d) - 1) * pi(d)| per entity row.

    Zero means the entity splits the preference mass exactly in half.
    """
    signed = 2.0 * presence.astype(np.float64) - 1.0
    return np.abs(signed @ np.asarray(pi, dtype=np.float64))


def _argmin_entity(balances: np.ndarray, labels: Sequence[str], restricted_df: np.ndarray) -> int:
    best = balances.min()
    tied = np.flatnonzero(balances == best)
    if tied.size == 1:
        return int(tied[0])
    # Prefer broadly informative entities, then break ties lexically.
    return int(min(tied, key=lambda i: (-int(restricted_df[i]), labels[i])))


def select_question(
    belief: Belief,
    pool: EntityPool,
    matrix: EntityIncidenceMatrix,
) -> str | None:
    """The pool entity whose presence best halves the preference mass.

    Returns None when the pool is exhausted.
    """
    labels = pool.labels
    if not labels:
        return None
    presence = matrix.restricted(labels, belief.candidate_docs)
    balances = balance_scores(presence, belief.preference())
    restricted_df = presence.sum(axis=1)
    return labels[_argmin_entity(balances, labels, restricted_df)]


def apply_answer(
    belief: Belief,
    entity: str,
    answer: Answer,
    matrix: EntityIncidenceMatrix,
    pool: EntityPool,
) -> Belief:
    """Fold one answer into the belief and retire the entity.

    Yes increments counts for candidates containing the entity, no for
    candidates without it, and not-sure changes nothing; the entity leaves
    the pool in every case so it is never asked twice.
    """
    pool.remove(entity)  # raises if the entity was not an askable question
    if answer is Answer.NOT_SURE:
        return Belief(belief.candidate_docs, belief.alpha, belief.counts)
    present = matrix.row(entity)[belief.candidate_docs]
    agree = present if answer is Answer.YES else ~present
    return Belief(belief.candidate_docs, belief.alpha, belief.counts + agree.astype(np.int64))


def final_ranking(belief: Belief, lr_probs: np.ndarray | None = None) -> np.ndarray:
    """Candidates by descending preference, then learner score, then index."""
    pi = belief.preference()
    cand = belief.candidate_docs
    if lr_probs is None:
        tiebreak = np.zeros(cand.size, dtype=np.float64)
    else:
        tiebreak = np.asarray(lr_probs, dtype=np.float64)[cand]
    order = np.lexsort((cand, -tiebreak, -pi))
    return cand[order]


def random_selector(seed: int) -> Selector:
    """Uniform-random question choice; the baseline against searched order."""
    rng = np.random.default_rng(seed)

    def choose(belief: Belief, pool: EntityPool, matrix: EntityIncidenceMatrix) -> str | None:
        labels = pool.labels
        if not labels:
            return None
        return labels[int(rng.integers(len(labels)))]

    return choose


@dataclass
class QuestionRecord:
    entity: str
    answer: Answer
    entropy_before: float
    entropy_after: float
    last_rel_after: int | None = None

    def to_json_dict(self) -> dict:
        out = {"entity": self.entity, "answer": self.answer.value}
        if self.last_rel_after is not None:
            out["last_rel_after"] = self.last_rel_after
        return out


@dataclass
class SessionResult:
    ranking: np.ndarray
    transcript: list[QuestionRecord]
    belief: Belief
    pool_exhausted: bool
    initial_last_rel: int | None = None
    count_trace: list[np.ndarray] | None = None

    @property
    def questions_asked(self) -> int:
        return len(self.transcript)


def _last_position(ranking: np.ndarray, docs: Collection[int]) -> int:
    positions = np.flatnonzero(np.isin(ranking, list(docs)))
    if positions.size != len(set(docs)):
        raise ValueError("some target documents are missing from the ranking")
    return int(positions.max()) + 1


def run_session(
    belief: Belief,
    pool: EntityPool,
    matrix: EntityIncidenceMatrix,
    answer_source: AnswerSource,
    n_questions: int,
    *,
    lr_probs: np.ndarray | None = None,
    missing: Collection[int] | None = None,
    selector: Selector | None = None,
    record_trace: bool = False,
) -> SessionResult:
    """Ask up to n_questions, update the belief per answer, rank the rest.

    Stops early when the pool runs dry. When the true missing documents are
    known (simulation), the transcript carries the rank of the last one
    after every answer.
    """
    if n_questions < 0:
        raise ValueError("n_questions must be >= 0")
    choose = selector or select_question
    transcript: list[QuestionRecord] = []
    trace: list[np.ndarray] | None = [belief.counts] if record_trace else None
    initial_last_rel = None
    if missing:
        initial_last_rel = _last_position(final_ranking(belief, lr_probs), missing)

    exhausted = False
    current = belief
    for _ in range(n_questions):
        if len(pool) == 0:
            exhausted = True
            break
        entity = choose(current, pool, matrix)
        if entity is None:
            exhausted = True
            break
        answer = answer_source(entity)
        entropy_before = preference_entropy(current.preference())
        current = apply_answer(current, entity, answer, matrix, pool)
        record = QuestionRecord(
            entity=entity,
            answer=answer,
            entropy_before=entropy_before,
            entropy_after=preference_entropy(current.preference()),
        )
        if missing:
            record.last_rel_after = _last_position(final_ranking(current, lr_probs), missing)
        transcript.append(record)
        if trace is not None:
            trace.append(current.counts)

    return SessionResult(
        ranking=final_ranking(current, lr_probs),
        transcript=transcript,
        belief=current,
        pool_exhausted=exhausted or len(pool) == 0,
        initial_last_rel=initial_last_rel,
        count_trace=trace,
    )
