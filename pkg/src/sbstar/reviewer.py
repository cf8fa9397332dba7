"""Answer sources: the full-knowledge simulated reviewer and test scripting.

The simulated reviewer answers relative to the whole missing set jointly:
yes only when the entity appears in every missing relevant document, no
only when it appears in none, not-sure for anything in between.
"""

from __future__ import annotations

from collections import deque
from typing import Collection, Iterable

import numpy as np

from .cal import CalState
from .corpus import DocumentStore, EntityIncidenceMatrix, Qrels
from .search import Answer


def compute_missing(
    qrels: Qrels,
    topic_id: str,
    cal_state: CalState,
    store: DocumentStore,
) -> frozenset[int]:
    """Relevant documents the review phase never reached.

    An empty result is a valid outcome: the review found everything and the
    question phase is skipped.
    """
    relevant = qrels.relevant_indices(topic_id, store)
    return frozenset(relevant - cal_state.reviewed_set())


def oracle_answer(
    entity: str,
    missing: Collection[int],
    matrix: EntityIncidenceMatrix,
) -> Answer:
    docs = np.asarray(sorted(missing), dtype=np.int64)
    if docs.size == 0:
        raise ValueError("missing set is empty; a question session should not have started")
    present = matrix.row(entity)[docs]
    if present.all():
        return Answer.YES
    if not present.any():
        return Answer.NO
    return Answer.NOT_SURE


class OracleReviewer:
    """Simulated reviewer with full knowledge of the missing documents."""

    def __init__(self, missing: Collection[int], matrix: EntityIncidenceMatrix):
        if not missing:
            raise ValueError("missing set is empty; a question session should not have started")
        self._missing = np.asarray(sorted(missing), dtype=np.int64)
        self._matrix = matrix

    def __call__(self, entity: str) -> Answer:
        return oracle_answer(entity, self._missing, self._matrix)


class ScriptedAnswers:
    """Replays a fixed answer sequence; raises when it runs out."""

    def __init__(self, answers: Iterable[Answer | str]):
        self._queue = deque(a if isinstance(a, Answer) else Answer.parse(a) for a in answers)

    def __call__(self, entity: str) -> Answer:
        if not self._queue:
            raise RuntimeError(f"no scripted answer left for question about {entity!r}")
        return self._queue.popleft()
