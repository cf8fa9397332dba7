"""Synthetic topics for simulation and testing.

Each topic plants a relevant set whose text shares theme tokens with the
topic title, so the learner can find most of it, and whose entity profile
stays informative even for the "hard" relevant documents whose text signal
is diluted. Those hard documents are the ones the question phase must dig
out after the review phase stalls.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import (
    DocumentStore,
    Document,
    EntityIncidenceMatrix,
    Qrels,
    Topic,
    build_incidence,
)


@dataclass
class SyntheticTopic:
    topic: Topic
    store: DocumentStore
    qrels: Qrels
    annotation_records: list[dict]
    relevant_docs: list[int]

    @property
    def matrix(self) -> EntityIncidenceMatrix:
        return build_incidence(
            ((r["external_id"], r["entities"]) for r in self.annotation_records),
            self.store,
        )


def _doc_text(rng: np.random.Generator, theme_vocab: list[str], bg_vocab: list[str],
              n_theme: int, n_background: int) -> str:
    words: list[str] = []
    if n_theme > 0:
        words.extend(rng.choice(theme_vocab, size=n_theme, replace=True))
    if n_background > 0:
        words.extend(rng.choice(bg_vocab, size=n_background, replace=True))
    rng.shuffle(words)
    return " ".join(words)


def make_topic(
    topic_id: str,
    n_docs: int = 1000,
    n_relevant: int = 20,
    n_entities: int = 240,
    seed: int = 0,
    *,
    hard_fraction: float = 0.3,
    theme_noise: float = 0.02,
    doc_length: int = 60,
) -> SyntheticTopic:
    """Build one topic's corpus, qrels, and entity annotations.

    hard_fraction of the relevant documents carry no theme text at all, so
    a text ranker plateaus before finding them; theme_noise adds stray theme
    tokens to some nonrelevant documents.

    Entities come in two kinds. Broad topical entities occur in a third to
    two thirds of the collection and are coherent over the relevant set:
    each is present in either all relevant documents or none of them, the
    way a topic's defining concepts behave. Background entities occur
    independently per document at mostly-low rates, so they are rarely
    unanimous over several missing documents and make poor questions.
    """
    if n_relevant >= n_docs:
        raise ValueError("n_relevant must be smaller than n_docs")
    rng = np.random.default_rng(seed)

    theme_vocab = [f"{topic_id}t{k:02d}" for k in range(16)]
    bg_vocab = [f"w{k:03d}" for k in range(400)]

    relevant = np.sort(rng.choice(n_docs, size=n_relevant, replace=False))
    relevant_set = set(int(d) for d in relevant)
    n_hard = int(round(hard_fraction * n_relevant))
    hard_set = set(int(d) for d in rng.choice(relevant, size=n_hard, replace=False))

    documents: list[Document] = []
    for d in range(n_docs):
        if d in relevant_set:
            n_theme = 0 if d in hard_set else doc_length // 2
        else:
            n_theme = 2 if rng.random() < theme_noise else 0
        body = _doc_text(rng, theme_vocab, bg_vocab, n_theme, doc_length - n_theme)
        documents.append(Document(
            doc_index=d,
            external_id=f"{topic_id}-d{d:05d}",
            title=f"document {d}",
            body=body,
        ))
    store = DocumentStore(documents)

    topic = Topic(topic_id=topic_id, title_text="study of " + " ".join(theme_vocab[:8]))

    judgments = {doc.external_id: (1 if doc.doc_index in relevant_set else 0) for doc in store}
    qrels = Qrels({topic_id: judgments})

    n_broad = min(40, max(8, n_entities // 6))
    n_background = max(0, n_entities - n_broad)
    nonrelevant = np.setdiff1d(np.arange(n_docs), relevant)
    entity_presence: dict[str, np.ndarray] = {}
    for k in range(n_broad):
        rate = rng.uniform(0.3, 0.7)
        present = np.zeros(n_docs, dtype=bool)
        present[nonrelevant] = rng.random(nonrelevant.size) < rate
        present[relevant] = bool(rng.random() < 0.5)
        entity_presence[f"{topic_id}_broad_{k:02d}"] = present
    for k in range(n_background):
        rate = rng.beta(0.7, 5.0)
        entity_presence[f"bg_{k:03d}"] = rng.random(n_docs) < rate

    records: list[dict] = []
    for doc in store:
        ents = [e for e, present in entity_presence.items() if present[doc.doc_index]]
        if ents:
            records.append({"external_id": doc.external_id, "entities": ents})

    return SyntheticTopic(
        topic=topic,
        store=store,
        qrels=qrels,
        annotation_records=records,
        relevant_docs=[int(d) for d in relevant],
    )


def make_separable_topic(
    topic_id: str = "sep",
    n_docs: int = 600,
    n_relevant: int = 25,
    seed: int = 0,
) -> SyntheticTopic:
    """Fully separable text: every relevant document is saturated with theme
    tokens, no nonrelevant document carries any."""
    return make_topic(
        topic_id,
        n_docs=n_docs,
        n_relevant=n_relevant,
        n_entities=60,
        seed=seed,
        hard_fraction=0.0,
        theme_noise=0.0,
    )


def write_dataset(
    out_dir: str | Path,
    topics: Sequence[SyntheticTopic],
) -> dict[str, Path]:
    """Write corpus/annotations/qrels/topics files for a set of topics
    sharing one collection (stores are concatenated)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    corpus_path = out / "corpus.jsonl"
    annotations_path = out / "annotations.jsonl"
    qrels_path = out / "qrels.txt"
    topics_path = out / "topics.jsonl"

    with corpus_path.open("w", encoding="utf-8") as fh:
        for st in topics:
            for doc in st.store:
                fh.write(json.dumps({
                    "external_id": doc.external_id,
                    "title": doc.title,
                    "body": doc.body,
                }) + "\n")
    with annotations_path.open("w", encoding="utf-8") as fh:
        for st in topics:
            for record in st.annotation_records:
                fh.write(json.dumps(record) + "\n")
    with qrels_path.open("w", encoding="utf-8") as fh:
        for st in topics:
            topic_id = st.topic.topic_id
            for doc in st.store:
                label = st.qrels.label(topic_id, doc.external_id)
                fh.write(f"{topic_id} 0 {doc.external_id} {label}\n")
    with topics_path.open("w", encoding="utf-8") as fh:
        for st in topics:
            fh.write(json.dumps({"topic_id": st.topic.topic_id, "title": st.topic.title_text}) + "\n")
    return {
        "corpus": corpus_path,
        "annotations": annotations_path,
        "qrels": qrels_path,
        "topics": topics_path,
    }
