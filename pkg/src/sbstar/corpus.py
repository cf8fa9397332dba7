"""Corpus ingestion: documents, judgments, entity annotations, and features.

Everything built here is immutable after construction and is shared
read-only by the learning loop, the question-search phase, and the
HTTP service.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np
from scipy import sparse

log = logging.getLogger(__name__)

_TOKEN_RE = re.compile(r"[A-Za-z0-9]+")


class CorpusFormatError(ValueError):
    """An input file violates the declared line format."""


def tokenize(text: str) -> list[str]:
    """Lowercased alphanumeric tokens of length >= 2."""
    return [t.lower() for t in _TOKEN_RE.findall(text or "") if len(t) >= 2]


@dataclass(frozen=True)
class Document:
    doc_index: int
    external_id: str
    title: str
    body: str

    @property
    def text(self) -> str:
        return f"{self.title}\n{self.body}"


@dataclass(frozen=True)
class Topic:
    topic_id: str
    title_text: str

    def __post_init__(self) -> None:
        if not self.title_text.strip():
            raise ValueError(f"topic {self.topic_id!r}: title_text must be non-empty")


class DocumentStore:
    """Immutable document collection with dense, contiguous indices."""

    def __init__(self, documents: Sequence[Document]):
        self._documents = tuple(documents)
        self._by_external_id: dict[str, int] = {}
        for pos, doc in enumerate(self._documents):
            if doc.doc_index != pos:
                raise ValueError(
                    f"doc_index must be contiguous from 0; got {doc.doc_index} at position {pos}"
                )
            if doc.external_id in self._by_external_id:
                raise CorpusFormatError(f"duplicate external_id: {doc.external_id!r}")
            self._by_external_id[doc.external_id] = pos

    def __len__(self) -> int:
        return len(self._documents)

    def __iter__(self) -> Iterator[Document]:
        return iter(self._documents)

    def __getitem__(self, doc_index: int) -> Document:
        return self._documents[doc_index]

    def index_of(self, external_id: str) -> int | None:
        return self._by_external_id.get(external_id)

    def by_external_id(self, external_id: str) -> Document:
        pos = self._by_external_id.get(external_id)
        if pos is None:
            raise KeyError(f"unknown external_id: {external_id!r}")
        return self._documents[pos]


class Qrels:
    """Binary relevance judgments keyed by topic then external document id."""

    def __init__(self, judgments: Mapping[str, Mapping[str, int]]):
        self._judgments = {t: dict(docs) for t, docs in judgments.items()}
        for topic_id, docs in self._judgments.items():
            for ext_id, label in docs.items():
                if label not in (0, 1):
                    raise CorpusFormatError(
                        f"qrels label for ({topic_id}, {ext_id}) must be 0 or 1, got {label}"
                    )

    def topics(self) -> list[str]:
        return sorted(self._judgments)

    def to_dict(self) -> dict[str, dict[str, int]]:
        return {t: dict(docs) for t, docs in self._judgments.items()}

    def __contains__(self, topic_id: str) -> bool:
        return topic_id in self._judgments

    def judgment(self, topic_id: str, external_id: str) -> int | None:
        return self._judgments.get(topic_id, {}).get(external_id)

    def label(self, topic_id: str, external_id: str) -> int:
        """Judged relevance, with unjudged documents presumed nonrelevant."""
        return self._judgments.get(topic_id, {}).get(external_id, 0)

    def relevant_ids(self, topic_id: str) -> set[str]:
        return {e for e, rel in self._judgments.get(topic_id, {}).items() if rel == 1}

    def relevant_indices(self, topic_id: str, store: DocumentStore) -> set[int]:
        """Doc indices of relevant documents resolvable in the store."""
        out = set()
        for ext_id in self.relevant_ids(topic_id):
            pos = store.index_of(ext_id)
            if pos is not None:
                out.add(pos)
        return out

    def unmatched_ids(self, store: DocumentStore) -> list[str]:
        """Judged external ids that do not resolve to any stored document."""
        seen = set()
        for docs in self._judgments.values():
            seen.update(docs)
        return sorted(e for e in seen if store.index_of(e) is None)


class EntityIncidenceMatrix:
    """Boolean entity-by-document presence with O(1) lookups.

    Rows are entities in ascending label order; columns follow doc_index.
    """

    def __init__(
        self,
        entity_ids: Sequence[str],
        presence: np.ndarray,
        unmatched_ids: Sequence[str] = (),
    ):
        self.entity_ids: tuple[str, ...] = tuple(entity_ids)
        presence = np.asarray(presence, dtype=bool)
        if presence.shape[0] != len(self.entity_ids):
            raise ValueError("presence rows must match entity_ids")
        presence.setflags(write=False)
        self.presence = presence
        self.df = presence.sum(axis=1).astype(np.int64)
        self.unmatched_ids: tuple[str, ...] = tuple(unmatched_ids)
        self._row_of = {e: i for i, e in enumerate(self.entity_ids)}

    @property
    def n_entities(self) -> int:
        return len(self.entity_ids)

    @property
    def n_documents(self) -> int:
        return int(self.presence.shape[1]) if self.presence.ndim == 2 else 0

    def row_index(self, entity: str) -> int:
        try:
            return self._row_of[entity]
        except KeyError:
            raise KeyError(f"unknown entity: {entity!r}") from None

    def __contains__(self, entity: str) -> bool:
        return entity in self._row_of

    def row(self, entity: str) -> np.ndarray:
        return self.presence[self.row_index(entity)]

    def presence_of(self, entity: str, doc_index: int) -> bool:
        return bool(self.presence[self.row_index(entity), doc_index])

    def df_of(self, entity: str) -> int:
        return int(self.df[self.row_index(entity)])

    def restricted(self, entities: Sequence[str], doc_indices: np.ndarray) -> np.ndarray:
        """Presence submatrix (len(entities) x len(doc_indices)), bool."""
        rows = np.fromiter((self.row_index(e) for e in entities), dtype=np.int64, count=len(entities))
        docs = np.asarray(doc_indices, dtype=np.int64)
        return self.presence[np.ix_(rows, docs)]


class FeatureMatrix:
    """Sparse TF-IDF document vectors over a frozen vocabulary.

    tf = 1 + ln(count), idf = ln(N / df); no length normalization.
    """

    def __init__(self, vocabulary: dict[str, int], idf: np.ndarray, matrix: sparse.csr_matrix):
        self.vocabulary = vocabulary
        self.idf = np.asarray(idf, dtype=np.float64)
        self.idf.setflags(write=False)
        self.matrix = matrix.tocsr()
        if self.matrix.shape[1] != len(vocabulary):
            raise ValueError("matrix columns must match vocabulary size")

    @property
    def n_documents(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def n_terms(self) -> int:
        return len(self.vocabulary)

    def rows(self, doc_indices: Sequence[int] | np.ndarray) -> sparse.csr_matrix:
        return self.matrix[np.asarray(doc_indices, dtype=np.int64)]

    def transform_text(self, text: str) -> sparse.csr_matrix:
        """Vectorize arbitrary text with the corpus vocabulary and idf."""
        counts: dict[int, int] = {}
        for tok in tokenize(text):
            col = self.vocabulary.get(tok)
            if col is not None:
                counts[col] = counts.get(col, 0) + 1
        if not counts:
            return sparse.csr_matrix((1, self.n_terms), dtype=np.float64)
        cols = np.fromiter(counts.keys(), dtype=np.int64, count=len(counts))
        tf = 1.0 + np.log(np.fromiter(counts.values(), dtype=np.float64, count=len(counts)))
        data = tf * self.idf[cols]
        indptr = np.array([0, len(cols)], dtype=np.int64)
        return sparse.csr_matrix((data, cols, indptr), shape=(1, self.n_terms))


def load_corpus(path: str | Path) -> DocumentStore:
    """Read a JSONL corpus ({"external_id", "title", "body"} per line)."""
    path = Path(path)
    documents: list[Document] = []
    seen: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(record, dict) or "external_id" not in record:
                raise CorpusFormatError(f"line {lineno}: missing external_id")
            ext_id = str(record["external_id"])
            if ext_id in seen:
                raise CorpusFormatError(f"line {lineno}: duplicate external_id {ext_id!r}")
            seen.add(ext_id)
            documents.append(
                Document(
                    doc_index=len(documents),
                    external_id=ext_id,
                    title=str(record.get("title", "")),
                    body=str(record.get("body", "")),
                )
            )
    if not documents:
        log.warning("corpus file %s contains no documents", path)
    else:
        log.info("loaded %d documents from %s", len(documents), path)
    return DocumentStore(documents)


def load_qrels(path: str | Path) -> Qrels:
    """Read whitespace-separated qrels lines: "topic_id 0 external_id {0|1}"."""
    path = Path(path)
    judgments: dict[str, dict[str, int]] = {}
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 4:
                raise CorpusFormatError(f"line {lineno}: expected 4 fields, got {len(parts)}")
            topic_id, _, ext_id, raw_label = parts
            if raw_label not in ("0", "1"):
                raise CorpusFormatError(f"line {lineno}: relevance label must be 0 or 1, got {raw_label!r}")
            judgments.setdefault(topic_id, {})[ext_id] = int(raw_label)
    return Qrels(judgments)


def load_topics(path: str | Path) -> list[Topic]:
    """Read a JSONL topics file ({"topic_id", "title"} per line)."""
    path = Path(path)
    topics: list[Topic] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            if "topic_id" not in record:
                raise CorpusFormatError(f"line {lineno}: missing topic_id")
            topics.append(Topic(topic_id=str(record["topic_id"]), title_text=str(record.get("title", ""))))
    return topics


def build_incidence(
    records: Iterable[tuple[str, Sequence[str]]],
    store: DocumentStore,
) -> EntityIncidenceMatrix:
    """Assemble the incidence matrix from (external_id, entities) pairs.

    Records naming unknown documents are collected as unmatched, not fatal.
    Documents missing from the records get all-false rows.
    """
    per_doc: dict[int, set[str]] = {}
    unmatched: set[str] = set()
    labels: set[str] = set()
    for ext_id, entities in records:
        pos = store.index_of(ext_id)
        if pos is None:
            unmatched.add(ext_id)
            continue
        ents = {str(e) for e in entities}
        labels.update(ents)
        per_doc.setdefault(pos, set()).update(ents)
    entity_ids = sorted(labels)
    row_of = {e: i for i, e in enumerate(entity_ids)}
    presence = np.zeros((len(entity_ids), len(store)), dtype=bool)
    for pos, ents in per_doc.items():
        for e in ents:
            presence[row_of[e], pos] = True
    if unmatched:
        log.warning("annotations reference %d unknown external_ids: %s",
                    len(unmatched), ", ".join(sorted(unmatched)[:10]))
    return EntityIncidenceMatrix(entity_ids, presence, unmatched_ids=sorted(unmatched))


def load_annotations(path: str | Path, store: DocumentStore) -> EntityIncidenceMatrix:
    """Read annotations JSONL ({"external_id", "entities": [...]}) into a matrix."""
    path = Path(path)

    def _records() -> Iterator[tuple[str, Sequence[str]]]:
        with path.open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise CorpusFormatError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
                if "external_id" not in record:
                    raise CorpusFormatError(f"line {lineno}: missing external_id")
                entities = record.get("entities", [])
                if not isinstance(entities, list):
                    raise CorpusFormatError(f"line {lineno}: entities must be a list")
                yield str(record["external_id"]), entities

    return build_incidence(_records(), store)


def annotate_dictionary(store: DocumentStore, lexicon: Sequence[str]) -> list[dict]:
    """Mark an entity present where its surface form occurs on token boundaries.

    Case-insensitive; multiword forms must appear verbatim. Returns records
    in the annotations-file shape, one per document with at least one match.
    """
    patterns: list[tuple[str, re.Pattern[str]]] = []
    for surface in lexicon:
        if not surface or not surface.strip():
            raise ValueError("lexicon entries must be non-empty strings")
        # Lookarounds instead of \b so forms ending in punctuation still anchor.
        pat = re.compile(r"(?<!\w)" + re.escape(surface) + r"(?!\w)", re.IGNORECASE)
        patterns.append((surface, pat))
    records: list[dict] = []
    for doc in store:
        text = doc.text
        found = [surface for surface, pat in patterns if pat.search(text)]
        if found:
            records.append({"external_id": doc.external_id, "entities": found})
    return records


def build_features(store: DocumentStore) -> FeatureMatrix:
    """TF-IDF vectors for every document in the store."""
    if len(store) == 0:
        raise ValueError("cannot build features for an empty store")
    doc_counts: list[dict[str, int]] = []
    df: dict[str, int] = {}
    for doc in store:
        counts: dict[str, int] = {}
        for tok in tokenize(doc.text):
            counts[tok] = counts.get(tok, 0) + 1
        doc_counts.append(counts)
        for term in counts:
            df[term] = df.get(term, 0) + 1
    vocabulary = {term: i for i, term in enumerate(sorted(df))}
    n = len(store)
    idf = np.zeros(len(vocabulary), dtype=np.float64)
    for term, col in vocabulary.items():
        idf[col] = math.log(n / df[term])

    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    for counts in doc_counts:
        cols = sorted(vocabulary[t] for t in counts)
        col_of = {vocabulary[t]: c for t, c in counts.items()}
        for col in cols:
            indices.append(col)
            data.append((1.0 + math.log(col_of[col])) * idf[col])
        indptr.append(len(indices))
    matrix = sparse.csr_matrix(
        (np.array(data, dtype=np.float64), np.array(indices, dtype=np.int64), np.array(indptr, dtype=np.int64)),
        shape=(n, len(vocabulary)),
    )
    return FeatureMatrix(vocabulary, idf, matrix)


def filter_entity_pool(
    matrix: EntityIncidenceMatrix,
    candidate_docs: Sequence[int] | np.ndarray,
    min_df: int = 1,
    max_df_ratio: float = 1.0,
) -> list[str]:
    """Entities usable as questions over the given candidate documents.

    Keeps entities whose document frequency restricted to the candidates
    lies in [min_df, max_df_ratio * |candidates|], ordered by descending
    restricted df then ascending label.
    """
    if not 0 < max_df_ratio <= 1:
        raise ValueError(f"max_df_ratio must be in (0, 1], got {max_df_ratio}")
    cands = np.unique(np.asarray(list(candidate_docs), dtype=np.int64))
    if matrix.n_entities == 0 or cands.size == 0:
        return []
    restricted_df = matrix.presence[:, cands].sum(axis=1)
    upper = max_df_ratio * cands.size
    keep = np.flatnonzero((restricted_df >= min_df) & (restricted_df <= upper))
    order = sorted(keep, key=lambda i: (-int(restricted_df[i]), matrix.entity_ids[i]))
    return [matrix.entity_ids[i] for i in order]
