import json

import numpy as np
import pytest

from sbstar.corpus import Document, DocumentStore, EntityIncidenceMatrix


@pytest.fixture
def make_store():
    """Factory for stores built from (external_id, title, body) triples."""

    def _build(rows):
        return DocumentStore([
            Document(doc_index=i, external_id=ext, title=title, body=body)
            for i, (ext, title, body) in enumerate(rows)
        ])

    return _build


@pytest.fixture
def make_matrix():
    """Factory for incidence matrices from {entity: [doc_index, ...]}."""

    def _build(entity_docs, n_docs):
        entity_ids = sorted(entity_docs)
        presence = np.zeros((len(entity_ids), n_docs), dtype=bool)
        for row, entity in enumerate(entity_ids):
            for doc in entity_docs[entity]:
                presence[row, doc] = True
        return EntityIncidenceMatrix(entity_ids, presence)

    return _build


@pytest.fixture
def write_jsonl(tmp_path):
    def _write(name, records):
        path = tmp_path / name
        with path.open("w", encoding="utf-8") as fh:
            for record in records:
                fh.write(json.dumps(record) + "\n")
        return path

    return _write
