"""Persisted corpus bundles: store + incidence + features + qrels + topics.

A bundle directory is content-addressed by a hash of its inputs so repeat
ingestion of unchanged files is a cache hit.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import sparse

from .corpus import (
    DocumentStore,
    EntityIncidenceMatrix,
    FeatureMatrix,
    Qrels,
    Topic,
    annotate_dictionary,
    build_features,
    build_incidence,
    load_annotations,
    load_corpus,
    load_qrels,
    load_topics,
)

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


@dataclass
class CorpusBundle:
    store: DocumentStore
    matrix: EntityIncidenceMatrix
    features: FeatureMatrix
    qrels: Qrels
    topics: dict[str, Topic]

    @classmethod
    def build(
        cls,
        corpus_path: str | Path,
        qrels_path: str | Path,
        topics_path: str | Path,
        annotations_path: str | Path | None = None,
        lexicon: Sequence[str] | None = None,
    ) -> "CorpusBundle":
        store = load_corpus(corpus_path)
        if annotations_path is not None:
            matrix = load_annotations(annotations_path, store)
        elif lexicon:
            records = annotate_dictionary(store, lexicon)
            matrix = build_incidence(((r["external_id"], r["entities"]) for r in records), store)
        else:
            raise ValueError("need either an annotations file or a lexicon to build the entity matrix")
        features = build_features(store)
        qrels = load_qrels(qrels_path)
        topics = {t.topic_id: t for t in load_topics(topics_path)}
        return cls(store=store, matrix=matrix, features=features, qrels=qrels, topics=topics)

    def save(self, out_dir: str | Path, content_hash: str, extra: dict | None = None) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)

        with (out / "documents.jsonl").open("w", encoding="utf-8") as fh:
            for doc in self.store:
                fh.write(json.dumps({
                    "external_id": doc.external_id,
                    "title": doc.title,
                    "body": doc.body,
                }) + "\n")

        np.savez_compressed(out / "incidence.npz", presence=np.asarray(self.matrix.presence))
        (out / "entities.json").write_text(json.dumps({
            "entity_ids": list(self.matrix.entity_ids),
            "unmatched_ids": list(self.matrix.unmatched_ids),
        }), encoding="utf-8")

        m = self.features.matrix
        np.savez_compressed(
            out / "features.npz",
            data=m.data, indices=m.indices, indptr=m.indptr,
            shape=np.asarray(m.shape), idf=np.asarray(self.features.idf),
        )
        (out / "vocabulary.json").write_text(json.dumps(self.features.vocabulary), encoding="utf-8")

        (out / "qrels.json").write_text(json.dumps(self.qrels.to_dict()), encoding="utf-8")
        with (out / "topics.jsonl").open("w", encoding="utf-8") as fh:
            for topic in self.topics.values():
                fh.write(json.dumps({"topic_id": topic.topic_id, "title": topic.title_text}) + "\n")

        manifest = {
            "content_hash": content_hash,
            "n_documents": len(self.store),
            "n_entities": self.matrix.n_entities,
            "n_terms": self.features.n_terms,
            "topics": sorted(self.topics),
        }
        if extra:
            manifest.update(extra)
        (out / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2), encoding="utf-8")
        return out

    @classmethod
    def load(cls, bundle_dir: str | Path) -> "CorpusBundle":
        root = Path(bundle_dir)
        if not (root / MANIFEST_NAME).exists():
            raise FileNotFoundError(f"not a bundle directory (no {MANIFEST_NAME}): {root}")
        store = load_corpus(root / "documents.jsonl")

        entities = json.loads((root / "entities.json").read_text(encoding="utf-8"))
        presence = np.load(root / "incidence.npz")["presence"]
        matrix = EntityIncidenceMatrix(entities["entity_ids"], presence, entities["unmatched_ids"])

        data = np.load(root / "features.npz")
        vocabulary = json.loads((root / "vocabulary.json").read_text(encoding="utf-8"))
        csr = sparse.csr_matrix(
            (data["data"], data["indices"], data["indptr"]),
            shape=tuple(int(s) for s in data["shape"]),
        )
        features = FeatureMatrix(vocabulary, data["idf"], csr)

        qrels = Qrels(json.loads((root / "qrels.json").read_text(encoding="utf-8")))
        topics = {t.topic_id: t for t in load_topics(root / "topics.jsonl")}
        return cls(store=store, matrix=matrix, features=features, qrels=qrels, topics=topics)


def read_manifest(bundle_dir: str | Path) -> dict | None:
    path = Path(bundle_dir) / MANIFEST_NAME
    if not path.exists():
        return None
    return json.loads(path.read_text(encoding="utf-8"))


def content_hash(paths: Sequence[str | Path], params: dict | None = None) -> str:
    """Hash of the input files plus ingestion parameters."""
    digest = hashlib.sha256()
    for path in paths:
        p = Path(path)
        digest.update(p.name.encode("utf-8"))
        digest.update(p.read_bytes())
    if params:
        digest.update(json.dumps(params, sort_keys=True).encode("utf-8"))
    return digest.hexdigest()


def ingest(
    corpus_path: str | Path,
    qrels_path: str | Path,
    topics_path: str | Path,
    out_dir: str | Path,
    annotations_path: str | Path | None = None,
    lexicon: Sequence[str] | None = None,
) -> tuple[Path, bool]:
    """Build and cache a bundle; returns (bundle_dir, cache_hit)."""
    for label, path in (("corpus", corpus_path), ("qrels", qrels_path), ("topics", topics_path)):
        if not Path(path).exists():
            raise FileNotFoundError(f"{label} file not found: {path}")
    if annotations_path is not None and not Path(annotations_path).exists():
        raise FileNotFoundError(f"annotations file not found: {annotations_path}")

    inputs = [corpus_path, qrels_path, topics_path]
    if annotations_path is not None:
        inputs.append(annotations_path)
    params = {"lexicon": sorted(lexicon) if lexicon else None}
    digest = content_hash(inputs, params)

    manifest = read_manifest(out_dir)
    if manifest and manifest.get("content_hash") == digest:
        log.info("bundle cache hit at %s (hash %s)", out_dir, digest[:12])
        return Path(out_dir), True

    bundle = CorpusBundle.build(
        corpus_path, qrels_path, topics_path,
        annotations_path=annotations_path, lexicon=lexicon,
    )
    bundle.save(out_dir, digest)
    log.info("bundle written to %s (hash %s)", out_dir, digest[:12])
    return Path(out_dir), False
