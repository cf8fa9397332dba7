"""HTTP session service for live, human-answered question sessions.

The service is a thin adapter over the same belief/selection functions the
batch session loop uses: one pending question per session, answers applied
strictly in order, state persisted to disk after every mutation so a
browser refresh or service restart loses nothing.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import Body, FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware

from .bundle import CorpusBundle
from .cal import CalState, checkpoint_path
from .config import RunConfig
from .corpus import filter_entity_pool
from .reviewer import compute_missing
from .search import (
    Answer,
    Belief,
    EntityPool,
    apply_answer,
    final_ranking,
    init_belief,
    question_text,
    select_question,
)

log = logging.getLogger(__name__)

STATE_AWAITING = "awaiting_answer"
STATE_READY = "ready_for_question"
STATE_FINISHED = "finished"

_WIRE_ANSWERS = {"yes": Answer.YES, "no": Answer.NO, "not_sure": Answer.NOT_SURE}


def _rank_of_last(ranking: np.ndarray, docs) -> int:
    positions = np.flatnonzero(np.isin(ranking, list(docs)))
    return int(positions.max()) + 1


@dataclass
class LiveSession:
    session_id: str
    topic_id: str
    stop_ratio: float
    budget: int
    state: str
    pending_entity: str | None
    belief: Belief
    pool: EntityPool
    lr_probs: np.ndarray
    transcript: list[dict] = field(default_factory=list)
    missing: frozenset[int] | None = None
    pool_exhausted: bool = False
    created: float = field(default_factory=time.time)
    updated: float = field(default_factory=time.time)
    answer_responses: dict[str, dict] = field(default_factory=dict)

    @property
    def questions_asked(self) -> int:
        return len(self.transcript)

    @property
    def questions_remaining(self) -> int:
        return self.budget - self.questions_asked

    def to_json_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "topic_id": self.topic_id,
            "stop_ratio": self.stop_ratio,
            "budget": self.budget,
            "state": self.state,
            "pending_entity": self.pending_entity,
            "candidates": [int(d) for d in self.belief.candidate_docs],
            "alpha": [float(a) for a in self.belief.alpha],
            "counts": [int(c) for c in self.belief.counts],
            "pool": list(self.pool.labels),
            "lr_probs": [float(p) for p in self.lr_probs],
            "transcript": self.transcript,
            "missing": sorted(self.missing) if self.missing is not None else None,
            "pool_exhausted": self.pool_exhausted,
            "created": self.created,
            "updated": self.updated,
            "answer_responses": self.answer_responses,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "LiveSession":
        cand = np.asarray(data["candidates"], dtype=np.int64)
        belief = Belief(
            candidate_docs=cand,
            alpha=np.asarray(data["alpha"], dtype=np.float64),
            counts=np.asarray(data["counts"], dtype=np.int64),
        )
        missing = data.get("missing")
        return cls(
            session_id=data["session_id"],
            topic_id=data["topic_id"],
            stop_ratio=float(data["stop_ratio"]),
            budget=int(data["budget"]),
            state=data["state"],
            pending_entity=data.get("pending_entity"),
            belief=belief,
            pool=EntityPool(data["pool"]),
            lr_probs=np.asarray(data["lr_probs"], dtype=np.float64),
            transcript=list(data.get("transcript", [])),
            missing=frozenset(missing) if missing is not None else None,
            pool_exhausted=bool(data.get("pool_exhausted", False)),
            created=float(data.get("created", time.time())),
            updated=float(data.get("updated", time.time())),
            answer_responses=dict(data.get("answer_responses", {})),
        )


class SessionManager:
    """Owns all live sessions; one writer lock per session."""

    def __init__(self, bundle: CorpusBundle, checkpoint_dir: str | Path,
                 sessions_dir: str | Path, config: RunConfig):
        self.bundle = bundle
        self.checkpoint_dir = Path(checkpoint_dir)
        self.sessions_dir = Path(sessions_dir)
        self.sessions_dir.mkdir(parents=True, exist_ok=True)
        self.config = config
        self._sessions: dict[str, LiveSession] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()

    # -- persistence -------------------------------------------------

    def _session_file(self, session_id: str) -> Path:
        return self.sessions_dir / f"{session_id}.json"

    def persist(self, session: LiveSession) -> None:
        session.updated = time.time()
        path = self._session_file(session.session_id)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(session.to_json_dict()), encoding="utf-8")
        tmp.replace(path)

    def lock_for(self, session_id: str) -> threading.Lock:
        with self._registry_lock:
            return self._locks.setdefault(session_id, threading.Lock())

    def get(self, session_id: str) -> LiveSession:
        with self._registry_lock:
            session = self._sessions.get(session_id)
        if session is not None:
            return session
        path = self._session_file(session_id)
        if not path.exists():
            raise HTTPException(status_code=404, detail=f"unknown session: {session_id}")
        session = LiveSession.from_json_dict(json.loads(path.read_text(encoding="utf-8")))
        with self._registry_lock:
            self._sessions.setdefault(session_id, session)
        return self._sessions[session_id]

    # -- session lifecycle -------------------------------------------

    def create(self, topic_id: str, stop_ratio: float, n_questions: int,
               reveal_ranks: bool = False, idempotency_key: str | None = None) -> LiveSession:
        if idempotency_key:
            session_id = "s" + hashlib.sha256(idempotency_key.encode("utf-8")).hexdigest()[:20]
            if self._session_file(session_id).exists():
                return self.get(session_id)
        else:
            session_id = uuid.uuid4().hex

        if topic_id not in self.bundle.topics:
            raise HTTPException(status_code=404, detail=f"unknown topic: {topic_id}")
        if n_questions < 0:
            raise HTTPException(status_code=400, detail="n_questions must be nonnegative")
        ckpt = checkpoint_path(self.checkpoint_dir, topic_id, stop_ratio)
        if not ckpt.exists():
            raise HTTPException(
                status_code=404,
                detail=f"no review checkpoint for topic {topic_id} at stop ratio {stop_ratio};"
                       f" expected {ckpt.name} (run the cal command first)",
            )
        cal_state = CalState.load(ckpt)
        candidates = cal_state.unreviewed_docs(len(self.bundle.store))
        if candidates.size == 0:
            raise HTTPException(status_code=409, detail="no unreviewed documents left to rank")
        pool_labels = filter_entity_pool(
            self.bundle.matrix, candidates,
            min_df=self.config.min_df, max_df_ratio=self.config.max_df_ratio,
        )
        belief = init_belief(
            cal_state.relevance_probs, candidates,
            alpha_floor=self.config.alpha_floor, prior_scale=self.config.prior_scale,
        )
        missing = None
        if reveal_ranks and topic_id in self.bundle.qrels:
            found = compute_missing(self.bundle.qrels, topic_id, cal_state, self.bundle.store)
            missing = found if found else None

        session = LiveSession(
            session_id=session_id,
            topic_id=topic_id,
            stop_ratio=float(stop_ratio),
            budget=int(n_questions),
            state=STATE_READY,
            pending_entity=None,
            belief=belief,
            pool=EntityPool(pool_labels),
            lr_probs=np.asarray(cal_state.relevance_probs, dtype=np.float64),
            missing=missing,
        )
        self._advance(session)
        with self._registry_lock:
            self._sessions[session_id] = session
        self.persist(session)
        return session

    def _advance(self, session: LiveSession) -> None:
        """Move ready -> awaiting by selecting the next question, or finish."""
        if session.questions_remaining <= 0:
            session.state = STATE_FINISHED
            session.pending_entity = None
            return
        entity = select_question(session.belief, session.pool, self.bundle.matrix)
        if entity is None:
            session.state = STATE_FINISHED
            session.pending_entity = None
            session.pool_exhausted = True
            return
        session.pending_entity = entity
        session.state = STATE_AWAITING

    def apply(self, session: LiveSession, answer: Answer) -> None:
        entity = session.pending_entity
        assert entity is not None
        session.belief = apply_answer(session.belief, entity, answer, self.bundle.matrix, session.pool)
        record: dict = {"entity": entity, "answer": answer.value}
        if session.missing:
            ranking = final_ranking(session.belief, session.lr_probs)
            record["last_rel_after"] = _rank_of_last(ranking, session.missing)
        session.transcript.append(record)
        session.state = STATE_READY
        session.pending_entity = None
        self._advance(session)

    # -- views ---------------------------------------------------------

    def handle(self, session: LiveSession) -> dict:
        stalled = (
            session.state == STATE_AWAITING
            and (time.time() - session.updated) > self.config.stall_timeout
        )
        question = None
        if session.pending_entity is not None:
            question = {
                "entity": session.pending_entity,
                "text": question_text(session.pending_entity),
            }
        return {
            "session_id": session.session_id,
            "topic_id": session.topic_id,
            "stop_ratio": session.stop_ratio,
            "state": session.state,
            "question": question,
            "questions_asked": session.questions_asked,
            "questions_remaining": session.questions_remaining,
            "budget": session.budget,
            "pool_exhausted": session.pool_exhausted,
            "stalled": stalled,
        }

    def ranking(self, session: LiveSession, k: int) -> dict:
        order = final_ranking(session.belief, session.lr_probs)
        pi = session.belief.preference()
        score_of = dict(zip(session.belief.candidate_docs.tolist(), pi.tolist()))
        total = int(order.size)
        shown = order if k <= 0 else order[:k]
        items = []
        for rank, doc_index in enumerate(shown.tolist(), start=1):
            doc = self.bundle.store[doc_index]
            items.append({
                "rank": rank,
                "doc_index": doc_index,
                "external_id": doc.external_id,
                "title": doc.title,
                "score": score_of[doc_index],
            })
        return {"items": items, "total": total, "k": int(k)}


def create_app(bundle: CorpusBundle, checkpoint_dir: str | Path,
               sessions_dir: str | Path, config: RunConfig | None = None) -> FastAPI:
    config = config or RunConfig()
    manager = SessionManager(bundle, checkpoint_dir, sessions_dir, config)
    app = FastAPI(title="sbstar session service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"], allow_methods=["*"], allow_headers=["*"],
    )
    app.state.manager = manager

    @app.get("/topics")
    def list_topics() -> list[dict]:
        out = []
        for topic_id in sorted(bundle.topics):
            ratios = []
            for path in sorted(manager.checkpoint_dir.glob(f"{topic_id}__r*.json")):
                try:
                    ratios.append(float(path.stem.split("__r")[-1]))
                except ValueError:
                    continue
            out.append({
                "topic_id": topic_id,
                "title": bundle.topics[topic_id].title_text,
                "checkpoint_stop_ratios": ratios,
            })
        return out

    @app.post("/sessions")
    def create_session(body: dict = Body(...)) -> dict:
        topic_id = body.get("topic_id")
        if not isinstance(topic_id, str) or not topic_id:
            raise HTTPException(status_code=400, detail="topic_id is required")
        try:
            stop_ratio = float(body.get("stop_ratio", config.stop_ratio))
            n_questions = int(body.get("n_questions", config.n_questions))
        except (TypeError, ValueError):
            raise HTTPException(status_code=400, detail="stop_ratio and n_questions must be numbers") from None
        session = manager.create(
            topic_id, stop_ratio, n_questions,
            reveal_ranks=bool(body.get("reveal_ranks", False)),
            idempotency_key=body.get("idempotency_key"),
        )
        return manager.handle(session)

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str) -> dict:
        return manager.handle(manager.get(session_id))

    @app.get("/sessions/{session_id}/question")
    def get_question(session_id: str) -> dict:
        session = manager.get(session_id)
        view = manager.handle(session)
        return {
            "state": view["state"],
            "question": view["question"],
            "questions_asked": view["questions_asked"],
            "questions_remaining": view["questions_remaining"],
            "budget": view["budget"],
            "stalled": view["stalled"],
        }

    @app.post("/sessions/{session_id}/answer")
    def post_answer(session_id: str, body: dict = Body(...)) -> dict:
        raw = body.get("answer")
        if raw not in _WIRE_ANSWERS:
            raise HTTPException(
                status_code=400,
                detail=f"malformed answer {raw!r}; expected one of {sorted(_WIRE_ANSWERS)}",
            )
        key = body.get("idempotency_key")
        session = manager.get(session_id)
        with manager.lock_for(session_id):
            if key and key in session.answer_responses:
                return session.answer_responses[key]
            if session.state != STATE_AWAITING:
                raise HTTPException(
                    status_code=409,
                    detail=f"session is {session.state}, not awaiting an answer",
                )
            manager.apply(session, _WIRE_ANSWERS[raw])
            response = manager.handle(session)
            if key:
                session.answer_responses[key] = response
            manager.persist(session)
        return response

    @app.get("/sessions/{session_id}/ranking")
    def get_ranking(session_id: str, k: int | None = None) -> dict:
        session = manager.get(session_id)
        return manager.ranking(session, config.top_k if k is None else k)

    @app.get("/sessions/{session_id}/transcript")
    def get_transcript(session_id: str) -> list[dict]:
        return list(manager.get(session_id).transcript)

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "topics": len(bundle.topics)}

    return app
