import csv
import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from sbstar import cli
from sbstar.bundle import CorpusBundle, ingest, read_manifest
from sbstar.cal import CalState, checkpoint_path
from sbstar.config import RunConfig
from sbstar.corpus import filter_entity_pool
from sbstar.reviewer import ScriptedAnswers
from sbstar.search import EntityPool, init_belief, run_session
from sbstar.service import create_app
from sbstar.synthetic import make_topic, write_dataset


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Synthetic dataset -> bundle -> checkpoints, shared by this module."""
    root = tmp_path_factory.mktemp("ws")
    data = root / "data"
    topics = [make_topic(f"t{i}", n_docs=220, n_relevant=10, n_entities=70, seed=40 + i)
              for i in range(2)]
    write_dataset(data, topics)
    rc = cli.main([
        "ingest",
        "--corpus", str(data / "corpus.jsonl"),
        "--annotations", str(data / "annotations.jsonl"),
        "--qrels", str(data / "qrels.txt"),
        "--topics", str(data / "topics.jsonl"),
        "--out", str(root / "bundle"),
    ])
    assert rc == 0
    rc = cli.main([
        "cal",
        "--bundle", str(root / "bundle"),
        "--stop-ratios", "0.3",
        "--seed", "9",
        "--out", str(root / "checkpoints"),
    ])
    assert rc == 0
    return root, data


class TestConfig:
    def test_file_and_overrides(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"stop_ratio": 0.3, "seed": 4}))
        config = RunConfig.from_file(path).with_overrides({"seed": 7, "port": None})
        assert config.stop_ratio == 0.3
        assert config.seed == 7
        assert config.port == 8000

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"stop_raito": 0.3}))
        with pytest.raises(ValueError, match="unknown config keys"):
            RunConfig.from_file(path)

    @pytest.mark.parametrize("bad", [
        {"stop_ratio": 0.0},
        {"stop_ratios": [1.5]},
        {"strategies": ["mystery"]},
        {"max_df_ratio": 0.0},
        {"alpha_floor": 0.0},
    ])
    def test_validation(self, bad):
        with pytest.raises(ValueError):
            RunConfig().with_overrides(bad).validate()


class TestIngest:
    def test_cache_hit_on_unchanged_inputs(self, workspace):
        root, data = workspace
        manifest_before = read_manifest(root / "bundle")
        _, cache_hit = ingest(
            data / "corpus.jsonl", data / "qrels.txt", data / "topics.jsonl",
            out_dir=root / "bundle", annotations_path=data / "annotations.jsonl",
        )
        assert cache_hit
        assert read_manifest(root / "bundle") == manifest_before

    def test_rebuild_when_inputs_change(self, workspace, tmp_path):
        root, data = workspace
        corpus2 = tmp_path / "corpus.jsonl"
        corpus2.write_text((data / "corpus.jsonl").read_text() )
        out = tmp_path / "bundle"
        _, hit1 = ingest(corpus2, data / "qrels.txt", data / "topics.jsonl",
                         out_dir=out, annotations_path=data / "annotations.jsonl")
        assert not hit1
        with corpus2.open("a") as fh:
            fh.write(json.dumps({"external_id": "extra", "title": "x", "body": "y z"}) + "\n")
        _, hit2 = ingest(corpus2, data / "qrels.txt", data / "topics.jsonl",
                         out_dir=out, annotations_path=data / "annotations.jsonl")
        assert not hit2

    def test_missing_qrels_names_path(self, workspace, tmp_path):
        root, data = workspace
        ghost = tmp_path / "ghost.txt"
        with pytest.raises(FileNotFoundError, match="ghost.txt"):
            ingest(data / "corpus.jsonl", ghost, data / "topics.jsonl", out_dir=tmp_path / "b")

    def test_bundle_round_trip(self, workspace):
        root, _ = workspace
        bundle = CorpusBundle.load(root / "bundle")
        assert len(bundle.store) == 440
        assert bundle.matrix.n_documents == 440
        assert set(bundle.topics) == {"t0", "t1"}
        assert bundle.features.matrix.shape[0] == 440

    def test_dictionary_annotator_path(self, tmp_path):
        corpus = tmp_path / "corpus.jsonl"
        corpus.write_text(json.dumps({"external_id": "a", "title": "", "body": "cervical cancer study"}) + "\n")
        qrels = tmp_path / "qrels.txt"
        qrels.write_text("T 0 a 1\n")
        topics = tmp_path / "topics.jsonl"
        topics.write_text(json.dumps({"topic_id": "T", "title": "study"}) + "\n")
        lexicon = tmp_path / "lexicon.txt"
        lexicon.write_text("cervical cancer\nunrelated thing\n")
        rc = cli.main([
            "ingest", "--corpus", str(corpus), "--qrels", str(qrels),
            "--topics", str(topics), "--lexicon", str(lexicon),
            "--out", str(tmp_path / "bundle"),
        ])
        assert rc == 0
        bundle = CorpusBundle.load(tmp_path / "bundle")
        assert bundle.matrix.entity_ids == ("cervical cancer",)


class TestSimulateCli:
    def test_simulate_writes_reports(self, workspace, tmp_path):
        root, _ = workspace
        out = tmp_path / "reports"
        rc = cli.main([
            "simulate", "--bundle", str(root / "bundle"),
            "--stop-ratios", "0.3", "--questions", "4,8",
            "--strategies", "sbstar,random", "--seed", "7",
            "--out", str(out),
        ])
        assert rc == 0
        assert (out / "heatmap_sbstar.csv").exists()
        with (out / "metrics.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        assert {r["strategy"] for r in rows} == {"sbstar", "random"}

    def test_report_command_reemits(self, workspace, tmp_path):
        root, _ = workspace
        first = tmp_path / "first"
        rc = cli.main([
            "simulate", "--bundle", str(root / "bundle"),
            "--stop-ratios", "0.3", "--questions", "4",
            "--strategies", "sbstar", "--seed", "7", "--out", str(first),
        ])
        assert rc == 0
        second = tmp_path / "second"
        rc = cli.main(["report", "--raw", str(first / "raw_results.json"), "--out", str(second)])
        assert rc == 0
        assert (second / "metrics.csv").read_bytes() == (first / "metrics.csv").read_bytes()


@pytest.fixture()
def client(workspace, tmp_path):
    root, _ = workspace
    bundle = CorpusBundle.load(root / "bundle")
    config = RunConfig(stop_ratio=0.3, n_questions=5)
    app = create_app(bundle, root / "checkpoints", tmp_path / "sessions", config)
    return TestClient(app), bundle, root, tmp_path


def _create(client, **overrides):
    body = {"topic_id": "t0", "stop_ratio": 0.3, "n_questions": 5}
    body.update(overrides)
    response = client.post("/sessions", json=body)
    assert response.status_code == 200, response.text
    return response.json()


class TestService:
    def test_question_phrasing(self, client):
        http, *_ = client
        handle = _create(http)
        question = http.get(f"/sessions/{handle['session_id']}/question").json()
        entity = question["question"]["entity"]
        assert question["question"]["text"] == f"Are the documents you are interested in about {entity}?"
        assert question["questions_remaining"] == 5

    def test_topics_listing(self, client):
        http, *_ = client
        topics = http.get("/topics").json()
        assert [t["topic_id"] for t in topics] == ["t0", "t1"]
        assert all(0.3 in t["checkpoint_stop_ratios"] for t in topics)

    def test_not_sure_leaves_ranking_unchanged(self, client):
        http, *_ = client
        handle = _create(http)
        sid = handle["session_id"]
        before = http.get(f"/sessions/{sid}/ranking").json()
        response = http.post(f"/sessions/{sid}/answer", json={"answer": "not_sure"})
        assert response.status_code == 200
        after = http.get(f"/sessions/{sid}/ranking").json()
        assert before["items"] == after["items"]

    def test_yes_changes_ranking_scores(self, client):
        http, *_ = client
        handle = _create(http)
        sid = handle["session_id"]
        before = http.get(f"/sessions/{sid}/ranking").json()
        http.post(f"/sessions/{sid}/answer", json={"answer": "yes"})
        after = http.get(f"/sessions/{sid}/ranking").json()
        assert before["items"] != after["items"]

    def test_answer_without_pending_question_conflicts(self, client):
        http, *_ = client
        handle = _create(http, n_questions=1)
        sid = handle["session_id"]
        assert http.post(f"/sessions/{sid}/answer", json={"answer": "yes"}).status_code == 200
        response = http.post(f"/sessions/{sid}/answer", json={"answer": "yes"})
        assert response.status_code == 409

    def test_malformed_answer_is_400(self, client):
        http, *_ = client
        handle = _create(http)
        response = http.post(f"/sessions/{handle['session_id']}/answer", json={"answer": "maybe"})
        assert response.status_code == 400
        response = http.post(f"/sessions/{handle['session_id']}/answer", json={})
        assert response.status_code == 400

    def test_unknown_session_is_404(self, client):
        http, *_ = client
        assert http.get("/sessions/nope/question").status_code == 404
        assert http.post("/sessions/nope/answer", json={"answer": "yes"}).status_code == 404

    def test_unknown_topic_is_404(self, client):
        http, *_ = client
        response = http.post("/sessions", json={"topic_id": "ghost", "stop_ratio": 0.3})
        assert response.status_code == 404

    def test_missing_checkpoint_is_404(self, client):
        http, *_ = client
        response = http.post("/sessions", json={"topic_id": "t0", "stop_ratio": 0.77})
        assert response.status_code == 404
        assert "checkpoint" in response.json()["detail"]

    def test_answer_idempotency_key(self, client):
        http, *_ = client
        handle = _create(http)
        sid = handle["session_id"]
        first = http.post(f"/sessions/{sid}/answer",
                          json={"answer": "yes", "idempotency_key": "click-1"})
        second = http.post(f"/sessions/{sid}/answer",
                           json={"answer": "yes", "idempotency_key": "click-1"})
        assert first.status_code == second.status_code == 200
        assert first.json() == second.json()
        transcript = http.get(f"/sessions/{sid}/transcript").json()
        assert len(transcript) == 1

    def test_create_idempotency_key(self, client):
        http, *_ = client
        a = _create(http, idempotency_key="start-1")
        b = _create(http, idempotency_key="start-1")
        assert a["session_id"] == b["session_id"]

    def test_budget_zero_finishes_immediately(self, client):
        http, *_ = client
        handle = _create(http, n_questions=0)
        assert handle["state"] == "finished"
        assert handle["question"] is None
        ranking = http.get(f"/sessions/{handle['session_id']}/ranking").json()
        assert ranking["items"]

    def test_ranking_k_parameter(self, client):
        http, *_ = client
        handle = _create(http)
        sid = handle["session_id"]
        top5 = http.get(f"/sessions/{sid}/ranking", params={"k": 5}).json()
        assert len(top5["items"]) == 5
        full = http.get(f"/sessions/{sid}/ranking", params={"k": 0}).json()
        assert len(full["items"]) == full["total"]

    def test_session_runs_to_finished(self, client):
        http, *_ = client
        handle = _create(http, n_questions=5)
        sid = handle["session_id"]
        answers = ["yes", "not_sure", "no", "yes", "no"]
        for raw in answers:
            response = http.post(f"/sessions/{sid}/answer", json={"answer": raw})
            assert response.status_code == 200
        state = http.get(f"/sessions/{sid}").json()
        assert state["state"] == "finished"
        transcript = http.get(f"/sessions/{sid}/transcript").json()
        assert [t["answer"] for t in transcript] == answers

    def test_replay_matches_batch_session(self, client):
        http, bundle, root, _ = client
        handle = _create(http, n_questions=5, reveal_ranks=True)
        sid = handle["session_id"]
        answers = ["yes", "no", "not_sure", "yes", "no"]
        for raw in answers:
            assert http.post(f"/sessions/{sid}/answer", json={"answer": raw}).status_code == 200
        service_transcript = http.get(f"/sessions/{sid}/transcript").json()
        service_ranking = http.get(f"/sessions/{sid}/ranking", params={"k": 0}).json()

        state = CalState.load(checkpoint_path(root / "checkpoints", "t0", 0.3))
        cands = state.unreviewed_docs(len(bundle.store))
        belief = init_belief(state.relevance_probs, cands)
        pool = EntityPool(filter_entity_pool(bundle.matrix, cands))
        result = run_session(belief, pool, bundle.matrix, ScriptedAnswers(answers), 5,
                             lr_probs=state.relevance_probs)
        assert [r.entity for r in result.transcript] == [t["entity"] for t in service_transcript]
        assert [r.answer.value for r in result.transcript] == [t["answer"] for t in service_transcript]
        assert result.ranking.tolist() == [item["doc_index"] for item in service_ranking["items"]]

    def test_stalled_flag_after_timeout(self, workspace, tmp_path):
        import time
        root, _ = workspace
        bundle = CorpusBundle.load(root / "bundle")
        app = create_app(bundle, root / "checkpoints", tmp_path / "s",
                         RunConfig(stop_ratio=0.3, stall_timeout=0.0))
        http = TestClient(app)
        handle = _create(http)
        time.sleep(0.02)
        view = http.get(f"/sessions/{handle['session_id']}/question").json()
        assert view["stalled"] is True

    def test_persistence_survives_restart(self, client):
        http, bundle, root, tmp = client
        handle = _create(http)
        sid = handle["session_id"]
        http.post(f"/sessions/{sid}/answer", json={"answer": "yes"})
        transcript_before = http.get(f"/sessions/{sid}/transcript").json()

        fresh = TestClient(create_app(bundle, root / "checkpoints", tmp / "sessions",
                                      RunConfig(stop_ratio=0.3)))
        resumed = fresh.get(f"/sessions/{sid}").json()
        assert resumed["questions_asked"] == 1
        assert fresh.get(f"/sessions/{sid}/transcript").json() == transcript_before
        assert fresh.post(f"/sessions/{sid}/answer", json={"answer": "no"}).status_code == 200
