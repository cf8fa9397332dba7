import numpy as np
import pytest

from sbstar.cal import run_cal
from sbstar.corpus import build_features
from sbstar.reviewer import OracleReviewer, ScriptedAnswers, compute_missing, oracle_answer
from sbstar.search import Answer, Belief, EntityPool, run_session
from sbstar.synthetic import make_topic


class TestOracleAnswer:
    def test_present_in_all_missing_is_yes(self, make_matrix):
        matrix = make_matrix({"e": {0, 1, 2}}, 4)
        assert oracle_answer("e", {0, 1}, matrix) is Answer.YES

    def test_absent_from_all_missing_is_no(self, make_matrix):
        matrix = make_matrix({"e": {2}}, 4)
        assert oracle_answer("e", {0, 1}, matrix) is Answer.NO

    def test_anything_in_between_is_not_sure(self, make_matrix):
        matrix = make_matrix({"e": {0}}, 4)
        assert oracle_answer("e", {0, 1}, matrix) is Answer.NOT_SURE

    def test_empty_missing_rejected(self, make_matrix):
        matrix = make_matrix({"e": {0}}, 2)
        with pytest.raises(ValueError, match="empty"):
            oracle_answer("e", set(), matrix)
        with pytest.raises(ValueError, match="empty"):
            OracleReviewer(set(), matrix)


@pytest.fixture(scope="module")
def topic_run():
    st = make_topic("t", n_docs=240, n_relevant=10, n_entities=80, seed=6)
    features = build_features(st.store)
    state = run_cal(st.store, features, st.topic, st.qrels, stop_ratio=0.25, seed=2)
    return st, state


class TestComputeMissing:
    def test_set_difference(self, topic_run):
        st, state = topic_run
        missing = compute_missing(st.qrels, "t", state, st.store)
        relevant = set(st.relevant_docs)
        reviewed_relevant = {r.doc_index for r in state.reviewed if r.label == 1}
        assert missing == frozenset(relevant - reviewed_relevant)
        assert missing.isdisjoint(state.reviewed_set())

    def test_all_reviewed_gives_empty(self, topic_run):
        st, _ = topic_run
        features = build_features(st.store)
        full = run_cal(st.store, features, st.topic, st.qrels, stop_ratio=1.0, seed=2)
        assert compute_missing(st.qrels, "t", full, st.store) == frozenset()

    def test_no_relevant_topic_gives_empty(self, topic_run):
        st, state = topic_run
        assert compute_missing(st.qrels, "ghost-topic", state, st.store) == frozenset()


class TestOracleDominance:
    def test_missing_counts_are_maximal_throughout(self, make_matrix):
        rng = np.random.default_rng(11)
        for trial in range(20):
            n_docs = int(rng.integers(12, 40))
            n_entities = int(rng.integers(4, 12))
            entity_docs = {
                f"e{k}": set(int(d) for d in rng.choice(n_docs, size=rng.integers(1, n_docs), replace=False))
                for k in range(n_entities)
            }
            matrix = make_matrix(entity_docs, n_docs)
            missing = set(int(d) for d in rng.choice(n_docs, size=rng.integers(1, 4), replace=False))
            belief = Belief(np.arange(n_docs), np.full(n_docs, 0.5), np.zeros(n_docs, dtype=np.int64))
            pool = EntityPool(sorted(entity_docs))
            oracle = OracleReviewer(missing, matrix)
            result = run_session(belief, pool, matrix, oracle, n_entities,
                                 missing=missing, record_trace=True)
            yes_no = 0
            for step, record in enumerate(result.transcript, start=1):
                counts = result.count_trace[step]
                if record.answer is not Answer.NOT_SURE:
                    yes_no += 1
                positions = [np.flatnonzero(belief.candidate_docs == d)[0] for d in missing]
                for pos in positions:
                    assert counts[pos] == yes_no
                assert counts.max() == yes_no

    def test_missing_outrank_any_disagreeing_candidate(self, make_matrix):
        matrix = make_matrix({"a": {0, 1}, "b": {2, 3}}, 5)
        missing = {0, 1}
        belief = Belief(np.arange(5), np.full(5, 0.5), np.zeros(5, dtype=np.int64))
        oracle = OracleReviewer(missing, matrix)
        result = run_session(belief, EntityPool(["a", "b"]), matrix, oracle, 2, missing=missing)
        top_two = set(result.ranking[:2].tolist())
        assert top_two == missing


class TestScriptedAnswers:
    def test_replays_in_order(self):
        source = ScriptedAnswers(["yes", "no", Answer.NOT_SURE])
        assert source("a") is Answer.YES
        assert source("b") is Answer.NO
        assert source("c") is Answer.NOT_SURE
        with pytest.raises(RuntimeError):
            source("d")
