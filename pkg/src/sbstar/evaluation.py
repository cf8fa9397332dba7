"""Metrics, baselines, the stop-ratio x question-budget grid, and reports.

Post-stop quality (AP, last_rel) is measured on the ranking of the
documents left unreviewed at the stopping point; total effort combines
both phases: documents reviewed, rank of the last relevant document in
the post-stop ranking, and questions asked.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Collection, Sequence

import numpy as np

from .cal import LrHyper, run_cal_checkpoints
from .corpus import EntityIncidenceMatrix, Topic, filter_entity_pool
from .reviewer import OracleReviewer, compute_missing
from .search import (
    Belief,
    EntityPool,
    SessionResult,
    final_ranking,
    init_belief,
    random_selector,
    run_session,
)

log = logging.getLogger(__name__)

STRATEGY_BMI = "bmi"
STRATEGY_LR = "bmi_lr"
STRATEGY_RANDOM = "random"
STRATEGY_SBSTAR = "sbstar"
QUESTION_STRATEGIES = (STRATEGY_SBSTAR, STRATEGY_RANDOM)
ALL_STRATEGIES = (STRATEGY_BMI, STRATEGY_LR, STRATEGY_RANDOM, STRATEGY_SBSTAR)
DISPLAY_NAMES = {
    STRATEGY_BMI: "BMI",
    STRATEGY_LR: "BMI+LR",
    STRATEGY_RANDOM: "BMI+Random",
    STRATEGY_SBSTAR: "SBSTAR",
}

EFFORT_DEFINITION = (
    "effort = documents reviewed before the stopping point"
    " + rank of the last relevant document in the post-stop ranking"
    " + questions asked; when every relevant document was already reviewed,"
    " the rank of the last relevant document within the review order is used"
    " instead of the first two terms"
)


def average_precision(ranking: Sequence[int] | np.ndarray, relevant: Collection[int]) -> float:
    """Mean over relevant documents of precision at their rank.

    Relevant documents absent from the ranking contribute zero.
    """
    relevant = set(relevant)
    if not relevant:
        raise ValueError("average precision is undefined without relevant documents")
    hits = 0
    total = 0.0
    for rank, doc in enumerate(ranking, start=1):
        if doc in relevant:
            hits += 1
            total += hits / rank
    return total / len(relevant)


def last_rel(ranking: Sequence[int] | np.ndarray, relevant: Collection[int]) -> int:
    """1-based rank of the last relevant document in the ranking."""
    relevant = set(relevant)
    if not relevant:
        raise ValueError("last_rel is undefined without relevant documents")
    last = 0
    found = 0
    for rank, doc in enumerate(ranking, start=1):
        if doc in relevant:
            last = rank
            found += 1
    if found != len(relevant):
        raise ValueError("a relevant document is missing from the ranking")
    return last


def total_effort(docs_reviewed_in_cal: int, n_questions: int, last_rel_post: int) -> int:
    if min(docs_reviewed_in_cal, n_questions, last_rel_post) < 0:
        raise ValueError("effort components must be nonnegative")
    return docs_reviewed_in_cal + last_rel_post + n_questions


def baseline_random_questions(
    belief: Belief,
    pool: EntityPool,
    matrix: EntityIncidenceMatrix,
    answer_source,
    n_questions: int,
    seed: int,
    **kwargs,
) -> SessionResult:
    """A question session that picks entities uniformly at random."""
    return run_session(
        belief, pool, matrix, answer_source, n_questions,
        selector=random_selector(seed), **kwargs,
    )


def derive_seed(*parts) -> int:
    """Stable sub-seed from a path of identifiers."""
    digest = hashlib.sha256("/".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass
class RunMetrics:
    topic_id: str
    strategy: str
    stop_ratio: float
    n_questions: int
    questions_asked: int
    docs_reviewed: int
    ap: float | None
    last_rel: int | None
    effort: int
    rank_trace: list[int] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "topic_id": self.topic_id,
            "strategy": self.strategy,
            "stop_ratio": self.stop_ratio,
            "n_questions": self.n_questions,
            "questions_asked": self.questions_asked,
            "docs_reviewed": self.docs_reviewed,
            "ap": self.ap,
            "last_rel": self.last_rel,
            "effort": self.effort,
            "rank_trace": self.rank_trace,
            "flags": self.flags,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "RunMetrics":
        return cls(**data)


@dataclass
class GridCell:
    stop_ratio: float
    n_questions: int
    mean_effort: float
    mean_ap: float | None
    mean_last_rel: float | None
    optimal: bool = False

    def to_json_dict(self) -> dict:
        return {
            "stop_ratio": self.stop_ratio,
            "n_questions": self.n_questions,
            "mean_effort": self.mean_effort,
            "mean_ap": self.mean_ap,
            "mean_last_rel": self.mean_last_rel,
            "optimal": self.optimal,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "GridCell":
        return cls(**data)


@dataclass
class GridResult:
    metrics: list[RunMetrics]
    cells: dict[str, list[GridCell]]
    transcripts: list[dict]
    failures: list[dict]
    notes: dict

    def to_json_dict(self) -> dict:
        return {
            "metrics": [m.to_json_dict() for m in self.metrics],
            "cells": {s: [c.to_json_dict() for c in cells] for s, cells in self.cells.items()},
            "transcripts": self.transcripts,
            "failures": self.failures,
            "notes": self.notes,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "GridResult":
        return cls(
            metrics=[RunMetrics.from_json_dict(m) for m in data["metrics"]],
            cells={s: [GridCell.from_json_dict(c) for c in cells] for s, cells in data["cells"].items()},
            transcripts=data["transcripts"],
            failures=data["failures"],
            notes=data["notes"],
        )


def _lr_ranking(candidates: np.ndarray, probs: np.ndarray) -> np.ndarray:
    order = np.lexsort((candidates, -probs[candidates]))
    return candidates[order]


def _rank_of_last_in_order(order: Sequence[int], docs: Collection[int]) -> int:
    position = {doc: i for i, doc in enumerate(order)}
    return max(position[d] for d in docs) + 1


def run_grid(
    bundle,
    topics: Sequence[Topic],
    stop_ratios: Sequence[float],
    question_counts: Sequence[int],
    strategies: Sequence[str],
    *,
    base_seed: int = 0,
    hyper: LrHyper | None = None,
    batch_growth: float = 0.1,
    min_df: int = 1,
    max_df_ratio: float = 1.0,
    alpha_floor: float = 1e-6,
    prior_scale: float = 1.0,
) -> GridResult:
    """Run the full experimental protocol over topics x stop ratios x budgets.

    One review pass per topic covers every stopping point (checkpointed at
    each crossing); question strategies run one max-budget session per
    checkpoint and smaller budgets are read off the recorded count trace,
    which is identical to running them separately. Per-cell failures are
    collected, not raised.
    """
    ratios = sorted({float(r) for r in stop_ratios})
    budgets = sorted({int(q) for q in question_counts})
    strategies = list(dict.fromkeys(strategies))
    if not ratios or not budgets or not strategies:
        raise ValueError("stop_ratios, question_counts, and strategies must be non-empty")
    unknown = [s for s in strategies if s not in ALL_STRATEGIES]
    if unknown:
        raise ValueError(f"unknown strategies: {unknown}")
    if any(b < 0 for b in budgets):
        raise ValueError("question budgets must be nonnegative")
    if not topics:
        raise ValueError("need at least one topic")

    store, matrix, features, qrels = bundle.store, bundle.matrix, bundle.features, bundle.qrels
    cal_ratios = sorted(set(ratios) | ({1.0} if STRATEGY_BMI in strategies else set()))

    metrics: list[RunMetrics] = []
    transcripts: list[dict] = []
    failures: list[dict] = []
    excluded: list[dict] = []

    for topic in topics:
        try:
            states = run_cal_checkpoints(
                store, features, topic, qrels, cal_ratios,
                hyper=hyper, seed=derive_seed(base_seed, topic.topic_id, "cal"),
                batch_growth=batch_growth,
            )
        except Exception as exc:  # noqa: BLE001 - grid must survive bad topics
            log.exception("review phase failed for topic %s", topic.topic_id)
            failures.append({"topic_id": topic.topic_id, "stage": "cal", "error": str(exc)})
            continue
        relevant = qrels.relevant_indices(topic.topic_id, store)
        if not relevant:
            excluded.append({"topic_id": topic.topic_id, "reason": "no relevant documents in qrels"})
            continue
        full_state = states.get(1.0)

        for ratio in ratios:
            state = states[ratio]
            n_reviewed = len(state.reviewed)
            review_order = state.reviewed_docs()
            candidates = state.unreviewed_docs(len(store))
            missing = compute_missing(qrels, topic.topic_id, state, store)
            cal_last = None if missing else _rank_of_last_in_order(review_order, relevant)

            for strategy in strategies:
                try:
                    if strategy in (STRATEGY_BMI, STRATEGY_LR):
                        if not missing:
                            metrics.append(RunMetrics(
                                topic.topic_id, strategy, ratio, 0, 0, n_reviewed,
                                ap=None, last_rel=None, effort=total_effort(cal_last, 0, 0),
                                flags=["missing_empty"],
                            ))
                            continue
                        if strategy == STRATEGY_BMI:
                            post = full_state.reviewed_docs()[n_reviewed:]
                        else:
                            post = _lr_ranking(candidates, state.relevance_probs)
                        post_last = last_rel(post, missing)
                        metrics.append(RunMetrics(
                            topic.topic_id, strategy, ratio, 0, 0, n_reviewed,
                            ap=average_precision(post, missing),
                            last_rel=post_last,
                            effort=total_effort(n_reviewed, 0, post_last),
                        ))
                        continue

                    # Question-asking strategies.
                    if not missing:
                        for budget in budgets:
                            metrics.append(RunMetrics(
                                topic.topic_id, strategy, ratio, budget, 0, n_reviewed,
                                ap=None, last_rel=None, effort=total_effort(cal_last, 0, 0),
                                flags=["missing_empty"],
                            ))
                        continue
                    pool_labels = filter_entity_pool(matrix, candidates, min_df, max_df_ratio)
                    belief0 = init_belief(state.relevance_probs, candidates, alpha_floor, prior_scale)
                    oracle = OracleReviewer(missing, matrix)
                    selector = None
                    if strategy == STRATEGY_RANDOM:
                        selector = random_selector(derive_seed(base_seed, topic.topic_id, ratio, strategy))
                    result = run_session(
                        belief0, EntityPool(pool_labels), matrix, oracle, max(budgets),
                        lr_probs=state.relevance_probs, missing=missing,
                        selector=selector, record_trace=True,
                    )
                    transcripts.append({
                        "topic_id": topic.topic_id,
                        "stop_ratio": ratio,
                        "strategy": strategy,
                        "n_questions": max(budgets),
                        "initial_last_rel": result.initial_last_rel,
                        "records": [rec.to_json_dict() for rec in result.transcript],
                    })
                    for budget in budgets:
                        asked = min(budget, result.questions_asked)
                        belief_k = Belief(belief0.candidate_docs, belief0.alpha, result.count_trace[asked])
                        ranking_k = final_ranking(belief_k, state.relevance_probs)
                        post_last = last_rel(ranking_k, missing)
                        flags = ["pool_exhausted"] if asked < budget else []
                        metrics.append(RunMetrics(
                            topic.topic_id, strategy, ratio, budget, asked, n_reviewed,
                            ap=average_precision(ranking_k, missing),
                            last_rel=post_last,
                            effort=total_effort(n_reviewed, asked, post_last),
                            rank_trace=[rec.last_rel_after for rec in result.transcript[:asked]],
                            flags=flags,
                        ))
                except Exception as exc:  # noqa: BLE001
                    log.exception(
                        "cell failed: topic=%s ratio=%s strategy=%s",
                        topic.topic_id, ratio, strategy,
                    )
                    failures.append({
                        "topic_id": topic.topic_id,
                        "stop_ratio": ratio,
                        "strategy": strategy,
                        "error": str(exc),
                    })

    cells = {
        strategy: _aggregate_cells(metrics, strategy, ratios, budgets)
        for strategy in strategies
        if strategy in QUESTION_STRATEGIES
    }
    notes = {
        "effort_definition": EFFORT_DEFINITION,
        "excluded_topics": excluded,
        "post_stop_metrics": "AP and last_rel are computed only on documents ranked after the stopping point;"
                             " topics with no missing relevant documents at the stop are excluded from MAP",
    }
    return GridResult(metrics=metrics, cells=cells, transcripts=transcripts, failures=failures, notes=notes)


def _aggregate_cells(
    metrics: Sequence[RunMetrics],
    strategy: str,
    ratios: Sequence[float],
    budgets: Sequence[int],
) -> list[GridCell]:
    cells: list[GridCell] = []
    for ratio in ratios:
        row: list[GridCell] = []
        for budget in budgets:
            rows = [m for m in metrics
                    if m.strategy == strategy and m.stop_ratio == ratio and m.n_questions == budget]
            if not rows:
                continue
            aps = [m.ap for m in rows if m.ap is not None]
            lasts = [m.last_rel for m in rows if m.last_rel is not None]
            row.append(GridCell(
                stop_ratio=ratio,
                n_questions=budget,
                mean_effort=float(np.mean([m.effort for m in rows])),
                mean_ap=float(np.mean(aps)) if aps else None,
                mean_last_rel=float(np.mean(lasts)) if lasts else None,
            ))
        if row:
            best = min(row, key=lambda c: (c.mean_effort, c.n_questions))
            best.optimal = True
        cells.extend(row)
    return cells


def optimal_budgets(cells: Sequence[GridCell]) -> dict[float, int]:
    """Per stop-ratio question count flagged optimal (argmin mean effort)."""
    return {c.stop_ratio: c.n_questions for c in cells if c.optimal}


def _mean_or_none(values: list[float]) -> float | None:
    return float(np.mean(values)) if values else None


def comparison_table(result: GridResult, strategies: Sequence[str]) -> list[dict]:
    """Strategy comparison at each stop ratio, near-optimal budgets applied.

    Question strategies are evaluated at the per-row optimal budget from the
    searched-selection heatmap when available (its own otherwise); review-only
    strategies ignore the budget.
    """
    ratios = sorted({m.stop_ratio for m in result.metrics})
    reference = result.cells.get(STRATEGY_SBSTAR) or next(iter(result.cells.values()), [])
    chosen = optimal_budgets(reference)
    rows: list[dict] = []
    for ratio in ratios:
        row: dict = {"stop_ratio": ratio, "n_questions": chosen.get(ratio)}
        for strategy in strategies:
            budget = chosen.get(ratio, 0) if strategy in QUESTION_STRATEGIES else 0
            cell_rows = [m for m in result.metrics
                         if m.strategy == strategy and m.stop_ratio == ratio and m.n_questions == budget]
            row[f"map_{strategy}"] = _mean_or_none([m.ap for m in cell_rows if m.ap is not None])
            row[f"last_rel_{strategy}"] = _mean_or_none(
                [float(m.last_rel) for m in cell_rows if m.last_rel is not None])
        rows.append(row)
    if rows:
        avg: dict = {"stop_ratio": "avg", "n_questions": None}
        for strategy in strategies:
            avg[f"map_{strategy}"] = _mean_or_none(
                [r[f"map_{strategy}"] for r in rows if r[f"map_{strategy}"] is not None])
            avg[f"last_rel_{strategy}"] = _mean_or_none(
                [r[f"last_rel_{strategy}"] for r in rows if r[f"last_rel_{strategy}"] is not None])
        rows.append(avg)
    return rows


def _fmt(value, digits: int = 6) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.{digits}f}"
    return str(value)


def emit_reports(result: GridResult, out_dir: str | Path, config_snapshot: dict | None = None) -> dict[str, Path]:
    """Write the heatmap, metrics, comparison, and transcript files."""
    if not result.metrics:
        raise ValueError("no metrics to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}

    strategies = list(dict.fromkeys(m.strategy for m in result.metrics))

    metrics_path = out / "metrics.csv"
    with metrics_path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "topic_id", "strategy", "stop_ratio", "n_questions", "questions_asked",
            "docs_reviewed", "ap", "last_rel", "effort", "flags",
        ])
        for m in result.metrics:
            writer.writerow([
                m.topic_id, m.strategy, _fmt(m.stop_ratio, 4), m.n_questions, m.questions_asked,
                m.docs_reviewed, _fmt(m.ap), m.last_rel if m.last_rel is not None else "",
                m.effort, ";".join(m.flags),
            ])
    written["metrics"] = metrics_path

    for strategy, cells in result.cells.items():
        if not cells:
            continue
        budgets = sorted({c.n_questions for c in cells})
        ratios = sorted({c.stop_ratio for c in cells})
        by_key = {(c.stop_ratio, c.n_questions): c for c in cells}
        heatmap_path = out / f"heatmap_{strategy}.csv"
        with heatmap_path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["stop_ratio"] + [f"q{b}" for b in budgets] + ["optimal_n_questions"])
            for ratio in ratios:
                row_cells = [by_key.get((ratio, b)) for b in budgets]
                optimal = next((c.n_questions for c in row_cells if c is not None and c.optimal), "")
                writer.writerow(
                    [_fmt(ratio, 4)]
                    + [_fmt(c.mean_effort, 3) if c is not None else "" for c in row_cells]
                    + [optimal]
                )
        written[f"heatmap_{strategy}"] = heatmap_path

    comparison = comparison_table(result, strategies)
    comparison_path = out / "comparison.csv"
    with comparison_path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        header = ["stop_ratio", "n_questions"]
        for strategy in strategies:
            header.append(f"map_{strategy}")
        for strategy in strategies:
            header.append(f"last_rel_{strategy}")
        writer.writerow(header)
        for row in comparison:
            out_row = [row["stop_ratio"] if isinstance(row["stop_ratio"], str) else _fmt(row["stop_ratio"], 4),
                       row["n_questions"] if row["n_questions"] is not None else ""]
            for strategy in strategies:
                out_row.append(_fmt(row[f"map_{strategy}"]))
            for strategy in strategies:
                out_row.append(_fmt(row[f"last_rel_{strategy}"], 3))
            writer.writerow(out_row)
    written["comparison"] = comparison_path

    transcripts_path = out / "transcripts.json"
    transcripts_path.write_text(json.dumps(result.transcripts, indent=2), encoding="utf-8")
    written["transcripts"] = transcripts_path

    raw_path = out / "raw_results.json"
    raw_path.write_text(json.dumps(result.to_json_dict()), encoding="utf-8")
    written["raw_results"] = raw_path

    manifest = {
        "notes": result.notes,
        "failures": result.failures,
        "config": config_snapshot or {},
        "files": {k: p.name for k, p in written.items()},
    }
    manifest_path = out / "report_manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    written["manifest"] = manifest_path
    return written
