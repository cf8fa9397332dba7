// Pure view -> HTML string rendering, kept DOM-free so it is testable in
// node. ui.ts mounts this into the page and wires events.

import type { SessionView } from "./controller.js";

export function escapeHtml(raw: string): string {
  return raw
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;")
    .replaceAll("'", "&#39;");
}

function bannerHtml(view: SessionView): string {
  if (!view.banner) return "";
  return `<div class="banner" role="alert">${escapeHtml(view.banner)}
    <button data-action="retry">retry</button></div>`;
}

function questionHtml(view: SessionView): string {
  if (view.phase === "finished") {
    const note = view.poolExhausted ? " (question pool exhausted)" : "";
    return `<div class="question finished">Session finished${note}. Final ranking below.</div>`;
  }
  if (!view.question) {
    return `<div class="question">No session. Pick a topic and start.</div>`;
  }
  const disabled = view.canAnswer ? "" : " disabled";
  return `
    <div class="question">
      <p class="question-text">${escapeHtml(view.question.text)}</p>
      <div class="answers">
        <button data-action="answer" data-answer="yes"${disabled}>Yes</button>
        <button data-action="answer" data-answer="no"${disabled}>No</button>
        <button data-action="answer" data-answer="not_sure"${disabled}>Not sure</button>
      </div>
    </div>`;
}

function progressHtml(view: SessionView): string {
  if (!view.sessionId) return "";
  return `<div class="progress">question ${Math.min(view.questionsAsked + 1, view.budget)}
    of ${view.budget} &middot; ${view.questionsRemaining} remaining</div>`;
}

function transcriptHtml(view: SessionView): string {
  const rows = view.transcript
    .map((row, i) => {
      const rank = row.last_rel_after !== undefined ? String(row.last_rel_after) : "";
      return `<tr><td>${i + 1}</td><td>${escapeHtml(row.entity)}</td>
        <td class="answer-${row.answer}">${row.answer.replace("_", " ")}</td><td>${rank}</td></tr>`;
    })
    .join("");
  const rankHeader = view.transcript.some((r) => r.last_rel_after !== undefined)
    ? "rank of last relevant"
    : "";
  return `
    <table class="transcript">
      <thead><tr><th>#</th><th>question entity</th><th>answer</th><th>${rankHeader}</th></tr></thead>
      <tbody>${rows}</tbody>
    </table>`;
}

function rankingHtml(view: SessionView): string {
  const rows = view.ranking
    .map(
      (item) => `<tr><td>${item.rank}</td><td>${escapeHtml(item.external_id)}</td>
        <td>${escapeHtml(item.title)}</td><td>${item.score.toExponential(3)}</td></tr>`,
    )
    .join("");
  return `
    <table class="ranking">
      <thead><tr><th>rank</th><th>document</th><th>title</th><th>preference</th></tr></thead>
      <tbody>${rows}</tbody>
    </table>
    <div class="ranking-total">${view.ranking.length} of ${view.totalCandidates} candidates shown</div>`;
}

export function renderSession(view: SessionView): string {
  return `
    ${bannerHtml(view)}
    ${questionHtml(view)}
    ${progressHtml(view)}
    <section class="panel"><h2>Transcript</h2>${transcriptHtml(view)}</section>
    <section class="panel"><h2>Top ranked documents</h2>${rankingHtml(view)}</section>`;
}
