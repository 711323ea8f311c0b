/**
 * Pure view functions: state in, HTML string out. The page shell owns
 * the DOM; keeping these pure makes every rendered figure checkable in
 * plain node.
 */

import { Artifact } from "./api.js";
import { AssistSession } from "./assist.js";
import { ReviewBoard } from "./review.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

function verdictBlock(artifact: Artifact): string {
  if (artifact.verdict.accepted) {
    return '<p class="verdict verdict-ok">filters: accepted</p>';
  }
  const items = artifact.verdict.reasons
    .map(
      ([rule, evidence]) =>
        `<li><code>${escapeHtml(rule)}</code> ${escapeHtml(evidence)}</li>`,
    )
    .join("");
  return `<div class="verdict verdict-bad"><p>filters: rejected</p><ul>${items}</ul></div>`;
}

export function renderAssist(session: AssistSession): string {
  const parts: string[] = ['<section class="assist">'];
  parts.push(`
    <form data-form="assist">
      <label>sku <input data-field="sku" value="${escapeHtml(session.form.sku)}"></label>
      <label>title <input data-field="title" value="${escapeHtml(session.form.title)}"></label>
      <label>category <input data-field="category" value="${escapeHtml(session.form.category)}"></label>
      <button type="button" data-action="generate"
        ${session.busy || !session.formValid ? "disabled" : ""}>generate</button>
    </form>`);
  if (session.error !== null) {
    parts.push(`<p class="error" role="alert">${escapeHtml(session.error)}</p>`);
  }
  if (session.status === "generating") {
    parts.push('<p class="busy">generating…</p>');
  }
  const artifact = session.artifact;
  if (artifact !== null) {
    parts.push(
      `<p><span class="badge badge-${escapeHtml(artifact.provenance)}">${escapeHtml(
        artifact.provenance,
      )}</span> <span class="version">${escapeHtml(artifact.model_version)}</span>${
        session.latencyMs === null
          ? ""
          : ` <span class="latency">${session.latencyMs.toFixed(1)} ms</span>`
      }</p>`,
    );
    const rows = artifact.candidates
      .map(
        (candidate, index) => `
      <li class="${index === session.selected ? "candidate selected" : "candidate"}">
        <button type="button" data-action="select" data-index="${index}">use</button>
        <span class="score">${candidate.score.toFixed(3)}</span>
        <span class="text">${escapeHtml(candidate.text)}</span>
      </li>`,
      )
      .join("");
    parts.push(`<ol class="candidates">${rows}</ol>`);
    parts.push(verdictBlock(artifact));
    parts.push(`
      <textarea data-field="draft" rows="4">${escapeHtml(session.draft)}</textarea>
      <button type="button" data-action="submit" ${session.canSubmit ? "" : "disabled"}>
        approve &amp; publish</button>`);
    if (session.status === "submitted") {
      parts.push('<p class="done">submitted: approved for publication</p>');
    }
  }
  parts.push("</section>");
  return parts.join("\n");
}

export function renderBoard(board: ReviewBoard): string {
  const parts: string[] = ['<section class="board">'];
  parts.push(
    `<p>acceptance rate today: <span class="rate">${escapeHtml(
      board.acceptanceRateText,
    )}</span></p>`,
  );
  if (board.error !== null) {
    parts.push(`<p class="error" role="alert">${escapeHtml(board.error)}</p>`);
  }
  if (board.pending.length === 0) {
    parts.push('<p class="empty">nothing awaiting review</p>');
  } else {
    const rows = board.pending
      .map(
        (artifact) => `
      <tr data-artifact="${escapeHtml(artifact.artifact_id)}">
        <td>${escapeHtml(artifact.sku)}</td>
        <td>${escapeHtml(artifact.text)}</td>
        <td>
          <button type="button" data-action="approve"
            data-artifact="${escapeHtml(artifact.artifact_id)}"
            ${board.isDeciding(artifact.artifact_id) ? "disabled" : ""}>approve</button>
          <button type="button" data-action="reject"
            data-artifact="${escapeHtml(artifact.artifact_id)}"
            ${board.isDeciding(artifact.artifact_id) ? "disabled" : ""}>reject</button>
        </td>
      </tr>`,
      )
      .join("");
    parts.push(
      `<table class="queue"><thead><tr><th>sku</th><th>text</th><th></th></tr></thead><tbody>${rows}</tbody></table>`,
    );
  }
  parts.push("</section>");
  return parts.join("\n");
}
