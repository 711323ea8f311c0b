/**
 * Page shell: wires the assistant session and the review board to the
 * DOM. All behavior lives in the state classes; this file only routes
 * events and re-renders.
 */

import { ApiClient } from "./api.js";
import { AssistSession } from "./assist.js";
import { ReviewBoard } from "./review.js";
import { renderAssist, renderBoard } from "./render.js";

const params = new URLSearchParams(window.location.search);
const api = new ApiClient(params.get("api") ?? "http://127.0.0.1:8100");

const session = new AssistSession(api);
const board = new ReviewBoard(api);

const assistRoot = document.getElementById("assist");
const boardRoot = document.getElementById("board");
if (assistRoot === null || boardRoot === null) {
  throw new Error("page is missing #assist or #board");
}

function paintAssist(): void {
  assistRoot!.innerHTML = renderAssist(session);
}

function paintBoard(): void {
  boardRoot!.innerHTML = renderBoard(board);
}

assistRoot.addEventListener("input", (event) => {
  const target = event.target as HTMLElement;
  const field = target.dataset["field"];
  if (field === "sku" || field === "title" || field === "category") {
    session.form[field] = (target as HTMLInputElement).value;
  } else if (field === "draft") {
    session.editDraft((target as HTMLTextAreaElement).value);
  }
});

assistRoot.addEventListener("click", (event) => {
  const target = (event.target as HTMLElement).closest("[data-action]");
  if (target === null) return;
  const action = (target as HTMLElement).dataset["action"];
  if (action === "generate" && !session.busy) {
    void session.generate().then(paintAssist);
    paintAssist();
  } else if (action === "select") {
    session.selectCandidate(Number((target as HTMLElement).dataset["index"]));
    paintAssist();
  } else if (action === "submit" && session.canSubmit) {
    void session.submit().then(paintAssist);
    paintAssist();
  }
});

boardRoot.addEventListener("click", (event) => {
  const target = (event.target as HTMLElement).closest("[data-action]");
  if (target === null) return;
  const action = (target as HTMLElement).dataset["action"];
  const artifactId = (target as HTMLElement).dataset["artifact"];
  if (artifactId === undefined) return;
  if (action === "approve") {
    void board.approve(artifactId).then(paintBoard);
  } else if (action === "reject") {
    void board.reject(artifactId).then(paintBoard);
  }
  paintBoard();
});

paintAssist();
paintBoard();
void board.refresh().then(paintBoard);
board.startPolling();
setInterval(paintBoard, 1000);
