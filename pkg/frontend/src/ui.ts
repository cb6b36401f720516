// DOM rendering for the chat console; every mutation goes through render().

import type { Goal, Metrics, VerdictResult } from "./api.js";
import { requestedValueKeys, turnCounter, verdictEnabled, type UiSession } from "./state.js";

export function el(tag: string, className?: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderGoal(goal: Goal): HTMLElement {
  const panel = el("div", "goal-panel");
  panel.appendChild(el("h2", undefined, "your goal"));
  for (const part of goal.domains) {
    const card = el("div", "goal-card");
    card.appendChild(el("h3", undefined, part.domain));
    const info = el("div", "goal-info");
    info.appendChild(el("h4", undefined, "Info"));
    const infoList = el("ul");
    for (const [slot, value] of Object.entries(part.constraints)) {
      infoList.appendChild(el("li", undefined, `${slot} = ${value}`));
    }
    info.appendChild(infoList);
    const reqt = el("div", "goal-reqt");
    reqt.appendChild(el("h4", undefined, "Reqt"));
    const reqtList = el("ul");
    for (const slot of part.requests) {
      reqtList.appendChild(el("li", undefined, slot));
    }
    reqt.appendChild(reqtList);
    card.appendChild(info);
    card.appendChild(reqt);
    panel.appendChild(card);
  }
  return panel;
}

export function renderTranscript(session: UiSession): HTMLElement {
  const chat = el("div", "transcript");
  for (const message of session.messages) {
    const row = el("div", `message ${message.role}`);
    row.appendChild(el("span", "who", message.role === "human" ? "you" : "system"));
    row.appendChild(el("span", "text", message.text));
    chat.appendChild(row);
  }
  if (session.pendingReply) {
    chat.appendChild(el("div", "message system pending", "..."));
  }
  return chat;
}

export function renderVerdictForm(
  session: UiSession,
  onSubmit: (completed: boolean, values: Record<string, string>) => void,
): HTMLElement {
  const form = el("div", "verdict-form");
  form.appendChild(el("h2", undefined, "mark the dialog"));
  const enabled = verdictEnabled(session);
  const inputs = new Map<string, HTMLInputElement>();
  for (const key of requestedValueKeys(session.goal)) {
    const row = el("label", "verdict-row", `${key}: `);
    const input = document.createElement("input");
    input.type = "text";
    input.name = key;
    input.disabled = !enabled;
    row.appendChild(input);
    inputs.set(key, input);
    form.appendChild(row);
  }
  const completed = document.createElement("input");
  completed.type = "checkbox";
  completed.disabled = !enabled;
  const completedRow = el("label", "verdict-row", "system completed the dialog ");
  completedRow.appendChild(completed);
  form.appendChild(completedRow);
  const submit = document.createElement("button");
  submit.textContent = "submit verdict";
  submit.disabled = !enabled;
  submit.addEventListener("click", () => {
    const values: Record<string, string> = {};
    for (const [key, input] of inputs) {
      if (input.value.trim()) values[key] = input.value.trim();
    }
    onSubmit(completed.checked, values);
  });
  form.appendChild(submit);
  return form;
}

export function renderVerdictResult(verdict: VerdictResult): HTMLElement {
  const box = el("div", "verdict-result");
  box.appendChild(
    el("div", verdict.verified ? "badge success" : "badge failure",
       verdict.verified ? "verified success" : "not a verified success"),
  );
  for (const [key, check] of Object.entries(verdict.per_slot)) {
    const row = el("div", check.match ? "slot match" : "slot mismatch");
    row.textContent = `${key}: ${check.submitted ?? "(blank)"} ${check.match ? "ok" : "mismatch"}`;
    box.appendChild(row);
  }
  return box;
}

export function renderMetrics(metrics: Metrics): HTMLElement {
  const box = el("div", "metrics");
  box.appendChild(el("h2", undefined, "human-eval metrics"));
  const rate =
    metrics.verified_success_rate === null ? "n/a" : metrics.verified_success_rate.toFixed(2);
  const turns = metrics.mean_turns === null ? "n/a" : metrics.mean_turns.toFixed(1);
  box.appendChild(el("div", undefined, `sessions: ${metrics.sessions} (closed ${metrics.closed})`));
  box.appendChild(el("div", undefined, `verified success rate: ${rate}`));
  box.appendChild(el("div", undefined, `mean turns: ${turns}`));
  return box;
}

export function renderTurnCounter(session: UiSession): HTMLElement {
  return el("div", "turn-counter", turnCounter(session));
}
