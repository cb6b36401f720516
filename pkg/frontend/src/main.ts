// Entry point: wires the service client, the session state machine, and the
// DOM together. One active session per tab; requests serialized per session.

import { ServiceClient, ServiceError } from "./api.js";
import {
  applyHumanMessage,
  applyReply,
  applySendFailure,
  applyVerdict,
  canSend,
  endSession,
  newSession,
  verdictEnabled,
  type UiSession,
} from "./state.js";
import {
  el,
  renderGoal,
  renderMetrics,
  renderTranscript,
  renderTurnCounter,
  renderVerdictForm,
  renderVerdictResult,
} from "./ui.js";

const client = new ServiceClient("");
let session: UiSession | null = null;

function root(): HTMLElement {
  return document.getElementById("app")!;
}

function render(error?: string): void {
  const app = root();
  app.replaceChildren();
  const bar = el("div", "toolbar");
  const start1 = document.createElement("button");
  start1.textContent = "new session (1 domain)";
  start1.addEventListener("click", () => start(1));
  const start3 = document.createElement("button");
  start3.textContent = "new session (3 domains)";
  start3.addEventListener("click", () => start(3));
  const metricsButton = document.createElement("button");
  metricsButton.textContent = "metrics";
  metricsButton.addEventListener("click", showMetrics);
  bar.append(start1, start3, metricsButton);
  app.appendChild(bar);
  if (error) {
    const banner = el("div", "error-banner", error);
    const retry = document.createElement("button");
    retry.textContent = "retry";
    retry.addEventListener("click", () => render());
    banner.appendChild(retry);
    app.appendChild(banner);
  }
  if (!session) {
    app.appendChild(el("p", "hint", "start a session to chat with the system"));
    return;
  }
  const s = session;
  app.appendChild(renderGoal(s.goal));
  app.appendChild(renderTurnCounter(s));
  app.appendChild(renderTranscript(s));

  const composer = el("div", "composer");
  const input = document.createElement("input");
  input.type = "text";
  input.id = "composer-input";
  input.placeholder = s.dialogOver ? "session closed" : "type a message";
  input.disabled = s.dialogOver || s.endedByUser || s.turnsUsed >= s.turnLimit;
  const send = document.createElement("button");
  send.textContent = "send";
  send.disabled = input.disabled;
  send.addEventListener("click", () => {
    void sendMessage(input.value);
  });
  input.addEventListener("keydown", (event) => {
    if (event.key === "Enter") void sendMessage(input.value);
  });
  const end = document.createElement("button");
  end.textContent = "end session";
  end.disabled = s.endedByUser || s.dialogOver;
  end.addEventListener("click", () => {
    session = endSession(s);
    render();
  });
  composer.append(input, send, end);
  app.appendChild(composer);

  if (s.verdict) {
    app.appendChild(renderVerdictResult(s.verdict));
  } else if (verdictEnabled(s)) {
    app.appendChild(renderVerdictForm(s, (completed, values) => void submitVerdict(completed, values)));
  }
}

async function start(nDomains: number): Promise<void> {
  try {
    const created = await client.createSession(nDomains);
    session = newSession(created.session_id, created.goal, created.turn_limit);
    render();
  } catch (error) {
    render(`could not reach the service: ${(error as Error).message}`);
  }
}

async function sendMessage(text: string): Promise<void> {
  if (!session || !canSend(session, text)) return;
  session = applyHumanMessage(session, text);
  render();
  try {
    const reply = await client.sendUtterance(session.sessionId, text);
    session = applyReply(session, reply.reply, reply.turn_index, reply.dialog_over);
  } catch (error) {
    const conflict = error instanceof ServiceError && error.status === 409;
    session = applySendFailure(session, conflict);
  }
  render();
}

async function submitVerdict(completed: boolean, values: Record<string, string>): Promise<void> {
  if (!session) return;
  try {
    const verdict = await client.submitVerdict(session.sessionId, completed, values);
    session = applyVerdict(session, verdict);
    render();
  } catch (error) {
    render(`verdict rejected: ${(error as Error).message}`);
  }
}

async function showMetrics(): Promise<void> {
  try {
    const metrics = await client.metrics();
    const app = root();
    app.appendChild(renderMetrics(metrics));
  } catch (error) {
    render(`could not load metrics: ${(error as Error).message}`);
  }
}

render();
