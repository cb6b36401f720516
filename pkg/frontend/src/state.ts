// Pure UI session state machine; rendering and transport live elsewhere.

import type { Goal, VerdictResult } from "./api.js";

export interface Message {
  role: "human" | "system";
  text: string;
  turn?: number;
}

export interface UiSession {
  sessionId: string;
  goal: Goal;
  turnLimit: number;
  messages: Message[];
  turnsUsed: number;
  dialogOver: boolean;
  endedByUser: boolean;
  pendingReply: boolean;
  verdict: VerdictResult | null;
}

export function newSession(sessionId: string, goal: Goal, turnLimit: number): UiSession {
  return {
    sessionId,
    goal,
    turnLimit,
    messages: [],
    turnsUsed: 0,
    dialogOver: false,
    endedByUser: false,
    pendingReply: false,
    verdict: null,
  };
}

export function canSend(s: UiSession, text: string): boolean {
  return (
    text.trim().length > 0 &&
    !s.pendingReply &&
    !s.dialogOver &&
    !s.endedByUser &&
    s.turnsUsed < s.turnLimit
  );
}

export function verdictEnabled(s: UiSession): boolean {
  return (s.dialogOver || s.endedByUser) && s.verdict === null;
}

export function turnCounter(s: UiSession): string {
  return `${s.turnsUsed} / ${s.turnLimit}`;
}

export function applyHumanMessage(s: UiSession, text: string): UiSession {
  // optimistic echo; rolled back by applySendFailure
  return {
    ...s,
    pendingReply: true,
    messages: [...s.messages, { role: "human", text }],
  };
}

export function applyReply(s: UiSession, reply: string, turnIndex: number, dialogOver: boolean): UiSession {
  return {
    ...s,
    pendingReply: false,
    turnsUsed: turnIndex,
    dialogOver: s.dialogOver || dialogOver,
    messages: [...s.messages, { role: "system", text: reply, turn: turnIndex }],
  };
}

export function applySendFailure(s: UiSession, conflict: boolean): UiSession {
  return {
    ...s,
    pendingReply: false,
    dialogOver: s.dialogOver || conflict,
    messages: s.messages.slice(0, -1),
  };
}

export function endSession(s: UiSession): UiSession {
  return { ...s, endedByUser: true };
}

export function applyVerdict(s: UiSession, verdict: VerdictResult): UiSession {
  return { ...s, verdict };
}

/** Keys of the verdict form, one per requested slot, in goal order. */
export function requestedValueKeys(goal: Goal): string[] {
  const keys: string[] = [];
  for (const part of goal.domains) {
    for (const slot of part.requests) {
      keys.push(`${part.domain}.${slot}`);
    }
  }
  return keys;
}
