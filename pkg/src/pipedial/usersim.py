"""Agenda-based user simulator (fixed user NLU + rule agenda policy + user
NLG) and the session judge that scores inform recall, match rate and success.

Agenda conventions: answered requests leave the agenda, unanswered ones are
re-asked, a NoOffer drops the most recently informed constraint once, and a
system request outside the goal is answered with the wildcard value.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .acts import (
    BYE,
    DONTCARE,
    GENERAL_DOMAIN,
    INFORM,
    NOOFFER,
    RECOMMEND,
    REQUEST,
    SELECT,
    DialogAct,
)
from .nlg import TemplateBank, realize
from .ontology import NAME_SLOT, EntityDatabase, Ontology, UserGoal

MAX_TURNS = 20


@dataclass
class UserTurnOutcome:
    user_acts: tuple[DialogAct, ...]
    utterance: list[str] | None
    recovered_system_acts: tuple[DialogAct, ...]
    dialog_over: bool


@dataclass
class TurnRecord:
    """One user message + one system response, at the user-policy boundary."""

    turn: int
    user_acts: tuple[DialogAct, ...]
    user_utterance: list[str] | None
    system_acts: tuple[DialogAct, ...]
    system_utterance: list[str] | None
    recovered_acts: tuple[DialogAct, ...]
    reward_bonus: float = 0.0
    reward: float = 0.0

    def to_json(self) -> dict:
        return {
            "turn": self.turn,
            "user_acts": [a.render() for a in self.user_acts],
            "user_utterance": self.user_utterance,
            "system_acts": [a.render() for a in self.system_acts],
            "system_utterance": self.system_utterance,
            "recovered_acts": [a.render() for a in self.recovered_acts],
            "reward_bonus": self.reward_bonus,
            "reward": self.reward,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TurnRecord":
        return cls(
            turn=obj["turn"],
            user_acts=tuple(DialogAct.parse(a) for a in obj["user_acts"]),
            user_utterance=obj["user_utterance"],
            system_acts=tuple(DialogAct.parse(a) for a in obj["system_acts"]),
            system_utterance=obj["system_utterance"],
            recovered_acts=tuple(DialogAct.parse(a) for a in obj["recovered_acts"]),
            reward_bonus=obj.get("reward_bonus", 0.0),
            reward=obj.get("reward", 0.0),
        )


def trace_to_jsonl(trace) -> str:
    return "".join(json.dumps(r.to_json(), sort_keys=True) + "\n" for r in trace)


def trace_from_jsonl(text: str) -> list[TurnRecord]:
    return [TurnRecord.from_json(json.loads(line)) for line in text.splitlines() if line.strip()]


@dataclass
class JudgeResult:
    inform_recall: float
    match_rate: float
    success: bool
    turns: int

    def to_json(self) -> dict:
        return {
            "inform_recall": self.inform_recall,
            "match_rate": self.match_rate,
            "success": self.success,
            "turns": self.turns,
        }


def judge(goal: UserGoal, trace, db: EntityDatabase, max_turns: int = MAX_TURNS) -> JudgeResult:
    """Score a finished session from the acts at the user-policy boundary.

    Inform recall counts goal requests answered by recovered system informs;
    match rate checks the finally offered entity of each goal domain against
    the goal constraints; success requires both to be 1 within the turn cap.
    """
    wanted = {(p.domain, s) for p in goal.parts for s in p.requests}
    answered: set[tuple[str, str]] = set()
    offered: dict[str, str] = {}
    for record in trace:
        for act in record.recovered_acts:
            if act.intent in (INFORM, RECOMMEND) and act.value:
                if act.slot == NAME_SLOT:
                    offered[act.domain] = act.value
                if (act.domain, act.slot) in wanted:
                    answered.add((act.domain, act.slot))
    inform_recall = len(answered & wanted) / len(wanted) if wanted else 1.0
    matches = 0
    for part in goal.parts:
        name = offered.get(part.domain)
        entity = db.by_name(part.domain, name) if name else None
        if entity is not None and all(entity.get(s) == v for s, v in part.constraints.items()):
            matches += 1
    match_rate = matches / len(goal.parts) if goal.parts else 1.0
    turns = len(trace)
    success = inform_recall == 1.0 and match_rate == 1.0 and turns <= max_turns
    return JudgeResult(inform_recall, match_rate, success, turns)


class AgendaUserSimulator:
    """One per session; deterministic given (goal, rng seed).

    `patience` closes the dialog (as failed) after that many consecutive
    turns without progress, the agenda convention that stops a stalled
    system from holding the session hostage until the turn cap.
    """

    def __init__(
        self,
        goal: UserGoal,
        ontology: Ontology,
        db: EntityDatabase,
        rng: np.random.Generator,
        user_nlu=None,
        user_bank: TemplateBank | None = None,
        max_initiative: int = 3,
        patience: int = 3,
    ):
        self.goal = goal
        self.ontology = ontology
        self.db = db
        self.rng = rng
        self.user_nlu = user_nlu
        self.user_bank = user_bank
        self.max_initiative = max_initiative
        self.agenda: list[DialogAct] = []
        for part in goal.parts:
            for slot, value in part.constraints.items():
                self.agenda.append(DialogAct(INFORM, part.domain, slot, value))
            for slot in part.requests:
                self.agenda.append(DialogAct(REQUEST, part.domain, slot))
        self.informed_order: dict[str, list[str]] = {p.domain: [] for p in goal.parts}
        self.relaxed: dict[str, set[str]] = {p.domain: set() for p in goal.parts}
        self.answered: set[tuple[str, str]] = set()
        self.asked: set[tuple[str, str]] = set()
        self.offered: dict[str, str] = {}
        self.last_acts: tuple[DialogAct, ...] = ()
        self.patience = patience
        self._stalled = 0
        self._progress_mark = None

    # -- helpers --------------------------------------------------------------
    def _progress_signature(self):
        # system-attributable progress only, all components monotone: new
        # answers, first offers per domain, relaxations.  The user's own
        # agenda work never resets patience, so a system cannot coast by
        # letting the user talk or by asking an endless stream of questions.
        return (
            frozenset(self.answered),
            frozenset(self.offered),
            tuple(sorted((d, tuple(sorted(s))) for d, s in self.relaxed.items())),
        )

    def _out_of_patience(self) -> bool:
        mark = self._progress_signature()
        if mark == self._progress_mark:
            self._stalled += 1
        else:
            self._stalled = 0
            self._progress_mark = mark
        return self._stalled >= self.patience

    def agenda_empty(self) -> bool:
        return not self.agenda

    def all_requests_answered(self) -> bool:
        wanted = {(p.domain, s) for p in self.goal.parts for s in p.requests}
        return wanted <= self.answered

    def _emit(self, acts: list[DialogAct], recovered, dialog_over: bool) -> UserTurnOutcome:
        for act in acts:
            if act.intent == REQUEST:
                self.asked.add((act.domain, act.slot))
            elif act.intent == INFORM and act.value != DONTCARE:
                part = next((p for p in self.goal.parts if p.domain == act.domain), None)
                if part is not None and act.slot in part.constraints:
                    order = self.informed_order[act.domain]
                    if act.slot not in order:
                        order.append(act.slot)
        self.last_acts = tuple(acts)
        utterance = None
        if self.user_bank is not None and acts:
            utterance = realize(acts, self.user_bank, int(self.rng.integers(2**63)))
        return UserTurnOutcome(
            user_acts=tuple(acts),
            utterance=utterance,
            recovered_system_acts=tuple(sorted(recovered)),
            dialog_over=dialog_over,
        )

    def _pop_agenda(self, budget: int, anchor_domain: str | None = None) -> list[DialogAct]:
        """Pop up to `budget` items, never crossing a domain boundary."""
        out: list[DialogAct] = []
        while self.agenda and len(out) < budget:
            head = self.agenda[0]
            domain = anchor_domain if anchor_domain is not None else (out[0].domain if out else None)
            if domain is not None and head.domain != domain:
                break
            out.append(self.agenda.pop(0))
        return out

    # -- turns ----------------------------------------------------------------
    def initial_turn(self) -> UserTurnOutcome:
        return self._emit(self._pop_agenda(self.max_initiative), (), dialog_over=False)

    def respond(self, system_utterance=None, system_acts=None) -> UserTurnOutcome:
        """Parse the system turn, update the agenda, emit the next user acts."""
        if self.user_nlu is not None and system_utterance is not None:
            recovered = self.user_nlu.predict(system_utterance)
        else:
            recovered = set(system_acts or ())
        queued: list[DialogAct] = []
        for act in sorted(recovered):
            part = next((p for p in self.goal.parts if p.domain == act.domain), None)
            if act.intent in (INFORM, RECOMMEND, SELECT) and part is not None and act.value:
                if act.slot == NAME_SLOT:
                    self.offered[act.domain] = act.value
                if (act.domain, act.slot) in {(part.domain, s) for s in part.requests}:
                    self.answered.add((act.domain, act.slot))
                goal_value = part.constraints.get(act.slot)
                if (
                    act.intent == INFORM
                    and goal_value is not None
                    and act.value != goal_value
                    and act.slot not in self.relaxed[act.domain]
                ):
                    correction = DialogAct(INFORM, act.domain, act.slot, goal_value)
                    if correction not in queued and correction not in self.agenda:
                        queued.append(correction)
            elif act.intent == REQUEST and part is not None:
                slot_value = part.constraints.get(act.slot)
                schema = self.ontology.domain(act.domain)
                if slot_value is not None and act.slot not in self.relaxed[act.domain]:
                    queued.append(DialogAct(INFORM, act.domain, act.slot, slot_value))
                elif act.slot in schema.informable:
                    queued.append(DialogAct(INFORM, act.domain, act.slot, DONTCARE))
            elif act.intent == NOOFFER and part is not None:
                if not self.relaxed[act.domain]:
                    for slot in reversed(self.informed_order[act.domain]):
                        if slot not in self.relaxed[act.domain]:
                            self.relaxed[act.domain].add(slot)
                            self.agenda = [
                                a for a in self.agenda
                                if not (a.domain == act.domain and a.intent == INFORM and a.slot == slot)
                            ]
                            break

        if any(act.intent == BYE for act in recovered):
            # the system closed the conversation; answers above still count
            return self._emit([DialogAct(BYE, GENERAL_DOMAIN)], recovered, dialog_over=True)

        if not queued and self.agenda_empty() and self.all_requests_answered():
            return self._emit([DialogAct(BYE, GENERAL_DOMAIN)], recovered, dialog_over=True)

        if self._out_of_patience():
            return self._emit([DialogAct(BYE, GENERAL_DOMAIN)], recovered, dialog_over=True)

        if not recovered and self.last_acts and (system_utterance is not None or system_acts is not None):
            # nothing understood: repeat the previous message, agenda untouched
            return self._emit(list(self.last_acts), recovered, dialog_over=False)

        # unanswered requests from the previous user turn are re-asked
        pending = sorted(self.asked - self.answered)
        for domain, slot in pending:
            act = DialogAct(REQUEST, domain, slot)
            if act not in self.agenda:
                self.agenda.insert(0, act)
        self.asked.clear()

        # direct answers ride along without consuming the agenda budget: the
        # system cannot slow the user's own progress by asking questions
        out = list(queued)
        out.extend(self._pop_agenda(self.max_initiative))

        if not out:
            # nothing queued but goal unmet: nudge with the first open request
            pending_requests = sorted(
                {(p.domain, s) for p in self.goal.parts for s in p.requests} - self.answered
            )
            if pending_requests:
                domain, slot = pending_requests[0]
                out = [DialogAct(REQUEST, domain, slot)]
            else:
                return self._emit([DialogAct(BYE, GENERAL_DOMAIN)], recovered, dialog_over=True)
        return self._emit(out, recovered, dialog_over=False)
