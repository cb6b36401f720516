"""System pipeline wiring (NLU -> DST -> policy -> NLG) and the session
runner used by training, benchmarking, chat, and the service."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .acts import DialogAct, delexicalize, lexicalize
from .dst import BeliefState, DialogState, StateVectorizer, clear_answered, db_counts, update_belief
from .nlg import TemplateBank, realize
from .ontology import EntityDatabase, Ontology, UserGoal
from .policy import ActionSample
from .usersim import AgendaUserSimulator, JudgeResult, TurnRecord, judge


@dataclass
class SystemTurn:
    state_vec: np.ndarray
    sample: ActionSample | None
    delex_acts: tuple
    full_acts: tuple[DialogAct, ...]
    utterance: list[str] | None


class DialogSystem:
    """One dialog session's system side; reset() between sessions."""

    def __init__(
        self,
        ontology: Ontology,
        db: EntityDatabase,
        vectorizer: StateVectorizer,
        policy,
        nlu=None,
        system_bank: TemplateBank | None = None,
        decode: str = "sample",
    ):
        self.ontology = ontology
        self.db = db
        self.vectorizer = vectorizer
        self.policy = policy
        self.nlu = nlu
        self.system_bank = system_bank
        self.decode = decode
        self.tally: dict[str, int] = {}
        self.reset()

    def reset(self) -> None:
        self.belief = BeliefState.empty(self.ontology)
        self.last_system_acts: frozenset = frozenset()
        if getattr(self.policy, "symbolic", False):
            self.policy.reset()

    def observe(self, user_utterance=None, user_acts=None) -> tuple[np.ndarray, DialogState, set]:
        """NLU + DST only; returns (state vector, dialog state, parsed acts)."""
        if self.nlu is not None and user_utterance is not None:
            parsed = self.nlu.predict(user_utterance)
        else:
            parsed = set(user_acts or ())
        self.belief = update_belief(self.belief, sorted(parsed), self.ontology, self.tally)
        counts = db_counts(self.belief, self.db, self.ontology)
        state = DialogState(
            belief=self.belief,
            db_counts=counts,
            user_acts=frozenset(delexicalize(a) for a in parsed),
            last_system_acts=self.last_system_acts,
        )
        return self.vectorizer.vectorize(state), state, parsed

    def respond(self, user_utterance=None, user_acts=None, rng=None) -> SystemTurn:
        vec, state, parsed = self.observe(user_utterance, user_acts)
        active = self.belief.active_domain
        db_result = (
            self.db.query(active, self.belief.effective_constraints(active)) if active else []
        )
        if getattr(self.policy, "symbolic", False):
            delex_acts = tuple(self.policy.decide(self.belief, db_result, parsed))
            sample = None
        else:
            if self.decode == "greedy":
                sample = self.policy.greedy(vec)
            else:
                sample = self.policy.act(vec, rng)
            delex_acts = sample.executed
        full_acts = tuple(lexicalize(delex_acts, self.belief, db_result))
        self.belief = clear_answered(self.belief, full_acts)
        self.last_system_acts = frozenset(delexicalize(a) for a in full_acts)
        utterance = None
        if self.system_bank is not None:
            seed = int(rng.integers(2**63)) if rng is not None else 0
            utterance = realize(full_acts, self.system_bank, seed)
        return SystemTurn(vec, sample, delex_acts, full_acts, utterance)


@dataclass
class SessionResult:
    goal: UserGoal
    trace: list[TurnRecord]
    turns: list[tuple]       # (TurnRecord, SystemTurn) pairs in order
    judged: JudgeResult
    closing_user_acts: tuple[DialogAct, ...]


def run_session(
    system: DialogSystem,
    sim: AgendaUserSimulator,
    rng: np.random.Generator,
    act_level: bool = False,
    max_turns: int = 20,
) -> SessionResult:
    """Run one full dialog; the simulator speaks first, the cap closes it."""
    system.reset()
    outcome = sim.initial_turn()
    trace: list[TurnRecord] = []
    pairs: list[tuple[TurnRecord, SystemTurn]] = []
    closing: tuple[DialogAct, ...] = ()
    for t in range(1, max_turns + 1):
        if act_level:
            turn = system.respond(user_acts=outcome.user_acts, rng=rng)
            next_outcome = sim.respond(system_acts=turn.full_acts)
        else:
            turn = system.respond(user_utterance=outcome.utterance, rng=rng)
            next_outcome = sim.respond(system_utterance=turn.utterance)
        record = TurnRecord(
            turn=t,
            user_acts=outcome.user_acts,
            user_utterance=outcome.utterance,
            system_acts=turn.full_acts,
            system_utterance=turn.utterance,
            recovered_acts=next_outcome.recovered_system_acts,
        )
        trace.append(record)
        pairs.append((record, turn))
        if next_outcome.dialog_over:
            closing = next_outcome.user_acts
            break
        outcome = next_outcome
    judged = judge(sim.goal, trace, system.db, max_turns=max_turns)
    return SessionResult(goal=sim.goal, trace=trace, turns=pairs, judged=judged, closing_user_acts=closing)
