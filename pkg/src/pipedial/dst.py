"""Rule-based dialog state tracking and the binary state vectorization that
feeds the policy."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .acts import DONTCARE, GENERAL_DOMAIN, INFORM, RECOMMEND, REQUEST, ActionVocabulary, DelexAct
from .ontology import EntityDatabase, Ontology

DB_BUCKETS = ((0, 0), (1, 1), (2, 4), (5, None))


@dataclass(frozen=True)
class BeliefState:
    """Per-domain constraints and outstanding requests; value semantics."""

    constraints: dict[str, dict[str, str]]
    requested: dict[str, set[str]]
    active_domain: str | None = None

    @classmethod
    def empty(cls, ontology: Ontology) -> "BeliefState":
        return cls(
            constraints={d.name: {} for d in ontology.domains},
            requested={d.name: set() for d in ontology.domains},
        )

    def _copy(self):
        return (
            {d: dict(c) for d, c in self.constraints.items()},
            {d: set(r) for d, r in self.requested.items()},
        )

    def effective_constraints(self, domain: str) -> dict[str, str]:
        """Constraints as fed to the database (dontcare wildcards excluded)."""
        return {s: v for s, v in self.constraints.get(domain, {}).items() if v != DONTCARE}


def update_belief(
    belief: BeliefState,
    user_acts,
    ontology: Ontology,
    tally: dict[str, int] | None = None,
) -> BeliefState:
    """Fold one turn of user acts into a fresh belief state.

    Inform writes (later informs overwrite), request adds requested slots,
    the latest act's domain becomes active.  Acts naming unknown domains or
    slots are skipped and counted in `tally["ignored_acts"]`.
    """
    constraints, requested = belief._copy()
    active = belief.active_domain
    domains = set(ontology.domain_names)
    for act in user_acts:
        if act.domain == GENERAL_DOMAIN:
            continue
        if act.domain not in domains:
            if tally is not None:
                tally["ignored_acts"] = tally.get("ignored_acts", 0) + 1
            continue
        schema = ontology.domain(act.domain)
        if act.intent == INFORM:
            if act.slot not in schema.informable:
                if tally is not None:
                    tally["ignored_acts"] = tally.get("ignored_acts", 0) + 1
                continue
            constraints[act.domain][act.slot] = act.value
            active = act.domain
        elif act.intent == REQUEST:
            if act.slot not in schema.requestable:
                if tally is not None:
                    tally["ignored_acts"] = tally.get("ignored_acts", 0) + 1
                continue
            requested[act.domain].add(act.slot)
            active = act.domain
        # other intents carry no belief content from the user side
    return BeliefState(constraints=constraints, requested=requested, active_domain=active)


def clear_answered(belief: BeliefState, system_acts) -> BeliefState:
    """Drop requested slots the system just informed or recommended."""
    constraints, requested = belief._copy()
    for act in system_acts:
        if act.intent in (INFORM, RECOMMEND) and act.domain in requested:
            requested[act.domain].discard(act.slot)
    return BeliefState(constraints=constraints, requested=requested, active_domain=belief.active_domain)


def db_counts(belief: BeliefState, db: EntityDatabase, ontology: Ontology) -> dict[str, int]:
    return {
        d.name: len(db.query(d.name, belief.effective_constraints(d.name)))
        for d in ontology.domains
    }


@dataclass(frozen=True)
class DialogState:
    belief: BeliefState
    db_counts: dict[str, int]
    user_acts: frozenset[DelexAct] = field(default_factory=frozenset)
    last_system_acts: frozenset[DelexAct] = field(default_factory=frozenset)


def bucket_of(count: int) -> int:
    for i, (lo, hi) in enumerate(DB_BUCKETS):
        if count >= lo and (hi is None or count <= hi):
            return i
    raise ValueError(count)


class StateVectorizer:
    """Fixed binary layout over belief, DB buckets, and act multi-hots.

    Per informable slot the segment has one bit per known value plus a
    dontcare bit and an "other" bit (constraint present with an out-of-schema
    value); the layout is stable for a fixed ontology.
    """

    def __init__(self, ontology: Ontology, user_vocab: ActionVocabulary, system_vocab: ActionVocabulary):
        self.ontology = ontology
        self.user_vocab = user_vocab
        self.system_vocab = system_vocab
        self._segments: list[tuple[str, int, int]] = []
        offset = 0
        self._slot_offsets: dict[tuple[str, str], int] = {}
        for schema in ontology.domains:
            for slot, values in schema.informable.items():
                width = len(values) + 2
                self._slot_offsets[(schema.name, slot)] = offset
                self._segments.append((f"constraint:{schema.name}.{slot}", offset, width))
                offset += width
        self._request_offsets: dict[tuple[str, str], int] = {}
        for schema in ontology.domains:
            for slot in schema.requestable:
                self._request_offsets[(schema.name, slot)] = offset
                self._segments.append((f"requested:{schema.name}.{slot}", offset, 1))
                offset += 1
        self._db_offsets: dict[str, int] = {}
        for schema in ontology.domains:
            self._db_offsets[schema.name] = offset
            self._segments.append((f"db_bucket:{schema.name}", offset, len(DB_BUCKETS)))
            offset += len(DB_BUCKETS)
        self._active_offset = offset
        self._segments.append(("active_domain", offset, len(ontology.domains)))
        offset += len(ontology.domains)
        self._user_offset = offset
        self._segments.append(("user_acts", offset, len(user_vocab)))
        offset += len(user_vocab)
        self._system_offset = offset
        self._segments.append(("last_system_acts", offset, len(system_vocab)))
        offset += len(system_vocab)
        self.m = offset

    def vectorize(self, state: DialogState) -> np.ndarray:
        v = np.zeros(self.m)
        for schema in self.ontology.domains:
            cons = state.belief.constraints.get(schema.name, {})
            for slot, values in schema.informable.items():
                if slot not in cons:
                    continue
                base = self._slot_offsets[(schema.name, slot)]
                value = cons[slot]
                if value == DONTCARE:
                    v[base + len(values)] = 1.0
                elif value in values:
                    v[base + values.index(value)] = 1.0
                else:
                    v[base + len(values) + 1] = 1.0
            for slot in state.belief.requested.get(schema.name, ()):
                if (schema.name, slot) in self._request_offsets:
                    v[self._request_offsets[(schema.name, slot)]] = 1.0
            count = state.db_counts.get(schema.name, 0)
            v[self._db_offsets[schema.name] + bucket_of(count)] = 1.0
        if state.belief.active_domain in self.ontology.domain_names:
            v[self._active_offset + self.ontology.domain_names.index(state.belief.active_domain)] = 1.0
        for act in state.user_acts:
            if act in self.user_vocab:
                v[self._user_offset + self.user_vocab.index_of(act)] = 1.0
        for act in state.last_system_acts:
            if act in self.system_vocab:
                v[self._system_offset + self.system_vocab.index_of(act)] = 1.0
        return v

    def layout_doc(self) -> str:
        lines = [f"state vector length m = {self.m}", "segment\toffset\twidth"]
        for name, offset, width in self._segments:
            lines.append(f"{name}\t{offset}\t{width}")
        return "\n".join(lines) + "\n"
