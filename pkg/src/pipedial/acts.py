"""Dialog-act data model, the delexicalized action vocabulary, lexicalization,
and act-set precision/recall/F1."""

from __future__ import annotations

from dataclasses import dataclass
from functools import total_ordering

from .ontology import NAME_SLOT, Ontology

INFORM = "inform"
REQUEST = "request"
RECOMMEND = "recommend"
NOOFFER = "nooffer"
SELECT = "select"
GREET = "greet"
BYE = "bye"
REQMORE = "reqmore"

INTENTS = (INFORM, REQUEST, RECOMMEND, NOOFFER, SELECT, GREET, BYE, REQMORE)
GENERAL_DOMAIN = "general"
GENERAL_INTENTS = (GREET, BYE, REQMORE)
VALUED_INTENTS = (INFORM, RECOMMEND, SELECT)
DONTCARE = "any"


@dataclass(frozen=True, order=True)
class DelexAct:
    """Value-free dialog act; the policy's action atom.

    Ordering is structural on (intent, domain, slot) so vocabulary indices
    are stable for a fixed ontology.
    """

    intent: str
    domain: str
    slot: str = ""

    def render(self) -> str:
        return f"{self.intent.capitalize()}-{self.domain.capitalize()}-{(self.slot or 'none').capitalize()}"


@total_ordering
@dataclass(frozen=True)
class DialogAct:
    """Atomic semantic unit of a turn: (intent, domain, slot, value)."""

    intent: str
    domain: str
    slot: str = ""
    value: str = ""

    def __post_init__(self):
        if self.intent not in INTENTS:
            raise ValueError(f"unknown intent {self.intent!r}")
        if self.intent == REQUEST and self.value:
            raise ValueError("request acts carry no value")
        if self.intent in GENERAL_INTENTS and (self.slot or self.value):
            raise ValueError(f"{self.intent} acts carry neither slot nor value")

    def _key(self):
        return (self.intent, self.domain, self.slot, self.value)

    def __lt__(self, other: "DialogAct"):
        return self._key() < other._key()

    def render(self) -> str:
        """Canonical textual form Intent-Domain-Slot-Value (value '?' when absent)."""
        slot = (self.slot or "none").capitalize()
        value = self.value if self.value else "?"
        return f"{self.intent.capitalize()}-{self.domain.capitalize()}-{slot}-{value}"

    @classmethod
    def parse(cls, text: str) -> "DialogAct":
        intent, domain, slot, value = text.split("-", 3)
        slot = "" if slot.lower() == "none" else slot.lower()
        value = "" if value == "?" else value
        return cls(intent.lower(), domain.lower(), slot, value)


def delexicalize(act: DialogAct) -> DelexAct:
    """Drop the value field only."""
    return DelexAct(act.intent, act.domain, act.slot)


class ActionVocabulary:
    """Ordered, bijective index over the DelexActs valid for one side.

    System side: inform over every entity slot, request over informables,
    recommend by name, select over informables, nooffer, plus general acts.
    User side: inform over informables, request over requestables, greet/bye.
    """

    def __init__(self, acts: tuple[DelexAct, ...]):
        self._acts = acts
        self._index = {a: i for i, a in enumerate(acts)}
        if len(self._index) != len(acts):
            raise ValueError("duplicate acts in vocabulary")

    @classmethod
    def build(cls, ontology: Ontology, side: str) -> "ActionVocabulary":
        acts: set[DelexAct] = set()
        for schema in ontology.domains:
            informable = tuple(schema.informable)
            if side == "system":
                for slot in informable + schema.requestable:
                    acts.add(DelexAct(INFORM, schema.name, slot))
                for slot in informable:
                    acts.add(DelexAct(REQUEST, schema.name, slot))
                    acts.add(DelexAct(SELECT, schema.name, slot))
                acts.add(DelexAct(RECOMMEND, schema.name, NAME_SLOT))
                acts.add(DelexAct(NOOFFER, schema.name))
            elif side == "user":
                for slot in informable:
                    acts.add(DelexAct(INFORM, schema.name, slot))
                for slot in schema.requestable:
                    acts.add(DelexAct(REQUEST, schema.name, slot))
            else:
                raise ValueError(f"unknown side {side!r}")
        if side == "system":
            for intent in GENERAL_INTENTS:
                acts.add(DelexAct(intent, GENERAL_DOMAIN))
        else:
            acts.add(DelexAct(GREET, GENERAL_DOMAIN))
            acts.add(DelexAct(BYE, GENERAL_DOMAIN))
        return cls(tuple(sorted(acts)))

    def __len__(self) -> int:
        return len(self._acts)

    def __iter__(self):
        return iter(self._acts)

    def __contains__(self, act: DelexAct) -> bool:
        return act in self._index

    def act_at(self, index: int) -> DelexAct:
        return self._acts[index]

    def index_of(self, act: DelexAct) -> int:
        return self._index[act]

    def indices_of(self, acts) -> list[int]:
        return [self._index[a] for a in acts]


def lexicalize(delex_acts, belief, db_result: list[dict[str, str]]) -> list[DialogAct]:
    """Fill values for a system act list against the active-domain DB result.

    Inform/recommend/select on the active domain take the first matching
    entity's value; otherwise the tracked constraint for the act's own domain
    fills in; acts whose slot has no available value are dropped.  Requests
    and general acts pass through valueless.  `belief` only needs
    `.constraints` (domain -> slot -> value) and `.active_domain`.
    """
    out: list[DialogAct] = []
    first = db_result[0] if db_result else None
    for act in delex_acts:
        if act.intent in VALUED_INTENTS:
            value = None
            if act.domain == belief.active_domain and first is not None and act.slot in first:
                value = first[act.slot]
            else:
                tracked = belief.constraints.get(act.domain, {}).get(act.slot)
                if tracked is not None and tracked != DONTCARE:
                    value = tracked
            if value is None:
                continue
            out.append(DialogAct(act.intent, act.domain, act.slot, value))
        else:
            out.append(DialogAct(act.intent, act.domain, act.slot))
    return out


def act_f1(predicted, gold) -> tuple[float, float, float]:
    """Exact-match set precision/recall/F1 on (intent, domain, slot, value).

    Both sets empty counts as a perfect match (1, 1, 1).
    """
    predicted = set(predicted)
    gold = set(gold)
    if not predicted and not gold:
        return (1.0, 1.0, 1.0)
    tp = len(predicted & gold)
    precision = tp / len(predicted) if predicted else 0.0
    recall = tp / len(gold) if gold else 0.0
    if precision + recall == 0.0:
        return (precision, recall, 0.0)
    return (precision, recall, 2.0 * precision * recall / (precision + recall))
