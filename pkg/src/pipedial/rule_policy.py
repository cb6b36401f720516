"""Hand-written system policy: answers outstanding requests, offers an entity
once constraints are in, narrows with a request when the match set is large.

Serves three roles: the oracle ceiling system, the source of imitation
demonstrations, and a calibration baseline.
"""

from __future__ import annotations

from .acts import (
    BYE,
    GENERAL_DOMAIN,
    GREET,
    INFORM,
    NOOFFER,
    RECOMMEND,
    REQMORE,
    REQUEST,
    DelexAct,
)
from .dst import BeliefState
from .ontology import NAME_SLOT, Ontology

NARROW_THRESHOLD = 3


class RuleSystemPolicy:
    symbolic = True

    def __init__(self, ontology: Ontology, max_acts: int = 6):
        self.ontology = ontology
        self.max_acts = max_acts
        self._offered_under: dict[str, dict[str, str]] = {}

    def reset(self) -> None:
        self._offered_under = {}

    def decide(self, belief: BeliefState, db_result, user_acts) -> list[DelexAct]:
        intents = {a.intent for a in user_acts}
        if BYE in intents:
            return [DelexAct(BYE, GENERAL_DOMAIN)]
        if intents and intents <= {GREET}:
            return [DelexAct(GREET, GENERAL_DOMAIN)]
        domain = belief.active_domain
        if domain is None:
            return [DelexAct(REQMORE, GENERAL_DOMAIN)]
        constraints = belief.constraints.get(domain, {})
        if constraints and not db_result:
            return [DelexAct(NOOFFER, domain)]
        acts: list[DelexAct] = []
        for slot in sorted(belief.requested.get(domain, ())):
            acts.append(DelexAct(INFORM, domain, slot))
        if constraints and db_result and self._offered_under.get(domain) != constraints:
            acts.append(DelexAct(RECOMMEND, domain, NAME_SLOT))
            self._offered_under[domain] = dict(constraints)
        if len(acts) < 2:
            # many matches left: ask the user to narrow an open slot
            schema = self.ontology.domain(domain)
            open_slots = [s for s in schema.informable if s not in belief.constraints.get(domain, {})]
            if open_slots and len(db_result) > NARROW_THRESHOLD:
                acts.append(DelexAct(REQUEST, domain, open_slots[0]))
        if not acts:
            acts.append(DelexAct(REQMORE, GENERAL_DOMAIN))
        return acts[: self.max_acts]
